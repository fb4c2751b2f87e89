"""Deterministic generation of labeled multi-user wideband IQ datasets.

A wideband record of length M covers N equal subbands. Each active user is
a narrowband RRC-shaped signal synthesized at the subband rate, interpolated
to the full rate with a Kaiser-windowed sinc low-pass, mixed to its subband
center, and power-scaled so its in-band SNR against the noise share of one
subband matches the configured value. Noise and (optionally) multipath
fading are applied to the superposition.

Everything is a pure function of the configuration and seeds: sample i of a
dataset is derived from SeedSequence((master_seed, i)) and can be rebuilt in
isolation.
"""

import functools
import json
import math
import os
import shutil
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

from .errors import ConfigurationError, InvalidInputError

MODULATIONS = (
    "BPSK",
    "QPSK",
    "8PSK",
    "OQPSK",
    "16PSK",
    "4PAM",
    "8PAM",
    "16QAM",
    "32QAM",
    "64QAM",
)

# Total wideband noise power; one subband's share is NOISE_POWER / N.
NOISE_POWER = 1.0

RRC_SPAN_SYMBOLS = 8
KAISER_STOPBAND_DB = 80.0
# Transition band of the interpolation low-pass, as a fraction of one
# subband's width.
KAISER_TRANSITION_FRAC = 0.1


# ------------------------------------------------------------------- config


@dataclass
class ChannelModel:
    kind: str = "awgn"
    path_delays: tuple = (0.0,)
    path_gains_db: tuple = (0.0,)
    rician_k: float = 3.0
    channel_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh", "rician"):
            raise ConfigurationError(f"unknown channel kind {self.kind!r}")
        delays = np.asarray(self.path_delays, dtype=float)
        gains = np.asarray(self.path_gains_db, dtype=float)
        if delays.size != gains.size:
            raise ConfigurationError("path_delays and path_gains_db lengths differ")
        if delays.size == 0 or delays[0] != 0.0:
            raise ConfigurationError("path_delays must start at 0")
        if np.any(np.diff(delays) <= 0):
            raise ConfigurationError("path_delays must be strictly increasing")
        self.path_delays = tuple(delays.tolist())
        self.path_gains_db = tuple(gains.tolist())

    def to_dict(self):
        return {
            "kind": self.kind,
            "path_delays": list(self.path_delays),
            "path_gains_db": list(self.path_gains_db),
            "rician_k": self.rician_k,
            "channel_seed": self.channel_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GenerationConfig:
    signal_length: int = 32768
    num_subbands: int = 16
    modulation_set: tuple = MODULATIONS
    rolloff: float = 0.2
    sps_choices: tuple = (4, 6, 8)
    snr_mode: str = "fixed-grid"  # fixed-grid | per-user-random | both
    snr_range_db: tuple = (-20.0, 20.0)
    snr_step_db: float = 2.0
    samples_per_snr: int = 100
    num_random_samples: int | None = None
    channel: ChannelModel = field(default_factory=ChannelModel)
    master_seed: int = 0

    def __post_init__(self):
        if self.signal_length <= 0 or self.num_subbands <= 0:
            raise ConfigurationError("signal_length and num_subbands must be positive")
        if self.signal_length % self.num_subbands != 0:
            raise ConfigurationError("signal_length must be divisible by num_subbands")
        if not self.modulation_set:
            raise ConfigurationError("modulation_set is empty")
        for mod in self.modulation_set:
            if mod not in MODULATIONS:
                raise ConfigurationError(f"unknown modulation {mod!r}")
        if not 0.0 < self.rolloff < 1.0:
            raise ConfigurationError("rolloff must be in (0, 1)")
        if any(sps < 2 for sps in self.sps_choices):
            raise ConfigurationError("every sps must be >= 2")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ConfigurationError("snr_range_db low > high")
        if self.snr_mode not in ("fixed-grid", "per-user-random", "both"):
            raise ConfigurationError(f"unknown snr_mode {self.snr_mode!r}")
        if self.samples_per_snr <= 0:
            raise ConfigurationError("samples_per_snr must be positive")
        self.modulation_set = tuple(self.modulation_set)
        self.sps_choices = tuple(int(s) for s in self.sps_choices)
        self.snr_range_db = (float(self.snr_range_db[0]), float(self.snr_range_db[1]))

    @property
    def snr_grid(self) -> np.ndarray:
        lo, hi = self.snr_range_db
        n = int(round((hi - lo) / self.snr_step_db)) + 1
        return lo + self.snr_step_db * np.arange(n)

    @property
    def num_samples(self) -> int:
        grid_count = len(self.snr_grid) * self.samples_per_snr
        rand_count = self.num_random_samples
        if rand_count is None:
            rand_count = grid_count
        if self.snr_mode == "fixed-grid":
            return grid_count
        if self.snr_mode == "per-user-random":
            return rand_count
        return grid_count + rand_count

    def to_dict(self):
        return {
            "signal_length": self.signal_length,
            "num_subbands": self.num_subbands,
            "modulation_set": list(self.modulation_set),
            "rolloff": self.rolloff,
            "sps_choices": list(self.sps_choices),
            "snr_mode": self.snr_mode,
            "snr_range_db": list(self.snr_range_db),
            "snr_step_db": self.snr_step_db,
            "samples_per_snr": self.samples_per_snr,
            "num_random_samples": self.num_random_samples,
            "channel": self.channel.to_dict(),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("channel"), dict):
            d["channel"] = ChannelModel.from_dict(d["channel"])
        return cls(**d)


@dataclass
class UserSpec:
    subband_index: int
    modulation: str
    sps: int
    snr_db: float
    symbol_seed: int


@dataclass
class WidebandSample:
    iq: np.ndarray
    labels: np.ndarray
    users: list
    applied_channel: str
    sample_seed: int


# -------------------------------------------------------------- modulation


def _psk_points(order: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(order) / order)


def _qam_points(levels) -> np.ndarray:
    re, im = np.meshgrid(levels, levels)
    pts = (re + 1j * im).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def _pam_points(order: int) -> np.ndarray:
    levels = np.arange(-(order - 1), order, 2).astype(float)
    return (levels / np.sqrt(np.mean(levels**2))).astype(complex)


def _cross32_points() -> np.ndarray:
    levels = np.array([-5.0, -3.0, -1.0, 1.0, 3.0, 5.0])
    re, im = np.meshgrid(levels, levels)
    pts = (re + 1j * im).ravel()
    pts = pts[~((np.abs(pts.real) == 5.0) & (np.abs(pts.imag) == 5.0))]
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def constellation(modulation: str) -> np.ndarray:
    """Unit-average-power alphabet of a modulation scheme."""
    table = {
        "BPSK": np.array([1.0 + 0j, -1.0 + 0j]),  # bit 0 -> +1, bit 1 -> -1
        "QPSK": _psk_points(4) * np.exp(1j * np.pi / 4),
        "OQPSK": _psk_points(4) * np.exp(1j * np.pi / 4),
        "8PSK": _psk_points(8),
        "16PSK": _psk_points(16),
        "4PAM": _pam_points(4),
        "8PAM": _pam_points(8),
        "16QAM": _qam_points(np.array([-3.0, -1.0, 1.0, 3.0])),
        "32QAM": _cross32_points(),
        "64QAM": _qam_points(np.array([-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0])),
    }
    if modulation not in table:
        raise ConfigurationError(f"unknown modulation {modulation!r}")
    return table[modulation]


def modulate_symbols(modulation: str, num_symbols: int, seed: int) -> np.ndarray:
    """Draw a unit-average-power symbol sequence deterministically from seed."""
    if num_symbols < 1:
        raise ConfigurationError("num_symbols must be >= 1")
    points = constellation(modulation)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(points), size=num_symbols)
    return points[idx]


# ----------------------------------------------------------- pulse shaping


def rrc_taps(rolloff: float, sps: int, span_symbols: int) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response."""
    if not 0.0 < rolloff < 1.0:
        raise ConfigurationError("rolloff must be in (0, 1)")
    if sps < 2:
        raise ConfigurationError("sps must be >= 2")
    if span_symbols < 6 or span_symbols % 2 != 0:
        raise ConfigurationError("span_symbols must be even and >= 6")
    a = rolloff
    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps  # in symbol periods
    taps = np.empty(n)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - a + 4.0 * a / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * a)) < 1e-9:
            taps[i] = (a / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * a))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * a))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - a)) + 4.0 * a * ti * np.cos(
                np.pi * ti * (1.0 + a)
            )
            den = np.pi * ti * (1.0 - (4.0 * a * ti) ** 2)
            taps[i] = num / den
    taps /= np.sqrt(sps)
    return taps / np.sqrt(np.sum(taps**2))


@functools.lru_cache(maxsize=None)
def _interp_filter(num_subbands: int) -> np.ndarray:
    """Kaiser-windowed sinc low-pass used to interpolate by num_subbands."""
    width = KAISER_TRANSITION_FRAC / num_subbands  # cycles/sample at full rate
    numtaps, beta = sp_signal.kaiserord(KAISER_STOPBAND_DB, width / 0.5)
    numtaps += (numtaps + 1) % 2  # force odd for integer group delay
    return sp_signal.firwin(
        numtaps, 0.5 / num_subbands, window=("kaiser", beta), fs=1.0
    )


def subband_center(subband_index: int, num_subbands: int) -> float:
    """Normalized center frequency of a subband, in cycles/sample."""
    return (subband_index + 0.5) / num_subbands - 0.5


def _shaped_baseband(user: UserSpec, cfg: GenerationConfig) -> np.ndarray:
    """RRC-shaped complex baseband at the subband rate, length M/N."""
    nb_len = cfg.signal_length // cfg.num_subbands
    nsym = math.ceil(nb_len / user.sps) + RRC_SPAN_SYMBOLS
    symbols = modulate_symbols(user.modulation, nsym, user.symbol_seed)
    taps = rrc_taps(cfg.rolloff, user.sps, RRC_SPAN_SYMBOLS)
    delay = (len(taps) - 1) // 2

    up = np.zeros(nsym * user.sps, dtype=complex)
    if user.modulation == "OQPSK":
        # Half-symbol quadrature offset applied at pulse shaping.
        up[:: user.sps] = symbols.real
        upq = np.zeros_like(up)
        upq[:: user.sps] = symbols.imag
        up[user.sps // 2 :] = up[user.sps // 2 :] + 1j * upq[: -(user.sps // 2)]
    else:
        up[:: user.sps] = symbols
    shaped = np.convolve(up, taps)
    return shaped[delay : delay + nb_len]


def synthesize_user(user: UserSpec, cfg: GenerationConfig) -> np.ndarray:
    """Full-rate, subband-centered, power-calibrated signal of one user."""
    occupied_bw = (1.0 + cfg.rolloff) / user.sps  # fraction of subband rate
    if occupied_bw > 1.0:
        raise ConfigurationError(
            f"signal bandwidth {occupied_bw:.3f} exceeds its subband "
            f"(sps={user.sps}, rolloff={cfg.rolloff})"
        )
    n = cfg.num_subbands
    baseband = _shaped_baseband(user, cfg)

    # Interpolate by N: zero-stuff then Kaiser low-pass with gain N.
    stuffed = np.zeros(len(baseband) * n, dtype=complex)
    stuffed[::n] = baseband
    lp = _interp_filter(n)
    delay = (len(lp) - 1) // 2
    full = sp_signal.fftconvolve(stuffed, lp)[delay : delay + cfg.signal_length]
    full *= n

    m = np.arange(cfg.signal_length)
    full = full * np.exp(2j * np.pi * subband_center(user.subband_index, n) * m)

    target_power = 10.0 ** (user.snr_db / 10.0) * NOISE_POWER / n
    power = np.mean(np.abs(full) ** 2)
    if power > 0:
        full *= np.sqrt(target_power / power)
    return full


# ----------------------------------------------------------------- channel


def apply_awgn(signal: np.ndarray, noise_power: float, seed: int) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of the given power."""
    if noise_power < 0:
        raise ConfigurationError("noise_power must be >= 0")
    if noise_power == 0:
        return signal.copy()
    rng = np.random.default_rng(seed)
    scale = np.sqrt(noise_power / 2.0)
    noise = scale * (
        rng.standard_normal(len(signal)) + 1j * rng.standard_normal(len(signal))
    )
    return signal + noise


def draw_path_gains(channel: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    """One realization of complex per-path gains with configured mean powers."""
    lin = 10.0 ** (np.asarray(channel.path_gains_db) / 10.0)
    npaths = lin.size
    scatter = np.sqrt(0.5) * (
        rng.standard_normal(npaths) + 1j * rng.standard_normal(npaths)
    )
    if channel.kind == "rayleigh":
        g = scatter
    elif channel.kind == "rician":
        k = channel.rician_k
        phase = np.exp(2j * np.pi * rng.random(npaths))
        g = np.sqrt(k / (k + 1.0)) * phase + np.sqrt(1.0 / (k + 1.0)) * scatter
    else:
        raise InvalidInputError("multipath requires rayleigh or rician kind")
    return np.sqrt(lin) * g


def _fractional_delay(signal: np.ndarray, delay: float) -> np.ndarray:
    """Delay by a (possibly fractional) number of samples, 2-tap linear interp."""
    base = int(np.floor(delay))
    frac = delay - base

    def shift(x, k):
        if k == 0:
            return x
        out = np.zeros_like(x)
        out[k:] = x[: len(x) - k]
        return out

    out = (1.0 - frac) * shift(signal, base)
    if frac > 0:
        out += frac * shift(signal, base + 1)
    return out


def apply_multipath(signal: np.ndarray, channel: ChannelModel) -> np.ndarray:
    """Tapped-delay-line fading; output renormalized to the input power."""
    if channel.kind == "awgn":
        raise InvalidInputError("apply_multipath needs a fading channel")
    rng = np.random.default_rng(channel.channel_seed)
    gains = draw_path_gains(channel, rng)
    out = np.zeros_like(signal)
    for gain, delay in zip(gains, channel.path_delays):
        out += gain * _fractional_delay(signal, delay)
    p_in = np.mean(np.abs(signal) ** 2)
    p_out = np.mean(np.abs(out) ** 2)
    if p_out > 0 and p_in > 0:
        out *= np.sqrt(p_in / p_out)
    return out


# ---------------------------------------------------------------- assembly


def assemble_wideband(users: list, cfg: GenerationConfig, *, noise_seed: int,
                      channel_seed: int | None = None,
                      sample_seed: int = 0) -> WidebandSample:
    """Superpose user signals, apply the channel, add noise, build labels."""
    if not 1 <= len(users) <= cfg.num_subbands:
        raise InvalidInputError("user count must be in [1, N]")
    indices = [u.subband_index for u in users]
    if len(set(indices)) != len(indices):
        raise InvalidInputError("duplicate subband index")

    iq = np.zeros(cfg.signal_length, dtype=complex)
    for user in users:
        iq += synthesize_user(user, cfg)

    if cfg.channel.kind != "awgn":
        chan = ChannelModel(
            kind=cfg.channel.kind,
            path_delays=cfg.channel.path_delays,
            path_gains_db=cfg.channel.path_gains_db,
            rician_k=cfg.channel.rician_k,
            channel_seed=channel_seed if channel_seed is not None else cfg.channel.channel_seed,
        )
        iq = apply_multipath(iq, chan)

    iq = apply_awgn(iq, NOISE_POWER, noise_seed)

    labels = np.zeros(cfg.num_subbands, dtype=np.uint8)
    labels[indices] = 1
    return WidebandSample(
        iq=iq,
        labels=labels,
        users=list(users),
        applied_channel=cfg.channel.kind,
        sample_seed=sample_seed,
    )


def _sample_snrs(cfg: GenerationConfig, sample_index: int) -> float | None:
    """Grid SNR for this index, or None when users draw their own."""
    grid = cfg.snr_grid
    grid_count = len(grid) * cfg.samples_per_snr
    if cfg.snr_mode == "per-user-random":
        return None
    if cfg.snr_mode == "both" and sample_index >= grid_count:
        return None
    return float(grid[sample_index // cfg.samples_per_snr])


def generate_sample(cfg: GenerationConfig, sample_index: int) -> WidebandSample:
    """Build sample `sample_index`; depends only on cfg and the index."""
    ss = np.random.SeedSequence((cfg.master_seed, sample_index))
    sample_seed = int(ss.generate_state(1, dtype=np.uint64)[0])
    rng = np.random.default_rng(np.random.SeedSequence((sample_seed, 0)))

    n = cfg.num_subbands
    num_users = int(rng.integers(1, n + 1))
    subbands = rng.choice(n, size=num_users, replace=False)
    grid_snr = _sample_snrs(cfg, sample_index)

    users = []
    for k, sb in enumerate(subbands):
        mod = cfg.modulation_set[int(rng.integers(0, len(cfg.modulation_set)))]
        sps = cfg.sps_choices[int(rng.integers(0, len(cfg.sps_choices)))]
        if grid_snr is None:
            snr = float(rng.uniform(*cfg.snr_range_db))
        else:
            snr = grid_snr
        symbol_seed = int(
            np.random.SeedSequence((sample_seed, 1, k)).generate_state(1, dtype=np.uint64)[0]
        )
        users.append(UserSpec(int(sb), mod, int(sps), snr, symbol_seed))

    noise_seed = int(
        np.random.SeedSequence((sample_seed, 2)).generate_state(1, dtype=np.uint64)[0]
    )
    channel_seed = int(
        np.random.SeedSequence((sample_seed, 3)).generate_state(1, dtype=np.uint64)[0]
    )
    return assemble_wideband(
        users, cfg, noise_seed=noise_seed, channel_seed=channel_seed,
        sample_seed=sample_seed,
    )


# ------------------------------------------------------------ dataset files


def generate_dataset(cfg: GenerationConfig, out_dir: str) -> dict:
    """Write manifest.json, iq.f32, labels.u8, meta.jsonl; returns manifest."""
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, ".partial")
    with open(marker, "w") as f:
        f.write("in progress\n")

    total = cfg.num_samples
    manifest = {
        "version": 1,
        "M": cfg.signal_length,
        "N": cfg.num_subbands,
        "modulations": list(cfg.modulation_set),
        "rolloff": cfg.rolloff,
        "sps_choices": list(cfg.sps_choices),
        "snr_mode": cfg.snr_mode,
        "snr_range_db": list(cfg.snr_range_db),
        "snr_step_db": cfg.snr_step_db,
        "samples_per_snr": cfg.samples_per_snr,
        "channel": cfg.channel.to_dict(),
        "master_seed": cfg.master_seed,
        "num_samples": total,
    }
    try:
        with open(os.path.join(out_dir, "iq.f32"), "wb") as fiq, open(
            os.path.join(out_dir, "labels.u8"), "wb"
        ) as flab, open(os.path.join(out_dir, "meta.jsonl"), "w") as fmeta:
            for idx in range(total):
                sample = generate_sample(cfg, idx)
                interleaved = np.empty(2 * cfg.signal_length, dtype="<f4")
                interleaved[0::2] = sample.iq.real
                interleaved[1::2] = sample.iq.imag
                fiq.write(interleaved.tobytes())
                flab.write(sample.labels.astype(np.uint8).tobytes())
                meta = {
                    "sample_seed": sample.sample_seed,
                    "users": [
                        {
                            "subband_index": u.subband_index,
                            "modulation": u.modulation,
                            "sps": u.sps,
                            "snr_db": u.snr_db,
                        }
                        for u in sample.users
                    ],
                }
                fmeta.write(json.dumps(meta, sort_keys=True) + "\n")
        with open(os.path.join(out_dir, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
    except Exception:
        shutil.rmtree(out_dir, ignore_errors=True)
        raise
    os.remove(marker)
    return manifest
