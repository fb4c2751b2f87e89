"""Periodogram and multitaper power-spectrum estimators.

Both estimators return centered linear-power vectors of the input length.
Slepian tapers are obtained from the symmetric tridiagonal formulation of
the spectral concentration problem; each taper's concentration (in-band
energy fraction over |f| <= W) is evaluated exactly through the sinc-kernel
quadratic form, computed as a Toeplitz matrix-vector product via FFT.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, ShapeError


@dataclass
class Spectrum:
    psd: np.ndarray
    estimator: str
    centered: bool = True


@dataclass
class DualSpectrum:
    mtm: Spectrum
    pg: Spectrum


@dataclass
class TaperBank:
    m: int
    half_bandwidth: float
    num_tapers: int
    tapers: np.ndarray  # (L, M)
    energies: np.ndarray
    weights: np.ndarray
    concentrations: np.ndarray


def dft(signal: np.ndarray) -> np.ndarray:
    """Unnormalized DFT, Y[k] = sum_m y[m] exp(-j 2 pi k m / M)."""
    return np.fft.fft(np.asarray(signal))


def periodogram(signal: np.ndarray) -> Spectrum:
    """Squared-magnitude DFT, zero frequency shifted to index M/2."""
    signal = np.asarray(signal)
    if signal.size < 2 or signal.size % 2 != 0:
        raise ShapeError("periodogram needs even length >= 2")
    psd = np.fft.fftshift(np.abs(dft(signal)) ** 2)
    return Spectrum(psd=psd, estimator="periodogram")


def _fix_polarity(tapers: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: even tapers have positive mean, odd
    tapers a positive slope against the centered time axis."""
    m = tapers.shape[1]
    t = np.arange(m) - (m - 1) / 2.0
    for order in range(tapers.shape[0]):
        if order % 2 == 0:
            ref = tapers[order].sum()
        else:
            ref = (t * tapers[order]).sum()
        if ref < 0:
            tapers[order] = -tapers[order]
    return tapers


def _concentrations(tapers: np.ndarray, w: float) -> np.ndarray:
    """In-band energy fraction of each unit-energy taper over |f| <= w.

    lam = v^T A v with A[m, n] = sin(2 pi w (m - n)) / (pi (m - n)) and
    diagonal 2w; the Toeplitz product is evaluated by FFT convolution.
    """
    m = tapers.shape[1]
    d = np.arange(-(m - 1), m, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = np.sin(2.0 * np.pi * w * d) / (np.pi * d)
    kern[m - 1] = 2.0 * w
    lams = np.empty(tapers.shape[0])
    for i, v in enumerate(tapers):
        av = sp_signal.fftconvolve(v, kern)[m - 1 : 2 * m - 1]
        lams[i] = float(v @ av)
    return lams


def dpss_tapers(m: int, w: float, l: int, cache_dir: str | None = None) -> TaperBank:
    """The first `l` discrete prolate spheroidal sequences of length `m`.

    Raises a configuration error when `l` exceeds floor(2 m w), the maximum
    number of usefully concentrated orthogonal tapers.
    """
    if not 0.0 < w < 0.5:
        raise ConfigurationError("half-bandwidth must be in (0, 0.5)")
    max_tapers = int(np.floor(2.0 * m * w))
    if not 1 <= l <= max_tapers:
        raise ConfigurationError(
            f"num_tapers={l} outside [1, floor(2MW)={max_tapers}]"
        )

    if cache_dir is not None:
        key = f"dpss_m{m}_w{w:.12g}_l{l}.npz"
        path = os.path.join(cache_dir, key)
        if os.path.exists(path):
            data = np.load(path)
            return TaperBank(
                m=m, half_bandwidth=w, num_tapers=l,
                tapers=data["tapers"], energies=data["energies"],
                weights=data["weights"], concentrations=data["concentrations"],
            )

    idx = np.arange(m, dtype=float)
    diag = ((m - 1) / 2.0 - idx) ** 2 * np.cos(2.0 * np.pi * w)
    off = idx[1:] * (m - idx[1:]) / 2.0
    # Top-l eigenpairs of the tridiagonal concentration operator.
    _, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(m - l, m - 1))
    tapers = vecs.T[::-1].copy()  # decreasing concentration order
    tapers /= np.sqrt(np.sum(tapers**2, axis=1, keepdims=True))
    tapers = _fix_polarity(tapers)

    energies = np.sum(tapers**2, axis=1)
    weights = energies / energies.sum()
    concentrations = _concentrations(tapers, w)

    bank = TaperBank(
        m=m, half_bandwidth=w, num_tapers=l, tapers=tapers,
        energies=energies, weights=weights, concentrations=concentrations,
    )
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        np.savez(
            path, tapers=tapers, energies=energies, weights=weights,
            concentrations=concentrations,
        )
    return bank


def mtm_psd(signal: np.ndarray, bank: TaperBank) -> Spectrum:
    """Energy-weighted average of tapered eigenspectra, centered."""
    signal = np.asarray(signal)
    if signal.size != bank.m:
        raise ShapeError(f"signal length {signal.size} != taper length {bank.m}")
    eigenspectra = np.abs(np.fft.fft(bank.tapers * signal[None, :], axis=1)) ** 2
    psd = (bank.weights[:, None] * eigenspectra).sum(axis=0) / bank.weights.sum()
    return Spectrum(psd=np.fft.fftshift(psd), estimator="multitaper")


def dual_representation(signal: np.ndarray, bank: TaperBank) -> DualSpectrum:
    """Both spectrum representations of one signal."""
    return DualSpectrum(mtm=mtm_psd(signal, bank), pg=periodogram(signal))
