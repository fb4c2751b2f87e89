"""Frequency-domain augmentation: inter- and intra-subband shuffles.

Both transforms permute PSD bins, so total energy is conserved exactly and
every augmented sample can be reproduced bit-for-bit by replaying its
recorded plan seed against the origin sample.
"""

import json
import os
import shutil
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds
from .errors import InvalidInputError, PreconditionError
from .specest import DualSpectrum, Spectrum


@dataclass
class ShufflePlan:
    kind: str  # "inter" | "intra"
    seed: int
    subband_permutation: np.ndarray | None = None
    intra_bin_permutations: list = field(default_factory=list)


def make_inter_plan(num_subbands: int, seed: int) -> ShufflePlan:
    rng = np.random.default_rng(seed)
    return ShufflePlan(
        kind="inter", seed=seed, subband_permutation=rng.permutation(num_subbands)
    )


def make_intra_plan(labels: np.ndarray, bins_per_subband: int, seed: int) -> ShufflePlan:
    """Random bin permutation for each occupied subband, identity elsewhere."""
    rng = np.random.default_rng(seed)
    perms = []
    for occupied in labels:
        if occupied:
            perms.append(rng.permutation(bins_per_subband))
        else:
            perms.append(np.arange(bins_per_subband))
    return ShufflePlan(kind="intra", seed=seed, intra_bin_permutations=perms)


def _blocks(psd: np.ndarray, num_subbands: int) -> np.ndarray:
    if psd.size % num_subbands != 0:
        raise InvalidInputError("PSD length not divisible by subband count")
    return psd.reshape(num_subbands, -1)


def inter_subband_shuffle(spectra: DualSpectrum, labels: np.ndarray,
                          plan: ShufflePlan) -> tuple:
    """Reorder whole subband blocks; labels move with their blocks."""
    if plan.kind != "inter":
        raise InvalidInputError("plan kind must be 'inter'")
    n = labels.size
    perm = np.asarray(plan.subband_permutation)
    if perm.size != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InvalidInputError("subband_permutation is not a permutation of [0, N)")

    def apply(spec: Spectrum) -> Spectrum:
        out = _blocks(spec.psd, n)[perm].reshape(-1)
        return Spectrum(psd=out, estimator=spec.estimator, centered=spec.centered)

    return (
        DualSpectrum(mtm=apply(spectra.mtm), pg=apply(spectra.pg)),
        labels[perm].copy(),
    )


def intra_subband_shuffle(spectra: DualSpectrum, labels: np.ndarray,
                          plan: ShufflePlan) -> tuple:
    """Permute bins inside occupied subbands; labels are unchanged."""
    if plan.kind != "intra":
        raise InvalidInputError("plan kind must be 'intra'")
    n = labels.size
    if len(plan.intra_bin_permutations) != n:
        raise InvalidInputError("need one bin permutation per subband")
    bins = spectra.mtm.psd.size // n
    for perm in plan.intra_bin_permutations:
        if np.asarray(perm).size != bins:
            raise InvalidInputError("bin permutation has wrong length")

    def apply(spec: Spectrum) -> Spectrum:
        blocks = _blocks(spec.psd, n).copy()
        for i in range(n):
            if labels[i]:
                blocks[i] = blocks[i][np.asarray(plan.intra_bin_permutations[i])]
        return Spectrum(psd=blocks.reshape(-1), estimator=spec.estimator,
                        centered=spec.centered)

    return DualSpectrum(mtm=apply(spectra.mtm), pg=apply(spectra.pg)), labels.copy()


def apply_plan(mtm: np.ndarray, pg: np.ndarray, labels: np.ndarray,
               plan_kind: str, plan_seed: int) -> tuple:
    """Replay a recorded plan on raw PSD rows; returns (mtm, pg, labels)."""
    spectra = DualSpectrum(
        mtm=Spectrum(psd=mtm, estimator="multitaper"),
        pg=Spectrum(psd=pg, estimator="periodogram"),
    )
    n = labels.size
    if plan_kind == "inter":
        plan = make_inter_plan(n, plan_seed)
        out, out_labels = inter_subband_shuffle(spectra, labels, plan)
    elif plan_kind == "intra":
        plan = make_intra_plan(labels, mtm.size // n, plan_seed)
        out, out_labels = intra_subband_shuffle(spectra, labels, plan)
    else:
        raise InvalidInputError(f"unknown plan kind {plan_kind!r}")
    return out.mtm.psd, out.pg.psd, out_labels


def augment_dataset(dataset_dir: str, out_dir: str, factor_inter: int,
                    factor_intra: int, seed: int) -> dict:
    """Emit originals plus shuffled variants of a preprocessed dataset.

    Output order: for each origin sample, the original, then its inter
    variants, then its intra variants. Provenance goes to aug_meta.jsonl.
    """
    if factor_inter < 0 or factor_intra < 0:
        raise InvalidInputError("augmentation factors must be >= 0")
    psd_meta = ds.load_psd_meta(dataset_dir)
    mtm, pg = ds.load_psd_cache(dataset_dir)
    n = psd_meta["N"]
    labels = ds.load_labels(dataset_dir, n)
    if mtm.shape[0] != labels.shape[0]:
        raise PreconditionError("PSD cache and labels disagree on sample count")

    os.makedirs(out_dir, exist_ok=True)
    try:
        out_mtm, out_pg, out_labels, meta_lines = [], [], [], []
        for idx in range(mtm.shape[0]):
            out_mtm.append(mtm[idx])
            out_pg.append(pg[idx])
            out_labels.append(labels[idx])
            meta_lines.append({"origin_index": idx, "kind": "orig", "plan_seed": 0})
            variants = [("inter", v) for v in range(factor_inter)]
            variants += [("intra", v) for v in range(factor_intra)]
            for kind, v in variants:
                plan_seed = int(
                    np.random.SeedSequence(
                        (seed, idx, 0 if kind == "inter" else 1, v)
                    ).generate_state(1, dtype=np.uint64)[0]
                )
                a_mtm, a_pg, a_labels = apply_plan(
                    mtm[idx], pg[idx], labels[idx], kind, plan_seed
                )
                out_mtm.append(a_mtm)
                out_pg.append(a_pg)
                out_labels.append(a_labels)
                meta_lines.append(
                    {"origin_index": idx, "kind": kind, "plan_seed": plan_seed}
                )

        ds.write_psd_cache(
            out_dir, np.asarray(out_mtm), np.asarray(out_pg),
            {**psd_meta, "augment_seed": seed, "factor_inter": factor_inter,
             "factor_intra": factor_intra},
        )
        np.asarray(out_labels, dtype=np.uint8).tofile(
            os.path.join(out_dir, "labels.u8")
        )
        with open(os.path.join(out_dir, "aug_meta.jsonl"), "w") as f:
            for line in meta_lines:
                f.write(json.dumps(line, sort_keys=True) + "\n")
    except Exception:
        shutil.rmtree(out_dir, ignore_errors=True)
        raise
    return {"num_samples": len(out_labels)}
