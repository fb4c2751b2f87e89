"""Readers and writers for dataset directories and PSD caches.

Layout of a generated dataset directory:
    manifest.json   generation parameters and sample count
    iq.f32          per sample, M interleaved (I, Q) float32 LE pairs
    labels.u8       per sample, N bytes of 0/1
    meta.jsonl      per sample: sample_seed and per-user metadata

A preprocessed dataset additionally carries:
    psd_mtm.f32 / psd_pg.f32   per sample, M float32 LE (linear, centered)
    psd_meta.json              M, W, L and estimator identifiers

Augmented datasets hold PSD caches, labels.u8 and aug_meta.jsonl only.
"""

import json
import os

import numpy as np

from .errors import PreconditionError


def load_manifest(dataset_dir: str) -> dict:
    path = os.path.join(dataset_dir, "manifest.json")
    if not os.path.exists(path):
        raise PreconditionError(f"no manifest.json in {dataset_dir}")
    with open(path) as f:
        return json.load(f)


def load_labels(dataset_dir: str, num_subbands: int) -> np.ndarray:
    path = os.path.join(dataset_dir, "labels.u8")
    if not os.path.exists(path):
        raise PreconditionError(f"no labels.u8 in {dataset_dir}")
    raw = np.fromfile(path, dtype=np.uint8)
    return raw.reshape(-1, num_subbands)


def load_iq(dataset_dir: str, signal_length: int) -> np.ndarray:
    """All IQ records as a (num_samples, M) complex array."""
    path = os.path.join(dataset_dir, "iq.f32")
    if not os.path.exists(path):
        raise PreconditionError(f"no iq.f32 in {dataset_dir}")
    raw = np.fromfile(path, dtype="<f4").reshape(-1, 2 * signal_length)
    return (raw[:, 0::2] + 1j * raw[:, 1::2]).astype(complex)


def load_meta(dataset_dir: str) -> list:
    path = os.path.join(dataset_dir, "meta.jsonl")
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_psd_cache(dataset_dir: str, mtm: np.ndarray, pg: np.ndarray, meta: dict) -> None:
    mtm.astype("<f4").tofile(os.path.join(dataset_dir, "psd_mtm.f32"))
    pg.astype("<f4").tofile(os.path.join(dataset_dir, "psd_pg.f32"))
    with open(os.path.join(dataset_dir, "psd_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def load_psd_meta(dataset_dir: str) -> dict:
    path = os.path.join(dataset_dir, "psd_meta.json")
    if not os.path.exists(path):
        raise PreconditionError(
            f"no PSD cache in {dataset_dir}; run the preprocess command first"
        )
    with open(path) as f:
        return json.load(f)


def load_psd_cache(dataset_dir: str) -> tuple:
    """(mtm, pg) arrays of shape (num_samples, M) in float32."""
    meta = load_psd_meta(dataset_dir)
    m = meta["M"]
    mtm = np.fromfile(os.path.join(dataset_dir, "psd_mtm.f32"), dtype="<f4")
    pg = np.fromfile(os.path.join(dataset_dir, "psd_pg.f32"), dtype="<f4")
    return mtm.reshape(-1, m), pg.reshape(-1, m)


def load_aug_meta(dataset_dir: str) -> list:
    path = os.path.join(dataset_dir, "aug_meta.jsonl")
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
