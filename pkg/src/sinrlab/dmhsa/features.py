"""Per-user input features, padding and attention masks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, InvalidUv

PHASE_SCALE = math.pi / math.sqrt(3.0)  # std of a phase uniform on (-pi, pi)


@dataclass
class FeatureMatrix:
    rows: np.ndarray  # (n_beams, feature_dim), zero beyond the valid users
    valid: np.ndarray  # (n_beams,) bool padding mask

    @property
    def n_sched(self) -> int:
        return int(self.valid.sum())


def padding_mask(n_sched: int, n_beams: int) -> np.ndarray:
    if not 0 <= n_sched <= n_beams:
        raise DimensionMismatch(f"{n_sched} users do not fit {n_beams} slots")
    m = np.zeros(n_beams, dtype=bool)
    m[:n_sched] = True
    return m


def _pad(rows: np.ndarray, n_beams: int) -> FeatureMatrix:
    k = rows.shape[0]
    valid = padding_mask(k, n_beams)
    out = np.zeros((n_beams, rows.shape[1]))
    out[:k] = rows
    return FeatureMatrix(out, valid)


def mean_channel_power(h) -> np.ndarray:
    return np.mean(np.abs(np.asarray(h)) ** 2, axis=-1)


def extract_features_csi(h_hat, n_beams: int, mu_h: float = 0.0, sigma_h: float = 1.0) -> FeatureMatrix:
    """``[phase_1 .. phase_NR, psi, rho]`` per user, zero-padded to ``n_beams`` rows."""
    h_hat = np.atleast_2d(np.asarray(h_hat))
    k = h_hat.shape[0]
    if k > n_beams or k == 0:
        raise DimensionMismatch(f"{k} users for {n_beams} beams")
    phases = np.angle(h_hat) / PHASE_SCALE
    psi = (mean_channel_power(h_hat) - mu_h) / sigma_h
    rho = np.full(k, k / n_beams)
    return _pad(np.column_stack([phases, psi, rho]), n_beams)


def extract_features_geo(uv, n_beams: int) -> FeatureMatrix:
    """``[u, v, rho]`` per user, zero-padded to ``n_beams`` rows."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    k = uv.shape[0]
    if k > n_beams or k == 0 or uv.shape[1] != 2:
        raise DimensionMismatch(f"bad (u, v) array of shape {uv.shape} for {n_beams} beams")
    if np.any(np.sum(uv**2, axis=1) > 1.0 + 1e-12):
        raise InvalidUv("(u, v) outside the unit disc")
    rho = np.full(k, k / n_beams)
    return _pad(np.column_stack([uv, rho]), n_beams)


def attention_masks(valid) -> tuple[np.ndarray, np.ndarray]:
    """Binary SNR-module and INR-module masks for a (batch of) padding mask(s).

    The INR mask drops the diagonal; both forbid attention to and from
    padded slots.
    """
    valid = np.asarray(valid, dtype=bool)
    pair = valid[..., :, None] & valid[..., None, :]
    eye = np.eye(valid.shape[-1], dtype=bool)
    return pair, pair & ~eye
