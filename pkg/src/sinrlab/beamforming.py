"""MMSE beamforming, per-antenna power normalisation and exact SINR."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import channel, geometry
from .errors import DimensionMismatch, NumericalFailure


class Mode(str, enum.Enum):
    CSI = "csi"
    GEO = "geo"


@dataclass(frozen=True)
class BeamformerConfig:
    n_elements: int = 512
    per_element_power: float = 0.065  # W

    def __post_init__(self):
        if self.n_elements < 1 or not self.per_element_power > 0:
            raise ValueError("need at least one element and positive power")

    @property
    def total_power(self) -> float:
        return self.n_elements * self.per_element_power

    @property
    def regularization(self) -> float:
        return self.n_elements / self.total_power


@dataclass
class BeamformingMatrix:
    raw: np.ndarray
    normalized: np.ndarray
    zero_rows: int = 0


@dataclass
class SinrReport:
    sinr_db: np.ndarray
    snr_db: np.ndarray
    inr_db: np.ndarray


def mmse_beamformer(h, cfg: BeamformerConfig) -> np.ndarray:
    """``H^H (H H^H + alpha I)^-1`` via a Cholesky solve of the Gram system."""
    h = np.asarray(h)
    k, n = h.shape
    if not 1 <= k <= n:
        raise DimensionMismatch(f"need 1 <= users ({k}) <= elements ({n})")
    gram = h @ h.conj().T + cfg.regularization * np.eye(k)
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=True)
        x = scipy.linalg.cho_solve(factor, h)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Gram matrix solve failed: {exc}") from exc
    # gram is Hermitian, so (G^-1 H)^H = H^H G^-1
    return x.conj().T


def per_antenna_normalize(b, cfg: BeamformerConfig) -> tuple[np.ndarray, int]:
    """Scale each antenna row to norm ``sqrt(P_av / N_R)``.

    Zero rows are left at zero; their count is returned alongside.
    """
    b = np.asarray(b)
    norms = np.linalg.norm(b, axis=1)
    zero = norms == 0
    target = np.sqrt(cfg.total_power / b.shape[0])
    scale = np.where(zero, 0.0, target / np.where(zero, 1.0, norms))
    return b * scale[:, None], int(zero.sum())


def beamform(h, cfg: BeamformerConfig) -> BeamformingMatrix:
    raw = mmse_beamformer(h, cfg)
    normalized, zero_rows = per_antenna_normalize(raw, cfg)
    return BeamformingMatrix(raw, normalized, zero_rows)


def sinr_linear(h_true, b_norm):
    """Linear (SNR, INR) of each user for a given normalised beam matrix."""
    h_true = np.asarray(h_true)
    b_norm = np.asarray(b_norm)
    if h_true.shape[1] != b_norm.shape[0] or h_true.shape[0] != b_norm.shape[1]:
        raise DimensionMismatch(f"channel {h_true.shape} vs beams {b_norm.shape}")
    p = np.abs(h_true @ b_norm) ** 2
    snr = np.diag(p).copy()
    off = ~np.eye(len(snr), dtype=bool)
    inr = np.sum(np.where(off, p, 0.0), axis=1)
    return snr, inr


def evaluate_sinr(h_true, b_norm) -> SinrReport:
    snr, inr = sinr_linear(h_true, b_norm)
    return SinrReport(channel.lin2db(snr / (1.0 + inr)), channel.lin2db(snr), channel.lin2db(inr))


def sinr_from_channels(h_true, h_est, cfg: BeamformerConfig) -> SinrReport:
    """SINR on ``h_true`` when beams are designed from ``h_est``."""
    return evaluate_sinr(h_true, beamform(h_est, cfg).normalized)


def sinr_oracle(lat, lon, sat: geometry.PassInstant, orbit: geometry.OrbitConfig,
                lb: channel.LinkBudget, array: channel.ArrayConfig, cfg: BeamformerConfig,
                mode: Mode | str, loss_db=None) -> SinrReport:
    """Ground-truth SINR of a scheduled group.

    CSI mode designs beams from the reported (loss-bearing) channel, GEO
    mode from the clear-sky channel implied by the user locations; both are
    evaluated against the true channel.
    """
    mode = Mode(mode)
    h_true = channel.build_channel_matrix(lat, lon, sat, orbit, lb, array, loss_db).coefficients
    if mode is Mode.CSI:
        h_est = h_true
    else:
        h_est = channel.build_channel_matrix(lat, lon, sat, orbit, lb, array, clear_sky=True).coefficients
    return sinr_from_channels(h_true, h_est, cfg)


def batch_sinr_db(h_true, h_est, valid, cfg: BeamformerConfig) -> np.ndarray:
    """SINR (dB) of many zero-padded groups at once, shape ``(n, K)``.

    ``h_true``/``h_est`` are ``(n, K, N_R)`` with all-zero rows in padded
    slots, which then get zero beams and leave the other users untouched.
    Padded slots of the result are 0.
    """
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    valid = np.asarray(valid, dtype=bool)
    k = h_est.shape[-2]
    gram = h_est @ np.conj(np.swapaxes(h_est, -1, -2)) + cfg.regularization * np.eye(k)
    try:
        x = np.linalg.solve(gram, h_est)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Gram matrix solve failed: {exc}") from exc
    b = np.conj(np.swapaxes(x, -1, -2))  # (n, N_R, K)
    norms = np.linalg.norm(b, axis=-1, keepdims=True)
    target = np.sqrt(cfg.total_power / b.shape[-2])
    b = b * np.where(norms == 0, 0.0, target / np.where(norms == 0, 1.0, norms))
    p = np.abs(h_true @ b) ** 2
    snr = np.diagonal(p, axis1=-2, axis2=-1)
    off = valid[..., :, None] & valid[..., None, :] & ~np.eye(k, dtype=bool)
    inr = np.sum(np.where(off, p, 0.0), axis=-1)
    return np.where(valid, channel.lin2db(snr / (1.0 + inr)), 0.0)
