"""Per-user, per-element channel coefficients of a direct radiating array.

Amplitudes follow the free-space link budget normalised by the receiver
noise power, so ``|h b|^2`` is directly an SNR.  Phases use the far-field
per-element path length ``d_k - p_n . r_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import EmptyGroup, NotVisible

SPEED_OF_LIGHT = 299792458.0
BOLTZMANN = 1.380649e-23


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


@dataclass(frozen=True)
class LinkBudget:
    carrier_frequency: float = 20e9
    user_bandwidth: float = 190.08e6
    noise_temperature: float = 290.0
    boltzmann: float = BOLTZMANN
    rx_gain: float = 1.0  # linear power gain
    stochastic_loss_db: float = 0.0

    def __post_init__(self):
        for name in ("carrier_frequency", "user_bandwidth", "noise_temperature", "boltzmann", "rx_gain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.stochastic_loss_db < 0:
            raise ValueError("stochastic_loss_db must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def noise_power(self) -> float:
        return self.boltzmann * self.user_bandwidth * self.noise_temperature


@dataclass(frozen=True)
class ArrayConfig:
    grid_rows: int = 16
    grid_cols: int = 32
    element_spacing: float = 0.5 * SPEED_OF_LIGHT / 20e9
    element_boresight_gain: float = 6.0  # 2(q+1): cos^q directivity
    element_pattern_exponent: float = 2.0

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid dimensions must be positive")
        if not self.element_spacing > 0:
            raise ValueError("element_spacing must be positive")

    @property
    def n_elements(self) -> int:
        return self.grid_rows * self.grid_cols


@dataclass
class ChannelMatrix:
    coefficients: np.ndarray
    slot_index: int = 0

    def __array__(self, dtype=None, copy=None):
        return self.coefficients if dtype is None else self.coefficients.astype(dtype)

    @property
    def shape(self):
        return self.coefficients.shape


@dataclass(frozen=True)
class UserLink:
    """Geometry of one user as seen from the array centroid."""

    slant_range: float  # m
    u: float
    v: float

    @property
    def off_boresight(self) -> float:
        return float(np.arcsin(min(1.0, np.hypot(self.u, self.v))))


def element_positions(cfg: ArrayConfig) -> np.ndarray:
    """Centered rectangular grid, rows along the array x axis, shape (N_R, 3)."""
    s = cfg.element_spacing
    x = (np.arange(cfg.grid_rows) - (cfg.grid_rows - 1) / 2) * s
    y = (np.arange(cfg.grid_cols) - (cfg.grid_cols - 1) / 2) * s
    xx, yy = np.meshgrid(x, y, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=-1)


def element_tx_gain(cfg: ArrayConfig, off_boresight):
    """Amplitude gain of a cos^q power pattern; ``off_boresight`` in radians."""
    c = np.clip(np.cos(off_boresight), 0.0, None)
    return np.sqrt(cfg.element_boresight_gain) * c ** (cfg.element_pattern_exponent / 2)


def channel_amplitude(tx_amp, rx_amp, slant_range, lb: LinkBudget, loss_db=0.0):
    fspl = 4 * np.pi * np.asarray(slant_range) / lb.wavelength
    return tx_amp * rx_amp / (fspl * np.sqrt(db2lin(loss_db) * lb.noise_power))


def _phase(path_length, wavelength):
    # reduce in cycles first: path lengths are ~1e8 wavelengths
    cycles = np.mod(path_length / wavelength, 1.0)
    return -2 * np.pi * cycles


def channel_coefficient(user: UserLink, element_index: int, lb: LinkBudget, cfg: ArrayConfig,
                        loss_db: float | None = None) -> complex:
    if not np.hypot(user.u, user.v) <= 1.0:
        raise NotVisible("direction cosines outside the unit disc")
    p = element_positions(cfg)[element_index]
    loss = lb.stochastic_loss_db if loss_db is None else loss_db
    theta = user.off_boresight
    amp = channel_amplitude(element_tx_gain(cfg, theta), np.sqrt(lb.rx_gain), user.slant_range, lb, loss)
    # d_kn = d_k - p_n . r_hat; the element offset is kept out of the cycle reduction
    offset = p[0] * user.u + p[1] * user.v + p[2] * np.cos(theta)
    phase = _phase(user.slant_range, lb.wavelength) + 2 * np.pi * offset / lb.wavelength
    return complex(amp * np.exp(1j * phase))


def channel_vectors(slant_range, u, v, lb: LinkBudget, cfg: ArrayConfig, loss_db=None) -> np.ndarray:
    """Vectorised channel rows, shape ``(..., K, N_R)`` for inputs of shape ``(..., K)``."""
    slant_range = np.atleast_1d(np.asarray(slant_range, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if np.any(u * u + v * v > 1.0 + 1e-12):
        raise NotVisible("direction cosines outside the unit disc")
    if loss_db is None:
        loss_db = lb.stochastic_loss_db
    loss_db = np.broadcast_to(np.asarray(loss_db, dtype=float), slant_range.shape)
    theta = np.arcsin(np.clip(np.hypot(u, v), 0.0, 1.0))
    amp = channel_amplitude(element_tx_gain(cfg, theta), np.sqrt(lb.rx_gain), slant_range, lb, loss_db)
    p = element_positions(cfg)
    # common per-user phase plus the element offset term; the z term vanishes on the planar face
    phase = _phase(slant_range, lb.wavelength)[..., None] \
        + 2 * np.pi / lb.wavelength * (u[..., None] * p[:, 0] + v[..., None] * p[:, 1])
    return amp[..., None] * np.exp(1j * phase)


def draw_shadowing(rng: np.random.Generator, n: int, sigma_db: float) -> np.ndarray:
    """Log-normal shadowing, returned in dB (zero-mean normal)."""
    if sigma_db <= 0:
        return np.zeros(n)
    return sigma_db * rng.standard_normal(n)


def user_links(sat: geometry.PassInstant, orbit: geometry.OrbitConfig, lat, lon):
    """Slant range (m) and (u, v) of users; raises NotVisible below the horizon."""
    elev = np.atleast_1d(geometry.elevation_angle(sat, orbit, lat, lon))
    if np.any(elev < 0):
        raise NotVisible(f"{int(np.sum(elev < 0))} user(s) below the horizon")
    d = np.atleast_1d(geometry.slant_range(sat, orbit, lat, lon))
    u, v = geometry.uv_coordinates(sat, orbit, lat, lon)
    return d, np.atleast_1d(u), np.atleast_1d(v)


def build_channel_matrix(lat, lon, sat: geometry.PassInstant, orbit: geometry.OrbitConfig,
                         lb: LinkBudget, cfg: ArrayConfig, loss_db=None, clear_sky: bool = False,
                         n_beams: int | None = None, slot_index: int = 0) -> ChannelMatrix:
    """Channel matrix of the scheduled users.

    ``loss_db`` is the per-user stochastic loss (defaults to the budget's
    static value); ``clear_sky`` forces it to 0 dB, giving the channel a
    location report implies.
    """
    lat = np.atleast_1d(lat)
    if len(lat) == 0:
        raise EmptyGroup("no users to build a channel for")
    if n_beams is not None and len(lat) > n_beams:
        raise ValueError(f"{len(lat)} users exceed {n_beams} beams")
    d, u, v = user_links(sat, orbit, lat, np.atleast_1d(lon))
    loss = 0.0 if clear_sky else loss_db
    return ChannelMatrix(channel_vectors(d, u, v, lb, cfg, loss), slot_index)

