"""Simulated scheduling instances, drawn many at a time.

Every instance is an independent user drop, pass heading and pass instant
with a uniformly random group of visible users.  Groups are stored
zero-padded to ``n_beams`` slots; padded channel rows are zero, which makes
the batched beamformer ignore them.

Samples are produced in fixed chunks of :data:`CHUNK`; chunk ``c`` of a
request is seeded by ``(seed, purpose, index, c)`` only, so the worker
count never changes the result.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .. import beamforming, channel, geometry
from ..dmhsa import LabelStandardizer, standardize_labels
from ..dmhsa.features import PHASE_SCALE
from .config import ExperimentConfig, Scenario
from .seeds import child_rng

CHUNK = 256
MAX_INSTANT_DRAWS = 1000


@dataclass
class Groups:
    """A set of padded scheduling instances, leading axis = instance."""

    sat_lat: np.ndarray  # (n,) sub-satellite point
    sat_lon: np.ndarray
    lat: np.ndarray  # (n, K) scheduled users, padded slots repeat a real user
    lon: np.ndarray
    slant_range: np.ndarray  # (n, K) m
    u: np.ndarray
    v: np.ndarray
    loss_db: np.ndarray  # (n, K) stochastic loss of the true channel
    valid: np.ndarray  # (n, K) bool
    power: np.ndarray  # (n, K) mean |h|^2 of the true channel, 0 when padded
    sinr_csi: np.ndarray  # (n, K) dB, beams from the reported channel
    sinr_geo: np.ndarray  # (n, K) dB, beams from the clear-sky channel
    h_true: np.ndarray | None = None  # (n, K, N_R), dropped unless asked for

    def __len__(self):
        return len(self.sat_lat)

    @property
    def n_sched(self) -> np.ndarray:
        return self.valid.sum(axis=1)

    def labels(self, variant: str) -> np.ndarray:
        return self.sinr_csi if variant == "csi" else self.sinr_geo

    def instant(self, i: int) -> geometry.PassInstant:
        return geometry.PassInstant(0.0, geometry.GroundPosition(float(self.sat_lat[i]), float(self.sat_lon[i])))

    def member(self, i: int) -> dict[str, np.ndarray]:
        """Unpadded per-user arrays of instance ``i``."""
        m = self.valid[i]
        return {"lat": self.lat[i, m], "lon": self.lon[i, m], "loss_db": self.loss_db[i, m],
                "u": self.u[i, m], "v": self.v[i, m], "slant_range": self.slant_range[i, m]}


def concat_groups(parts: list[Groups]) -> Groups:
    out = {}
    for f in fields(Groups):
        vals = [getattr(p, f.name) for p in parts]
        out[f.name] = None if any(v is None for v in vals) else np.concatenate(vals)
    return Groups(**out)


def padded_channels(scn: Scenario, slant_range, u, v, valid, loss_db=0.0) -> np.ndarray:
    h = channel.channel_vectors(slant_range, u, v, scn.link, scn.array, loss_db)
    return np.where(valid[..., None], h, 0.0)


def _pass_points(scn: Scenario, heading, time):
    angle = scn.orbit.angular_rate * time - scn.orbit.footprint_angle()
    c = scn.clusters.center
    return geometry.destination(c.latitude, c.longitude, heading, angle)


def sample_groups(scn: Scenario, rng: np.random.Generator, count: int, n_beams: int, min_group: int,
                  population: int, keep_channels: bool = False) -> Groups:
    """``count`` independent instances with their oracle labels."""
    orbit = scn.orbit
    lat_p, lon_p = geometry.drop_user_batch(rng, (count, population), scn.clusters, orbit)
    duration = 2 * orbit.footprint_angle() / orbit.angular_rate
    heading = rng.uniform(0.0, 360.0, count)
    sat_lat = np.empty(count)
    sat_lon = np.empty(count)
    visible = np.zeros((count, population), dtype=bool)
    todo = np.ones(count, dtype=bool)
    for _ in range(MAX_INSTANT_DRAWS):
        idx = np.flatnonzero(todo)
        if len(idx) == 0:
            break
        sl, so = _pass_points(scn, heading[idx], rng.uniform(0.0, duration, len(idx)))
        _, elev, _, _ = geometry.look_angles(sl[:, None], so[:, None], orbit, lat_p[idx], lon_p[idx])
        sat_lat[idx], sat_lon[idx] = sl, so
        visible[idx] = elev >= orbit.min_elevation
        todo[idx] = visible[idx].sum(axis=1) < min_group
    else:
        raise RuntimeError("no pass instant with enough visible users; check the cluster layout")

    # uniform group size, then a uniform subset of the visible users
    n_vis = visible.sum(axis=1)
    size = rng.integers(min_group, np.minimum(n_beams, n_vis) + 1)
    keys = np.where(visible, rng.random((count, population)), np.inf)
    members = np.argsort(keys, axis=1)[:, :n_beams]
    valid = np.arange(n_beams) < size[:, None]
    members = np.where(valid, members, members[:, :1])
    lat = np.take_along_axis(lat_p, members, axis=1)
    lon = np.take_along_axis(lon_p, members, axis=1)

    d, _, u, v = geometry.look_angles(sat_lat[:, None], sat_lon[:, None], orbit, lat, lon)
    loss = scn.link.stochastic_loss_db + channel.draw_shadowing(rng, (count, n_beams), scn.shadowing_sigma_db)
    loss = np.where(valid, loss, 0.0)
    h_true = padded_channels(scn, d, u, v, valid, loss)
    h_clear = padded_channels(scn, d, u, v, valid, 0.0)
    bf = scn.beamformer
    csi = beamforming.batch_sinr_db(h_true, h_true, valid, bf)
    geo = beamforming.batch_sinr_db(h_true, h_clear, valid, bf)
    power = np.mean(np.abs(h_true) ** 2, axis=-1)
    return Groups(sat_lat, sat_lon, lat, lon, d, u, v, loss, valid, power, csi, geo,
                  h_true if keep_channels else None)


def _chunk(args) -> Groups:
    cfg, seed, purpose, index, c, n, keep = args
    return sample_groups(cfg.scenario(), child_rng(seed, purpose, index, c), n, cfg.model.n_beams,
                         cfg.train.min_group_size, cfg.area.population, keep)


def _map_chunks(fn, cfg, seed, purpose, index, count, workers, keep=False):
    jobs = [(cfg, seed, purpose, index, c, min(CHUNK, count - c * CHUNK), keep)
            for c in range(-(-count // CHUNK))]
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def generate_groups(cfg: ExperimentConfig, seed: int, purpose: str, index: int, count: int,
                    workers: int = 1, keep_channels: bool = False) -> Groups:
    """``count`` instances for (seed, purpose, index)."""
    return concat_groups(_map_chunks(_chunk, cfg, seed, purpose, index, count, workers, keep_channels))


def group_features(g: Groups, variant: str, s: LabelStandardizer) -> np.ndarray:
    """Padded model inputs ``(n, K, feature_dim)``; zero rows in padded slots.

    CSI rows are ``[phase_1 .. phase_NR, psi, rho]`` and need ``g.h_true``;
    GEO rows are ``[u, v, rho]``.
    """
    valid = g.valid
    rho = np.broadcast_to((g.n_sched / valid.shape[1])[:, None], valid.shape)
    if variant == "csi":
        if g.h_true is None:
            raise ValueError("CSI features need the channel; generate with keep_channels=True")
        psi = (g.power - s.mu_h) / s.sigma_h
        rows = np.concatenate([np.angle(g.h_true) / PHASE_SCALE, psi[..., None], rho[..., None]], axis=-1)
    else:
        rows = np.stack([g.u, g.v, rho], axis=-1)
    return np.where(valid[..., None], rows, 0.0)


@dataclass
class Batch:
    features: np.ndarray  # (n, n_beams, feature_dim)
    valid: np.ndarray  # (n, n_beams) bool
    labels_db: np.ndarray  # (n, n_beams), 0 in padded slots
    labels: np.ndarray  # standardised labels, 0 in padded slots

    def __len__(self):
        return len(self.features)

    @property
    def n_sched(self) -> np.ndarray:
        return self.valid.sum(axis=1)

    @property
    def n_estimates(self) -> int:
        return int(self.valid.sum())


def featurize(g: Groups, variant: str, s: LabelStandardizer) -> Batch:
    labels_db = g.labels(variant)
    labels = np.where(g.valid, standardize_labels(labels_db, s), 0.0)
    return Batch(group_features(g, variant, s), g.valid, labels_db, labels)


def concat_batches(parts: list[Batch]) -> Batch:
    return Batch(*(np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(Batch)))


def calibrate_standardizer(cfg: ExperimentConfig, variant: str | None = None, workers: int = 1,
                           groups: Groups | None = None) -> LabelStandardizer:
    """Label and channel-power statistics from one calibration batch, then frozen."""
    variant = variant or cfg.variant
    if groups is None:
        groups = generate_groups(cfg, cfg.seed, "calib", 0, cfg.train.calibration_samples, workers)
    sinr = groups.labels(variant)[groups.valid]
    power = groups.power[groups.valid]
    return LabelStandardizer(float(sinr.mean()), float(sinr.std()), float(power.mean()), float(power.std()))


def _batch_chunk(args) -> Batch:
    *job, variant, s = args
    return featurize(_chunk(tuple(job)), variant, s)


def generate_batch(cfg: ExperimentConfig, seed: int, epoch: int, standardizer: LabelStandardizer,
                   workers: int = 1, purpose: str = "train", size: int | None = None,
                   variant: str | None = None) -> Batch:
    """A fresh batch for ``epoch``; identical (seed, epoch) give identical batches."""
    size = cfg.train.batch_size if size is None else size
    variant = variant or cfg.variant
    keep = variant == "csi"
    jobs = [(cfg, seed, purpose, epoch, c, min(CHUNK, size - c * CHUNK), keep, variant, standardizer)
            for c in range(-(-size // CHUNK))]
    if workers <= 1 or len(jobs) < 2:
        parts = [_batch_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_batch_chunk, jobs))
    return concat_batches(parts)


def generate_test_set(cfg: ExperimentConfig, standardizer: LabelStandardizer, n_estimates: int,
                      purpose: str = "test-random", workers: int = 1, chunk: int = 2048,
                      variant: str | None = None) -> Batch:
    """Batches drawn until at least ``n_estimates`` valid slots are collected."""
    parts: list[Batch] = []
    total = 0
    index = 0
    while total < n_estimates:
        b = generate_batch(cfg, cfg.seed, index, standardizer, workers, purpose, chunk, variant)
        parts.append(b)
        total += b.n_estimates
        index += 1
    return concat_batches(parts)
