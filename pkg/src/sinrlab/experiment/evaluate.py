"""Evaluation protocols: random-scheduler test set, PQS traffic grid, complexity sweep."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .. import beamforming, channel, geometry, scheduling
from ..beamforming import Mode
from ..dmhsa import DmhsaModel, calibrate_bias, complexity_estimate
from ..dmhsa.features import PHASE_SCALE
from ..errors import NoEligibleUsers
from . import reports
from .config import ExperimentConfig, Scenario
from .data import generate_test_set
from .seeds import child_rng

HIST_HEADER = ("n_sched", "bin_left", "bin_right", "density")
CDF_HEADER = ("c_min", "c_max", "abs_error_db", "cdf")
COMPLEXITY_HEADER = ("n_c", "mmse", "csi_dmhsa", "geo_dmhsa")
MAX_PERIOD_DRAWS = 100


@dataclass
class EvalReport:
    """Signed errors ``E = estimate - SINR`` (dB) with their grouping keys."""

    errors: np.ndarray
    n_sched: np.ndarray  # group size each estimate came from
    labels_db: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def abs_errors(self) -> np.ndarray:
        return np.abs(self.errors)

    @property
    def rmse(self) -> float:
        return rmse(self.errors)

    def rmse_by_n_sched(self) -> dict[int, float]:
        return {int(k): rmse(self.errors[self.n_sched == k]) for k in np.unique(self.n_sched)}


def rmse(e) -> float:
    e = np.asarray(e, dtype=float)
    return float(np.sqrt(np.mean(e * e)))


def _errors(model: DmhsaModel, features, valid, labels_db):
    pred = model.predict_db(features, valid)
    sizes = np.broadcast_to(valid.sum(axis=1)[:, None], valid.shape)
    return pred[valid] - labels_db[valid], sizes[valid], labels_db[valid]


def pdf_histogram(errors, bins: int, lo: float, hi: float):
    """Density histogram over [lo, hi] widened by whole bins to cover every error."""
    width = (hi - lo) / bins
    e = np.asarray(errors, dtype=float)
    lo = lo - width * np.ceil(max(0.0, lo - e.min()) / width)
    hi = hi + width * np.ceil(max(0.0, e.max() - hi) / width)
    n = int(round((hi - lo) / width))
    density, edges = np.histogram(e, bins=n, range=(lo, hi), density=True)
    return density, edges


def eval_random(model: DmhsaModel, cfg: ExperimentConfig, workers: int = 1, out: Path | None = None,
                n_estimates: int | None = None) -> EvalReport:
    """Test under training conditions on a fresh set disjoint from the training streams."""
    variant = model.cfg.variant
    n = cfg.eval.test_estimates if n_estimates is None else n_estimates
    test = generate_test_set(cfg, model.standardizer, n, "test-random", workers, variant=variant)
    err, sizes, labels = _errors(model, test.features, test.valid, test.labels_db)
    rep = EvalReport(err, sizes, labels)
    const = labels - model.standardizer.mu_sinr
    by = rep.rmse_by_n_sched()
    ks = sorted(by)
    rho = float(spearmanr(ks, [by[k] for k in ks]).statistic) if len(ks) > 2 else float("nan")
    rep.meta = {
        "variant": variant,
        "n_estimates": int(len(err)),
        "rmse_db": rep.rmse,
        "constant_mean_rmse_db": rmse(const),
        "rmse_ratio": rep.rmse / rmse(const),
        "mean_error_db": float(err.mean()),
        "median_abs_error_db": float(np.median(np.abs(err))),
        "rmse_by_n_sched": {str(k): v for k, v in by.items()},
        "spearman_rmse_vs_n_sched": rho,
    }
    if out is not None:
        lo, hi = cfg.eval.histogram_range_db
        rows = []
        for k in ks:
            dens, edges = pdf_histogram(err[sizes == k], cfg.eval.histogram_bins, lo, hi)
            rows += [(k, float(a), float(b), float(d)) for a, b, d in zip(edges[:-1], edges[1:], dens)]
        reports.write_csv(Path(out) / f"hist_{variant}.csv", HIST_HEADER, rows)
        reports.write_json(Path(out) / f"eval_random_{variant}.json", _finite(rep.meta))
    return rep


def _finite(doc):
    """JSON-safe copy: NaN becomes null."""
    if isinstance(doc, dict):
        return {k: _finite(v) for k, v in doc.items()}
    if isinstance(doc, float) and not np.isfinite(doc):
        return None
    return doc


# -- PQS ---------------------------------------------------------------------

class PassEnvironment:
    """One scheduling period of a satellite pass over a dropped population.

    The user drop, pass heading, period start and per-user shadowing are
    fixed for the period.  Every served group is recorded with the model
    inputs and oracle labels of its mode.
    """

    def __init__(self, scn: Scenario, pop: geometry.UserPopulation, sat_pass: geometry.SatellitePass,
                 start: float, loss_db: np.ndarray, cfg: scheduling.PqsConfig, mode: Mode, n_beams: int):
        self.scn = scn
        self.lat = pop.latitude
        self.lon = pop.longitude
        self.pop = pop
        self.sat_pass = sat_pass
        self.start = start
        self.loss_db = loss_db
        self.cfg = cfg
        self.mode = Mode(mode)
        self.n_beams = n_beams
        self.features: list[np.ndarray] = []
        self.valid: list[np.ndarray] = []
        self.labels: list[np.ndarray] = []
        self.groups: list[scheduling.ScheduledGroup] = []
        self.state: scheduling.PqsState | None = None
        self._cache: dict[int, tuple] = {}

    def _slot(self, slot: int):
        if slot not in self._cache:
            sat = self.sat_pass.at(self.start + slot * self.cfg.slot_duration)
            p = sat.sub_satellite_point
            d, elev, u, v = geometry.look_angles(p.latitude, p.longitude, self.scn.orbit, self.lat, self.lon)
            vis = elev >= self.scn.orbit.min_elevation
            self._cache = {slot: (sat, d, u, v, vis, None)}
        return self._cache[slot]

    def visible(self, slot: int) -> np.ndarray:
        return self._slot(slot)[4]

    def remaining_visibility(self) -> np.ndarray:
        t = self.sat_pass.time_until_set(self.start, self.lat, self.lon)
        return np.asarray(t) / self.cfg.slot_duration

    def reported_channels(self, slot: int) -> np.ndarray:
        sat, d, u, v, vis, h = self._slot(slot)
        if h is None:
            h = np.zeros((len(self.lat), self.scn.array.n_elements), dtype=complex)
            h[vis] = channel.channel_vectors(d[vis], u[vis], v[vis], self.scn.link, self.scn.array,
                                             self.loss_db[vis])
            self._cache[slot] = (sat, d, u, v, vis, h)
        return h

    def serve(self, slot: int, group: scheduling.ScheduledGroup) -> np.ndarray:
        sat, d, u, v, vis, _ = self._slot(slot)
        idx = np.array(group.users)
        if self.mode is Mode.CSI:
            h_true = self.reported_channels(slot)[idx]
            h_est = h_true
        else:
            h_true = channel.channel_vectors(d[idx], u[idx], v[idx], self.scn.link, self.scn.array,
                                             self.loss_db[idx])
            h_est = channel.channel_vectors(d[idx], u[idx], v[idx], self.scn.link, self.scn.array, 0.0)
        sinr = beamforming.sinr_from_channels(h_true, h_est, self.scn.beamformer).sinr_db
        k = len(idx)
        valid = np.arange(self.n_beams) < k
        rho = np.full(k, k / self.n_beams)
        if self.mode is Mode.CSI:
            rows = np.column_stack([np.angle(h_true) / PHASE_SCALE, np.mean(np.abs(h_true) ** 2, axis=1), rho])
        else:
            rows = np.column_stack([u[idx], v[idx], rho])
        feats = np.zeros((self.n_beams, rows.shape[1]))
        feats[:k] = rows
        lab = np.zeros(self.n_beams)
        lab[:k] = sinr
        self.features.append(feats)
        self.valid.append(valid)
        self.labels.append(lab)
        return self.scn.link.user_bandwidth * np.log2(1.0 + channel.db2lin(sinr))


@dataclass
class PqsRecord:
    features: np.ndarray  # raw features; the CSI power column is not yet standardised
    valid: np.ndarray
    labels_db: np.ndarray
    groups: list = field(default_factory=list)
    audit_ok: bool = True

    @property
    def mean_group_size(self) -> float:
        return float(self.valid.sum(axis=1).mean()) if len(self.valid) else 0.0


def run_pqs_period(cfg: ExperimentConfig, mode: Mode, traffic: scheduling.TrafficModel, purpose: str,
                   period: int) -> PassEnvironment:
    """Simulate one period; the drop, pass and shadowing depend on (seed, purpose, period) only."""
    scn = cfg.scenario()
    pcfg = cfg.pqs_config()
    world = child_rng(cfg.seed, purpose, period, 0)
    pop = geometry.drop_users(world, cfg.pqs.population, scn.clusters, scn.orbit)
    loss = scn.link.stochastic_loss_db + channel.draw_shadowing(world, len(pop), scn.shadowing_sigma_db)
    for _ in range(MAX_PERIOD_DRAWS):
        sat_pass = geometry.SatellitePass(scn.orbit, scn.clusters.center, world.uniform(0.0, 360.0))
        start = world.uniform(0.0, sat_pass.duration - pcfg.scheduling_period)
        env = PassEnvironment(scn, pop, sat_pass, start, loss, pcfg, mode, cfg.model.n_beams)
        if env.visible(0).any():
            break
    else:
        raise NoEligibleUsers("no pass position with a visible user")
    c_req = scheduling.assign_traffic(pop, traffic)
    state = scheduling.PqsState.from_requests(c_req, env.remaining_visibility(), pcfg)
    groups = scheduling.pqs_schedule(state, env, pcfg, mode, cfg.model.n_beams, child_rng(cfg.seed, purpose, period, 1))
    env.groups = groups
    env.state = state
    return env


def collect_pqs(cfg: ExperimentConfig, mode: Mode, traffic: scheduling.TrafficModel, purpose: str,
                periods: int, audit: bool = True) -> PqsRecord:
    feats, valid, labels, groups = [], [], [], []
    ok = True
    pcfg = cfg.pqs_config()
    for p in range(periods):
        env = run_pqs_period(cfg, mode, traffic, purpose, p)
        feats += env.features
        valid += env.valid
        labels += env.labels
        groups += env.groups
        if audit:
            for g in env.groups:
                kw = {"channels": env.reported_channels(g.slot_index)} if Mode(mode) is Mode.CSI \
                    else {"lat": env.lat, "lon": env.lon}
                ok &= scheduling.audit_group(g.users, mode, pcfg, **kw)
    return PqsRecord(np.array(feats), np.array(valid), np.array(labels), groups, ok)


def standardized_features(rec: PqsRecord, model: DmhsaModel) -> np.ndarray:
    f = rec.features.copy()
    if model.cfg.variant == "csi":
        s = model.standardizer
        f[..., -2] = np.where(rec.valid, (f[..., -2] - s.mu_h) / s.sigma_h, 0.0)
    return f


def eval_pqs(model: DmhsaModel, cfg: ExperimentConfig, out: Path | None = None,
             periods: int | None = None, calibration_periods: int | None = None) -> dict:
    """Run the (C_min, C_max) grid; bias is calibrated per cell on held-out periods.

    Returns ``{"cells": {...}, "reports": {cell: EvalReport}}``; cell keys
    are ``"<c_min>-<c_max>"``.
    """
    variant = model.cfg.variant
    mode = Mode(variant)
    periods = cfg.pqs.periods if periods is None else periods
    n_cal = cfg.pqs.calibration_periods if calibration_periods is None else calibration_periods
    cells, reps, cdf_rows = {}, {}, []
    for c_min in cfg.pqs.c_min_mbps:
        for c_max in cfg.pqs.c_max_mbps:
            key = f"{c_min:g}-{c_max:g}"
            traffic = scheduling.TrafficModel(c_min, c_max)
            cell_model = DmhsaModel(model.cfg, model.params, replace(model.standardizer, bias_db=0.0))
            cal = collect_pqs(cfg, mode, traffic, "pqs-calib", n_cal, audit=False)
            bias = calibrate_bias(cell_model, standardized_features(cal, cell_model), cal.valid, cal.labels_db)
            cal_err, _, _ = _errors(cell_model, standardized_features(cal, cell_model), cal.valid, cal.labels_db)
            rec = collect_pqs(cfg, mode, traffic, "pqs-test", periods)
            err, sizes, labels = _errors(cell_model, standardized_features(rec, cell_model), rec.valid,
                                         rec.labels_db)
            rep = EvalReport(err, sizes, labels)
            cells[key] = {
                "c_min_mbps": c_min, "c_max_mbps": c_max,
                "rmse_db": rep.rmse,
                "median_abs_error_db": float(np.median(rep.abs_errors)),
                "mean_error_db": float(err.mean()),
                "bias_db": bias,
                "calibration_mean_error_db": float(cal_err.mean()),
                "mean_group_size": rec.mean_group_size,
                "n_groups": int(len(rec.valid)),
                "n_estimates": int(len(err)),
                "audit_passed": bool(rec.audit_ok),
            }
            reps[key] = rep
            a = np.sort(rep.abs_errors)
            pick = np.unique(np.linspace(0, len(a) - 1, min(len(a), 1000)).astype(int))
            cdf_rows.append((c_min, c_max, 0.0, 0.0))
            cdf_rows += [(c_min, c_max, float(a[i]), (i + 1) / len(a)) for i in pick]
    if out is not None:
        reports.write_csv(Path(out) / f"pqs_cdf_{variant}.csv", CDF_HEADER, cdf_rows)
        reports.write_json(Path(out) / f"pqs_rmse_{variant}.json", {"variant": variant, "cells": cells})
    return {"cells": cells, "reports": reps}


def complexity_report(n_sched: int = 24, n_r: int = 512, n_c_values=range(1, 33), out: Path | None = None):
    rows = [(n_c, complexity_estimate("mmse", n_sched, n_r=n_r), complexity_estimate("csi", n_sched, n_r, n_c),
             complexity_estimate("geo", n_sched, n_c=n_c)) for n_c in n_c_values]
    if out is not None:
        reports.write_csv(Path(out) / "complexity.csv", COMPLEXITY_HEADER, rows)
    return rows
