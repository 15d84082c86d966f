import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinrlab import beamforming as bf
from sinrlab import channel as ch
from sinrlab import geometry as g
from sinrlab.errors import DimensionMismatch

ORBIT = g.OrbitConfig()
CENTER = g.GroundPosition(45.0, 10.0)
SAT = g.PassInstant(0.0, CENTER)


def cgauss(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def inverse_oracle(h, alpha):
    # textbook H^H (H H^H + a I)^-1 with an explicit inverse
    return h.conj().T @ np.linalg.inv(h @ h.conj().T + alpha * np.eye(h.shape[0]))


def loop_sinr_db(h, b):
    k = h.shape[0]
    out = []
    for i in range(k):
        sig = abs(sum(h[i, r] * b[r, i] for r in range(h.shape[1]))) ** 2
        inter = 0.0
        for j in range(k):
            if j != i:
                inter += abs(sum(h[i, r] * b[r, j] for r in range(h.shape[1]))) ** 2
        out.append(10 * math.log10(sig / (1 + inter)))
    return np.array(out)


def test_config_defaults():
    cfg = bf.BeamformerConfig()
    assert cfg.total_power == pytest.approx(33.28)
    assert cfg.regularization == pytest.approx(512 / 33.28)
    with pytest.raises(ValueError):
        bf.BeamformerConfig(per_element_power=0.0)


def test_single_user_closed_form():
    rng = np.random.default_rng(1)
    cfg = bf.BeamformerConfig(16)
    h = cgauss(rng, 1, 16)
    b = bf.mmse_beamformer(h, cfg)
    expected = h.conj().T / (np.vdot(h, h).real + cfg.regularization)
    np.testing.assert_allclose(b, expected, rtol=1e-12)


def test_orthonormal_rows():
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(cgauss(rng, 16, 16))
    h = q[:4]
    cfg = bf.BeamformerConfig(16)
    np.testing.assert_allclose(bf.mmse_beamformer(h, cfg), h.conj().T / (1 + cfg.regularization), atol=1e-14)


def test_random_4x16_matches_inverse():
    rng = np.random.default_rng(3)
    h = cgauss(rng, 4, 16)
    cfg = bf.BeamformerConfig(16)
    ref = inverse_oracle(h, cfg.regularization)
    b = bf.mmse_beamformer(h, cfg)
    assert np.linalg.norm(b - ref) / np.linalg.norm(ref) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.data())
def test_solve_vs_inverse_property(n, data):
    k = data.draw(st.integers(1, min(24, n)))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    h = cgauss(rng, k, n) * 10 ** data.draw(st.floats(-2, 2))
    cfg = bf.BeamformerConfig(n)
    ref = inverse_oracle(h, cfg.regularization)
    assert np.linalg.norm(bf.mmse_beamformer(h, cfg) - ref) / np.linalg.norm(ref) < 1e-9


def test_dimension_checks():
    cfg = bf.BeamformerConfig(4)
    with pytest.raises(DimensionMismatch):
        bf.mmse_beamformer(np.ones((5, 4), complex), cfg)
    with pytest.raises(DimensionMismatch):
        bf.sinr_linear(np.ones((2, 4)), np.ones((3, 2)))


def test_row_norms_and_idempotence():
    rng = np.random.default_rng(4)
    cfg = bf.BeamformerConfig(64)
    b, zeros = bf.per_antenna_normalize(cgauss(rng, 64, 8), cfg)
    assert zeros == 0
    target = math.sqrt(cfg.total_power / 64)
    np.testing.assert_allclose(np.linalg.norm(b, axis=1), target, rtol=1e-10)
    # per-row power summed over users
    np.testing.assert_allclose(np.sum(np.abs(b) ** 2, axis=1), cfg.total_power / 64, rtol=1e-10)
    again, _ = bf.per_antenna_normalize(b, cfg)
    np.testing.assert_allclose(again, b, rtol=1e-12, atol=0)


def test_zero_row_policy():
    rng = np.random.default_rng(5)
    cfg = bf.BeamformerConfig(8)
    raw = cgauss(rng, 8, 3)
    raw[5] = 0
    b, zeros = bf.per_antenna_normalize(raw, cfg)
    assert zeros == 1 and np.all(b[5] == 0)
    assert np.all(np.isfinite(b))


def test_single_user_sinr_equals_snr():
    rng = np.random.default_rng(6)
    cfg = bf.BeamformerConfig(16)
    h = cgauss(rng, 1, 16)
    rep = bf.sinr_from_channels(h, h, cfg)
    assert rep.inr_db[0] == -np.inf
    assert rep.sinr_db[0] == rep.snr_db[0]


def test_orthogonal_users_no_interference():
    cfg = bf.BeamformerConfig(8)
    h = np.zeros((2, 8), complex)
    h[0, :4] = 1.0
    h[1, 4:] = 1j
    rep = bf.sinr_from_channels(h, h, cfg)
    assert np.all(rep.inr_db < -100)
    # direct summation of the cross terms
    b = bf.beamform(h, cfg).normalized
    assert abs(h[0] @ b[:, 1]) ** 2 < 1e-10 and abs(h[1] @ b[:, 0]) ** 2 < 1e-10


def test_sinr_matches_loop_oracle():
    rng = np.random.default_rng(7)
    cfg = bf.BeamformerConfig(16)
    h = cgauss(rng, 4, 16)
    b = bf.beamform(h, cfg).normalized
    rep = bf.evaluate_sinr(h, b)
    np.testing.assert_allclose(rep.sinr_db, loop_sinr_db(h, b), atol=1e-9)
    snr, inr = ch.db2lin(rep.snr_db), ch.db2lin(rep.inr_db)
    np.testing.assert_allclose(ch.db2lin(rep.sinr_db), snr / (1 + inr), rtol=1e-9)


def test_removing_a_beam_never_hurts_the_others():
    rng = np.random.default_rng(8)
    cfg = bf.BeamformerConfig(32)
    for _ in range(50):
        k = int(rng.integers(2, 7))
        h = cgauss(rng, k, 32)
        b = bf.beamform(h, cfg).normalized
        base = bf.evaluate_sinr(h, b).sinr_db
        drop = int(rng.integers(k))
        b2 = b.copy()
        b2[:, drop] = 0
        after = bf.evaluate_sinr(h, b2).sinr_db
        keep = np.arange(k) != drop
        assert np.all(after[keep] >= base[keep] - 1e-12)


def test_batch_matches_per_group():
    rng = np.random.default_rng(9)
    cfg = bf.BeamformerConfig(16)
    n, k = 6, 5
    h_true = cgauss(rng, n, k, 16)
    h_est = h_true + 0.3 * cgauss(rng, n, k, 16)
    sizes = rng.integers(1, k + 1, n)
    valid = np.arange(k)[None, :] < sizes[:, None]
    h_true[~valid] = 0
    h_est[~valid] = 0
    out = bf.batch_sinr_db(h_true, h_est, valid, cfg)
    for i in range(n):
        m = sizes[i]
        ref = bf.sinr_from_channels(h_true[i, :m], h_est[i, :m], cfg).sinr_db
        np.testing.assert_allclose(out[i, :m], ref, atol=1e-9)
        assert np.all(out[i, m:] == 0)


def small_setup():
    return ch.LinkBudget(rx_gain=10 ** 3.97, noise_temperature=240.0), ch.ArrayConfig(8, 8), bf.BeamformerConfig(64)


def test_oracle_clear_sky_modes_agree():
    lb, arr, cfg = small_setup()
    lat = np.array([45.0, 45.4, 44.7, 45.1])
    lon = np.array([10.0, 10.3, 9.6, 10.8])
    a = bf.sinr_oracle(lat, lon, SAT, ORBIT, lb, arr, cfg, "csi")
    b = bf.sinr_oracle(lat, lon, SAT, ORBIT, lb, arr, cfg, bf.Mode.GEO)
    np.testing.assert_allclose(a.sinr_db, b.sinr_db, atol=1e-9)
    one = bf.sinr_oracle(lat[:1], lon[:1], SAT, ORBIT, lb, arr, cfg, "geo")
    assert one.sinr_db[0] == one.snr_db[0]


def test_oracle_geo_not_better_than_csi_on_average():
    lb, arr, cfg = small_setup()
    rng = np.random.default_rng(10)
    spec = g.ClusterSpec(CENTER, (g.Cluster(0.0, 0.0, 150.0, 1.0),))
    diff = []
    for _ in range(1000):
        k = int(rng.integers(2, 6))
        lat, lon = g.drop_user_batch(rng, (k,), spec, ORBIT)
        loss = ch.draw_shadowing(rng, k, 3.0)
        csi = bf.sinr_oracle(lat, lon, SAT, ORBIT, lb, arr, cfg, "csi", loss).sinr_db
        geo = bf.sinr_oracle(lat, lon, SAT, ORBIT, lb, arr, cfg, "geo", loss).sinr_db
        diff.append(np.mean(csi - geo))
    diff = np.array(diff)
    assert diff.mean() > 3 * diff.std() / math.sqrt(len(diff))
