"""Fast property checks of the oracle, gradients and masking, runnable from the CLI."""

from __future__ import annotations

import numpy as np

from . import beamforming
from .autodiff import Tensor, backward
from .dmhsa import DmhsaConfig, DmhsaModel, complexity_estimate, masked_mse_loss


def _random_channel(rng, k, n):
    return rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))


def check_mmse(rng, trials: int = 50) -> tuple[bool, str]:
    cfg_cache = {}
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 65))
        k = int(rng.integers(1, min(n, 24) + 1))
        cfg = cfg_cache.setdefault(n, beamforming.BeamformerConfig(n, 0.065))
        h = _random_channel(rng, k, n)
        ref = h.conj().T @ np.linalg.inv(h @ h.conj().T + cfg.regularization * np.eye(k))
        b = beamforming.mmse_beamformer(h, cfg)
        worst = max(worst, np.linalg.norm(b - ref) / np.linalg.norm(ref))
    return worst <= 1e-9, f"max relative deviation {worst:.2e}"


def check_row_norms(rng) -> tuple[bool, str]:
    cfg = beamforming.BeamformerConfig(64, 0.065)
    b, _ = beamforming.per_antenna_normalize(beamforming.mmse_beamformer(_random_channel(rng, 8, 64), cfg), cfg)
    dev = np.max(np.abs(np.linalg.norm(b, axis=1) - np.sqrt(cfg.total_power / 64)))
    return dev <= 1e-10, f"max row-norm deviation {dev:.2e}"


def check_single_user(rng) -> tuple[bool, str]:
    cfg = beamforming.BeamformerConfig(16, 0.065)
    rep = beamforming.sinr_from_channels(*(2 * [_random_channel(rng, 1, 16)]), cfg)
    return bool(rep.sinr_db[0] == rep.snr_db[0]), f"SINR {rep.sinr_db[0]:.6f} dB, SNR {rep.snr_db[0]:.6f} dB"


def _tiny_model(rng):
    cfg = DmhsaConfig(n_beams=4, n_channels=4, n_heads=2, variant="geo")
    model = DmhsaModel.initialize(cfg, rng)
    x = rng.uniform(-0.5, 0.5, (3, 4, 3))
    valid = np.array([[1, 1, 1, 0], [1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)
    y = rng.standard_normal((3, 4))
    return model, x, valid, y


def check_gradients(rng, n_probe: int = 20) -> tuple[bool, str]:
    model, x, valid, y = _tiny_model(rng)

    def loss_value():
        return float(masked_mse_loss(model.forward(x, valid).estimate, y, valid).data)

    backward(masked_mse_loss(model.forward(x, valid).estimate, y, valid))
    worst = 0.0
    names = list(model.params)
    for _ in range(n_probe):
        p = model.params[names[rng.integers(len(names))]]
        i = tuple(int(rng.integers(s)) for s in p.data.shape)
        old = p.data[i]
        eps = 1e-6
        p.data[i] = old + eps
        up = loss_value()
        p.data[i] = old - eps
        down = loss_value()
        p.data[i] = old
        fd = (up - down) / (2 * eps)
        worst = max(worst, abs(fd - p.grad[i]) / max(1e-6, abs(fd), abs(p.grad[i])))
    return worst <= 1e-3, f"max relative gradient error {worst:.2e}"


def check_masking(rng) -> tuple[bool, str]:
    model, x, valid, y = _tiny_model(rng)
    out = model.forward(x, valid).estimate.data
    x2 = np.where(valid[..., None], x, rng.standard_normal(x.shape) * 100)
    y2 = np.where(valid, y, 1e6)
    out2 = model.forward(x2, valid).estimate.data
    same = np.array_equal(out[valid], out2[valid])
    loss = masked_mse_loss(Tensor(out), y, valid).data
    loss2 = masked_mse_loss(Tensor(out2), y2, valid).data
    return bool(same and loss == loss2), "padded-slot perturbation " + ("leaves" if same else "changes") + " outputs"


def check_complexity() -> tuple[bool, str]:
    got = (complexity_estimate("mmse", 24, n_r=512), complexity_estimate("csi", 24, 512, 8),
           complexity_estimate("geo", 24, n_c=8))
    return got == (294912, 98304, 4608), f"N_C=8 counts {got}"


def run(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    checks = [
        ("mmse-vs-inverse", lambda: check_mmse(rng)),
        ("per-antenna-norm", lambda: check_row_norms(rng)),
        ("single-user-sinr", lambda: check_single_user(rng)),
        ("gradient-fd", lambda: check_gradients(rng)),
        ("padding-mask", lambda: check_masking(rng)),
        ("complexity", check_complexity),
    ]
    return [(name, *fn()) for name, fn in checks]
