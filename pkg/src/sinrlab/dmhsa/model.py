"""Dual masked multi-head self-attention SINR estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import AllMasked, EmptySet, ShapeMismatch
from .features import attention_masks

MODULES = ("snr", "inr")


@dataclass(frozen=True)
class DmhsaConfig:
    n_beams: int = 24
    n_channels: int = 8
    n_heads: int = 4
    feature_dim: int = 3
    leaky_slope: float = 0.01
    variant: str = "geo"

    def __post_init__(self):
        if self.n_channels % self.n_heads:
            raise ValueError("n_channels must be a multiple of n_heads")
        if self.variant not in ("csi", "geo"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "geo" and self.feature_dim != 3:
            raise ValueError("the location variant takes 3 features")

    @property
    def head_dim(self) -> int:
        return self.n_channels // self.n_heads

    @property
    def n_elements(self) -> int:
        """Array size implied by the CSI feature width (0 for the location variant)."""
        return self.feature_dim - 2 if self.variant == "csi" else 0

    @classmethod
    def for_variant(cls, variant: str, n_elements: int = 512, **kw) -> "DmhsaConfig":
        dim = n_elements + 2 if variant == "csi" else 3
        return cls(feature_dim=dim, variant=variant, **kw)


def param_shapes(cfg: DmhsaConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in their canonical (file) order."""
    c, h, d = cfg.n_channels, cfg.n_heads, cfg.head_dim
    shapes = {
        "embed.fc1.weight": (cfg.feature_dim, c),
        "embed.fc1.bias": (c,),
        "embed.ln1.gamma": (c,),
        "embed.ln1.beta": (c,),
        "embed.fc2.weight": (c, c),
        "embed.fc2.bias": (c,),
        "embed.ln2.gamma": (c,),
        "embed.ln2.beta": (c,),
        "embed.position": (cfg.n_beams, c),
    }
    for m in MODULES:
        for proj in ("query", "key", "value"):
            shapes[f"{m}.{proj}.weight"] = (h, c, d)
            shapes[f"{m}.{proj}.bias"] = (h, 1, d)
        shapes[f"{m}.out.weight"] = (c, c)
        shapes[f"{m}.out.bias"] = (c,)
        shapes[f"{m}.head.weight"] = (c, 1)
        shapes[f"{m}.head.bias"] = (1,)
    return shapes


def parameter_count_formula(cfg: DmhsaConfig) -> int:
    """Closed form of the learnable parameter count: 9 C^2 + (delta + 16 + N_B) C + 2."""
    c = cfg.n_channels
    return 9 * c * c + (cfg.feature_dim + 16 + cfg.n_beams) * c + 2


def init_params(cfg: DmhsaConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    gain = math.sqrt(6.0 / (1.0 + cfg.leaky_slope**2))
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".gamma"):
            value = np.ones(shape)
        elif name.endswith((".bias", ".beta")):
            value = np.zeros(shape)
        elif name == "embed.position":
            value = 0.02 * rng.standard_normal(shape)
        else:
            fan_in = shape[-2]
            value = rng.uniform(-gain / math.sqrt(fan_in), gain / math.sqrt(fan_in), size=shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return params


def count_parameters(params: dict[str, Tensor]) -> int:
    return int(sum(p.data.size for p in params.values()))


@dataclass
class ForwardResult:
    estimate: Tensor  # (batch, n_beams), snr_head - inr_head
    snr_head: Tensor
    inr_head: Tensor


def _additive(allowed: np.ndarray) -> np.ndarray:
    return np.where(allowed, 0.0, ops.MASK_NEG)[:, None]  # broadcast over heads


def _mhsa_module(x: Tensor, params, prefix: str, mask: np.ndarray, cfg: DmhsaConfig) -> Tensor:
    b, n, c = x.shape
    xh = ops.reshape(x, (b, 1, n, c))
    q = ops.affine(xh, params[f"{prefix}.query.weight"], params[f"{prefix}.query.bias"])
    k = ops.affine(xh, params[f"{prefix}.key.weight"], params[f"{prefix}.key.bias"])
    v = ops.affine(xh, params[f"{prefix}.value.weight"], params[f"{prefix}.value.bias"])
    scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(cfg.head_dim))
    weights = ops.masked_softmax(scores, mask)
    context = ops.concat_heads(ops.matmul(weights, v))
    out = ops.affine(context, params[f"{prefix}.out.weight"], params[f"{prefix}.out.bias"])
    head = ops.affine(out, params[f"{prefix}.head.weight"], params[f"{prefix}.head.bias"])
    return ops.reshape(head, (b, n))


def forward(features, valid, params: dict[str, Tensor], cfg: DmhsaConfig) -> ForwardResult:
    """Standardised SINR estimates for a batch.

    ``features`` is (batch, n_beams, feature_dim) and ``valid`` the matching
    (batch, n_beams) padding mask.  Outputs in padded slots are meaningless.
    """
    feats = np.asarray(features.data if isinstance(features, Tensor) else features, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if feats.ndim == 2:
        feats, valid = feats[None], valid[None]
    if feats.shape[1:] != (cfg.n_beams, cfg.feature_dim) or valid.shape != feats.shape[:2]:
        raise ShapeMismatch(f"features {feats.shape} / mask {valid.shape} do not match {cfg}")
    x = features if isinstance(features, Tensor) and features.data.ndim == 3 else Tensor(feats)
    slope = cfg.leaky_slope

    e = ops.affine(x, params["embed.fc1.weight"], params["embed.fc1.bias"])
    e = ops.leaky_relu(ops.layer_norm(e, params["embed.ln1.gamma"], params["embed.ln1.beta"]), slope)
    e = ops.affine(e, params["embed.fc2.weight"], params["embed.fc2.bias"])
    e = ops.leaky_relu(ops.layer_norm(e, params["embed.ln2.gamma"], params["embed.ln2.beta"]), slope)
    e = ops.add(e, params["embed.position"])

    snr_allowed, inr_allowed = attention_masks(valid)
    snr = _mhsa_module(e, params, "snr", _additive(snr_allowed), cfg)
    inr = _mhsa_module(e, params, "inr", _additive(inr_allowed), cfg)
    return ForwardResult(ops.sub(snr, inr), snr, inr)


def masked_mse_loss(pred, labels, masks) -> Tensor:
    """Mean squared error over the valid slots only."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    labels = np.asarray(labels, dtype=np.float64)
    m = np.asarray(masks, dtype=np.float64)
    if pred.shape != labels.shape or labels.shape != m.shape:
        raise ShapeMismatch(f"pred {pred.shape}, labels {labels.shape}, masks {m.shape}")
    count = m.sum()
    if count == 0:
        raise AllMasked("no valid slot in the batch")
    # masked label entries are replaced so that non-finite padding cannot leak in
    diff = ops.sub(pred, np.where(m > 0, labels, 0.0))
    sq = ops.mul(ops.mul(diff, diff), m)
    return ops.scale(ops.total(sq), 1.0 / count)


@dataclass
class LabelStandardizer:
    mu_sinr: float = 0.0
    sigma_sinr: float = 1.0
    mu_h: float = 0.0
    sigma_h: float = 1.0
    bias_db: float = 0.0

    def __post_init__(self):
        if not (self.sigma_sinr > 0 and self.sigma_h > 0):
            raise ValueError("standardisation scales must be positive")


def standardize_labels(sinr_db, s: LabelStandardizer):
    return (np.asarray(sinr_db) - s.mu_sinr) / s.sigma_sinr


def destandardize(outputs, s: LabelStandardizer):
    return np.asarray(outputs) * s.sigma_sinr + s.mu_sinr - s.bias_db


@dataclass
class DmhsaModel:
    cfg: DmhsaConfig
    params: dict[str, Tensor]
    standardizer: LabelStandardizer = field(default_factory=LabelStandardizer)

    @classmethod
    def initialize(cls, cfg: DmhsaConfig, rng: np.random.Generator,
                   standardizer: LabelStandardizer | None = None) -> "DmhsaModel":
        return cls(cfg, init_params(cfg, rng), standardizer or LabelStandardizer())

    def forward(self, features, valid) -> ForwardResult:
        return forward(features, valid, self.params, self.cfg)

    def predict_std(self, features, valid, chunk: int = 4096) -> np.ndarray:
        """Standardised outputs, evaluated in chunks without building a graph."""
        features = np.asarray(features)
        valid = np.asarray(valid, dtype=bool)
        if features.ndim == 2:
            features, valid = features[None], valid[None]
        frozen = {k: Tensor(v.data) for k, v in self.params.items()}
        out = [forward(features[i:i + chunk], valid[i:i + chunk], frozen, self.cfg).estimate.data
               for i in range(0, len(features), chunk)]
        return np.concatenate(out, axis=0)

    def predict_db(self, features, valid) -> np.ndarray:
        return destandardize(self.predict_std(features, valid), self.standardizer)

    def n_parameters(self) -> int:
        return count_parameters(self.params)


def calibrate_bias(model: DmhsaModel, features, valid, sinr_db) -> float:
    """Mean signed error (dB) over valid slots with the bias removed; stored on the model."""
    valid = np.asarray(valid, dtype=bool)
    if valid.ndim == 1:
        valid = valid[None]
    if not valid.any():
        raise EmptySet("calibration set has no valid slot")
    s = model.standardizer
    raw = np.asarray(model.predict_std(features, valid)) * s.sigma_sinr + s.mu_sinr
    labels = np.asarray(sinr_db).reshape(valid.shape)
    s.bias_db = float(np.mean(raw[valid] - labels[valid]))
    return s.bias_db
