"""Versioned binary model files.

Layout, all little-endian::

    magic        4s   b"DMHS"
    version      u32
    variant      4s   b"CSI\\0" or b"GEO\\0"
    n_beams, n_channels, n_heads, feature_dim, n_elements   5 x u32
    leaky_slope  f64
    mu_sinr, sigma_sinr, mu_h, sigma_h, bias_db             5 x f64
    n_blocks     u32
    then per block, in :func:`param_shapes` order:
        name_len u16, name utf-8, ndim u8, dims ndim x u32, values f64[prod(dims)]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..errors import ModelFileError
from .model import DmhsaConfig, DmhsaModel, LabelStandardizer, param_shapes

MAGIC = b"DMHS"
VERSION = 1
_HEADER = struct.Struct("<4sI4s5Id5dI")


def dumps(model: DmhsaModel) -> bytes:
    cfg, s = model.cfg, model.standardizer
    tag = cfg.variant.upper().encode().ljust(4, b"\0")
    parts = [_HEADER.pack(MAGIC, VERSION, tag, cfg.n_beams, cfg.n_channels, cfg.n_heads,
                          cfg.feature_dim, cfg.n_elements, cfg.leaky_slope,
                          s.mu_sinr, s.sigma_sinr, s.mu_h, s.sigma_h, s.bias_db,
                          len(model.params))]
    for name, shape in param_shapes(cfg).items():
        data = model.params[name].data
        if data.shape != shape:
            raise ModelFileError(f"{name} has shape {data.shape}, expected {shape}")
        raw = name.encode()
        parts.append(struct.pack(f"<H{len(raw)}sB{len(shape)}I", len(raw), raw, len(shape), *shape))
        parts.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> DmhsaModel:
    if len(buf) < _HEADER.size:
        raise ModelFileError("file too short")
    (magic, version, tag, n_beams, n_channels, n_heads, feature_dim, n_elements, slope,
     mu_sinr, sigma_sinr, mu_h, sigma_h, bias, n_blocks) = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ModelFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ModelFileError(f"unsupported format version {version}")
    variant = tag.rstrip(b"\0").decode().lower()
    cfg = DmhsaConfig(n_beams, n_channels, n_heads, feature_dim, slope, variant)
    if variant == "csi" and n_elements != feature_dim - 2:
        raise ModelFileError("CSI feature width inconsistent with element count")
    expected = param_shapes(cfg)
    if n_blocks != len(expected):
        raise ModelFileError(f"{n_blocks} parameter blocks, expected {len(expected)}")
    off = _HEADER.size
    params = {}
    for want_name, want_shape in expected.items():
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + name_len].decode()
        off += name_len
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        if name != want_name or tuple(shape) != want_shape:
            raise ModelFileError(f"block {name}{shape} where {want_name}{want_shape} was expected")
        n = int(np.prod(shape))
        values = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        params[name] = Tensor(values.reshape(shape), requires_grad=True, name=name)
    if off != len(buf):
        raise ModelFileError("trailing bytes after the last block")
    return DmhsaModel(cfg, params, LabelStandardizer(mu_sinr, sigma_sinr, mu_h, sigma_h, bias))


def save_model(model: DmhsaModel, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(model))
    return path


def load_model(path) -> DmhsaModel:
    return loads(Path(path).read_bytes())
