"""Leading-order operation counts of the SINR estimators."""

from __future__ import annotations


def complexity_estimate(method: str, n_sched: int, n_r: int | None = None, n_c: int | None = None) -> int:
    """Big-O leading term for ``method`` in {"mmse", "csi", "geo"}.

    MMSE: the Gram product dominates (n_sched^2 n_r).  CSI model: the first
    embedding layer (n_sched n_c n_r).  Location model: attention (n_sched^2 n_c).
    """
    m = method.lower().replace("-dmhsa", "")
    needed = {"mmse": ("n_r",), "csi": ("n_r", "n_c"), "geo": ("n_c",)}
    if m not in needed:
        raise ValueError(f"unknown method {method!r}")
    given = {"n_r": n_r, "n_c": n_c}
    missing = [k for k in needed[m] if given[k] is None]
    if missing:
        raise ValueError(f"{method} needs {', '.join(missing)}")
    if n_sched <= 0 or any(given[k] <= 0 for k in needed[m]):
        raise ValueError("arguments must be positive")
    if m == "mmse":
        return n_sched * n_sched * n_r
    if m == "csi":
        return n_sched * n_c * n_r
    return n_sched * n_sched * n_c
