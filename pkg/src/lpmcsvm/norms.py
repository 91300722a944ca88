"""Block l2,p norms, Schatten-p norms and dual exponents.

Weight matrices are dense ``(d, c)`` arrays whose column ``j`` holds the
weight vector of class ``j``.  Exponents are plain floats with ``math.inf``
standing for the infinite exponent; every routine branches on the three
regimes ``p == 1``, ``1 < p < inf`` and ``p == inf`` explicitly.
"""
import math

import numpy as np

INF = math.inf


def parse_exponent(text):
    """Parse ``"inf"``, ``"4/3"`` or ``"2.5"`` into an exponent."""
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "+inf"):
        return INF
    if "/" in s:
        num, den = s.split("/", 1)
        value = float(num) / float(den)
    else:
        value = float(s)
    return value


def format_exponent(p):
    return "inf" if p == INF else repr(float(p))


def check_exponent(p, name="p"):
    if math.isnan(p) or p < 1:
        raise ValueError(f"{name} must satisfy {name} >= 1, got {p!r}")
    return float(p)


def dual_exponent(p):
    """Return ``p*`` with ``1/p + 1/p* = 1`` (so 1 <-> inf, 2 <-> 2)."""
    p = check_exponent(p)
    if p == 1:
        return INF
    if p == INF:
        return 1.0
    return p / (p - 1.0)


def vector_norm(t, p):
    """Plain l_p norm of a 1-d array."""
    p = check_exponent(p)
    a = np.abs(np.asarray(t, dtype=float))
    if a.size == 0:
        return 0.0
    if p == INF:
        return float(a.max())
    if p == 1:
        return float(a.sum())
    m = a.max()
    if m == 0:
        return 0.0
    # scale by the max entry so large p does not overflow
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def column_norms(w):
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2-d (d x c)")
    sq = np.einsum("ij,ij->j", w, w)
    if np.all(np.isfinite(sq)) and not np.any(sq < 1e-290):
        return np.sqrt(sq)
    # over- or underflow: rescale each column by its largest entry
    scale = np.max(np.abs(w), axis=0) if w.shape[0] else np.zeros(w.shape[1])
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.sqrt(np.einsum("ij,ij->j", w / safe, w / safe))


def block_norm(w, p):
    """``||w||_{2,p}``: the l_p norm of the per-column l_2 norms."""
    return vector_norm(column_norms(w), p)


def singular_values(m):
    """Singular values of ``m`` sorted in non-increasing order."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if m.size == 0:
        return np.zeros(0)
    s = np.linalg.svd(m, compute_uv=False)
    return np.sort(s)[::-1]


def schatten_norm(m, q):
    """``||m||_{S_q}``, the l_q norm of the singular values."""
    q = check_exponent(q, "q")
    return vector_norm(singular_values(m), q)
