"""Closed-form generalization bounds for multi-class linear models.

Two routes are evaluated for a constraint ``tau(w) <= lam`` on the weights:

* the Gaussian-complexity (GC) route, driven by the variant-l2 Lipschitz
  pair ``(l1, l2)`` of the loss and by ``sum_i ||x_i||^2``;
* the covering-number (CN) route, driven by the l_inf Lipschitz constant
  and by ``max_i ||x_i||``.

``tau`` is either the block norm ``||.||_{2,p}`` or the Schatten-p norm.
Logarithms are natural except the explicit base-2 log in the CN formulas.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .losses import LipschitzProfile, LossSpec, lipschitz_profile, loss_value
from .norms import INF, block_norm, check_exponent, dual_exponent

REGULARIZERS = ("block_l2p", "schatten")

# method -> loss family; None means "use the family given by the caller"
METHODS = {
    "crammer_singer": "cs_margin",
    "logistic": "multinomial_logistic",
    "weston_watkins": "weston_watkins",
    "llw": "llw",
    "jenssen": "jenssen",
    "top_k": "top_k",
    "lp_norm": "cs_margin",
    "schatten": "cs_margin",
}

CLI_METHODS = {
    "crammer-singer": "crammer_singer",
    "logistic": "logistic",
    "ww": "weston_watkins",
    "llw": "llw",
    "jenssen": "jenssen",
    "top-k": "top_k",
    "lp-norm": "lp_norm",
    "schatten": "schatten",
}

# methods whose GC bound at p = 2 is stated with the dual exponent fixed at 2
CLASSIC_METHODS = ("crammer_singer", "logistic", "weston_watkins", "llw", "jenssen")

GRID_POINTS = 2048
Q_STAR_FLOOR = 1.0 + 1e-6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, a, b, tol=1e-12, max_iter=200):
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def minimize_on_interval(f, lo, hi, grid_points=GRID_POINTS):
    """Approximate ``inf_{lo <= x <= hi} f(x)``: geometric grid, then a
    golden-section search between the neighbours of the best grid point.

    Returns ``(x, f(x))``; never worse than the best grid point.
    """
    if hi <= lo:
        return hi, f(hi)
    grid = np.geomspace(lo, hi, grid_points)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmin(vals))
    best = (float(grid[i]), float(vals[i]))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    if b > a:
        x, fx = _golden_section(f, a, b)
        if fx < best[1]:
            best = (float(x), float(fx))
    return best


def q_star_cap(p, c, d=None):
    """Upper end of the dual-exponent search interval."""
    if p > 1:
        return dual_exponent(p)
    return max(4.0, 4.0 * math.log(c)) if c > 1 else 4.0


def _c_power(c, p):
    # c^(1/2 - 1/max(2, p))
    return c ** (0.5 - (0.0 if p == INF else 1.0 / max(2.0, p)))


def _log_factor(n, c):
    # 1 + log2^{3/2}(sqrt(2) n^{3/2} c)
    return 1.0 + math.log2(math.sqrt(2.0) * n**1.5 * c) ** 1.5


def _rank_factor(c, d, p):
    # min(c, d)^(1/2 - 1/p), used for p > 2
    return min(c, d) ** (0.5 - (0.0 if p == INF else 1.0 / p))


def worst_case_rc_lp(lam, max_norm, n, c, p):
    """Two-sided bounds on the worst-case Rademacher complexity of the linear
    class over the l2,p ball, on ``nc`` points."""
    p = check_exponent(p)
    cf = c ** (-(0.0 if p == INF else 1.0 / max(2.0, p)))
    lower = lam * max_norm * (2.0 * n) ** -0.5 * cf
    upper = lam * max_norm * n**-0.5 * cf
    return lower, upper


def worst_case_rc_schatten(lam, max_norm, n, c, d, p):
    p = check_exponent(p)
    lower = lam * max_norm * (2.0 * n * c) ** -0.5
    upper = lam * max_norm * (n * c) ** -0.5
    if p > 2:
        upper *= _rank_factor(c, d, p)
    return lower, upper


def confidence_slack(b_psi, n, delta):
    """``3 * b_psi * sqrt(log(2/delta) / (2n))``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 3.0 * b_psi * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def structural_risk(empirical_risk, w, max_norm, n, risk_lambda=0.5):
    """Empirical risk plus ``risk_lambda * ||w||_{2,2} * max_norm / sqrt(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return empirical_risk + risk_lambda * block_norm(w, 2.0) * max_norm / math.sqrt(n)


@dataclass
class BoundQuery:
    n: int
    c: int
    lam: float
    p: float
    max_norm: float
    sum_sq: float
    delta: float = 0.01
    d: Optional[int] = None
    regularizer: str = "block_l2p"
    profile: Optional[LipschitzProfile] = None
    k: Optional[int] = None
    gram_schatten: Optional[Callable[[float], float]] = field(default=None, repr=False)

    def __post_init__(self):
        self.p = check_exponent(self.p)
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")
        if self.max_norm < 0 or self.sum_sq < 0 or not self.lam > 0:
            raise ValueError("norm statistics must be non-negative and lam positive")

    @classmethod
    def from_stats(cls, st, n, c, d, lam, p, **kw):
        return cls(n=n, c=c, d=d, lam=lam, p=p, max_norm=st.max_row_norm, sum_sq=st.sum_sq_norms,
                   gram_schatten=st.gram_schatten if st._X is not None else None, **kw)


def _profile(q):
    if q.profile is None:
        raise ValueError("query has no Lipschitz profile")
    return q.profile


def _lp_bracket(pr, c):
    def f(qs):
        root = math.sqrt(qs)
        return pr.l1 * root * c ** (1.0 / qs) + pr.l2 * root * max(c ** (1.0 / qs - 0.5), 1.0)

    return f


def gc_bound_lp(q, grid_points=GRID_POINTS):
    """GC-route bound for the l2,p ball.

    ``(2 lam sqrt(pi) / n) sqrt(sum_sq) * inf_{q >= p} [l1 sqrt(q*) c^(1/q*)
    + l2 sqrt(q*) max(c^(1/q* - 1/2), 1)]``, the infimum taken over the dual
    exponent ``q*`` in ``[1 + 1e-6, p*]`` (capped for ``p = 1``).
    """
    f = _lp_bracket(_profile(q), q.c)
    _, inf_val = minimize_on_interval(f, Q_STAR_FLOOR, q_star_cap(q.p, q.c), grid_points)
    return 2.0 * q.lam * math.sqrt(math.pi) / q.n * math.sqrt(q.sum_sq) * inf_val


def gc_bound_lp_at(q, q_star):
    """The same bound with the dual exponent fixed at ``q_star`` (no infimum)."""
    f = _lp_bracket(_profile(q), q.c)
    return 2.0 * q.lam * math.sqrt(math.pi) / q.n * math.sqrt(q.sum_sq) * f(q_star)


def cn_bound_lp(q):
    L = _profile(q).l_inf
    return 27.0 * L * q.lam * q.max_norm * _c_power(q.c, q.p) / math.sqrt(q.n) * _log_factor(q.n, q.c)


def gc_bound_schatten(q, gram_schatten=None, grid_points=GRID_POINTS):
    """GC-route bound for the Schatten-p ball.

    ``gram_schatten(r)`` must return ``||sum_i x_i x_i^T||_{S_r}``; it is only
    needed for ``p <= 2``.
    """
    pr = _profile(q)
    c, n = q.c, q.n
    root_sq = math.sqrt(q.sum_sq)
    if q.p > 2:
        if q.d is None:
            raise ValueError("Schatten bounds for p > 2 need the dimension d")
        pre = 2.0**1.25 * math.pi * q.lam * (pr.l1 * math.sqrt(c) + pr.l2) * _rank_factor(c, q.d, q.p)
        return pre / (n * math.sqrt(math.e)) * root_sq
    gram = gram_schatten or q.gram_schatten
    if gram is None and pr.l1 != 0:
        raise ValueError("Schatten bounds for p <= 2 need the Gram matrix Schatten norms")

    def f(qs):
        inner = (pr.l1 * c ** (1.0 / qs) + pr.l2) * root_sq
        if pr.l1 != 0:
            inner += pr.l1 * math.sqrt(c) * math.sqrt(gram(qs / 2.0))
        return math.sqrt(qs) * inner

    hi = q_star_cap(q.p, c)
    if q.p == 1 and q.d is not None:
        hi = max(hi, 4.0 * math.log(max(q.d, 1)))
    _, inf_val = minimize_on_interval(f, 2.0, hi, grid_points)
    return 2.0**0.75 * math.pi * q.lam / (n * math.sqrt(math.e)) * inf_val


def cn_bound_schatten(q):
    L = _profile(q).l_inf
    val = 27.0 * L * q.lam * q.max_norm / math.sqrt(q.n) * _log_factor(q.n, q.c)
    if q.p > 2:
        if q.d is None:
            raise ValueError("Schatten bounds for p > 2 need the dimension d")
        val *= _rank_factor(q.c, q.d, q.p)
    return val


@dataclass
class BoundReport:
    method: str
    gc_bound: float
    cn_bound: float
    rc_interval: tuple
    slack: float
    b_psi: float
    query: BoundQuery
    loss: LossSpec
    warnings: list = field(default_factory=list)

    def as_row(self):
        q = self.query
        pr = q.profile
        return {
            "method": self.method,
            "loss": self.loss.cli_name,
            "regularizer": q.regularizer,
            "p": "inf" if q.p == INF else repr(q.p),
            "lambda": repr(float(q.lam)),
            "n": q.n,
            "c": q.c,
            "d": "" if q.d is None else q.d,
            "k": "" if q.k is None else q.k,
            "delta": repr(float(q.delta)),
            "max_norm": repr(float(q.max_norm)),
            "sum_sq": repr(float(q.sum_sq)),
            "l_inf": repr(float(pr.l_inf)),
            "l1": repr(float(pr.l1)),
            "l2": repr(float(pr.l2)),
            "gc_bound": repr(float(self.gc_bound)),
            "cn_bound": repr(float(self.cn_bound)),
            "rc_lower": repr(float(self.rc_interval[0])),
            "rc_upper": repr(float(self.rc_interval[1])),
            "b_psi": repr(float(self.b_psi)),
            "slack": repr(float(self.slack)),
            "warnings": "; ".join(self.warnings),
        }

    def format_text(self):
        row = self.as_row()
        width = max(len(k) for k in row)
        lines = [f"{k.ljust(width)}  {v}" for k, v in row.items()]
        lines.append(f"{'note'.ljust(width)}  natural log except log2 in the CN route")
        return "\n".join(lines)


def reports_csv(reports):
    buf = io.StringIO()
    rows = [r.as_row() for r in reports]
    wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    wr.writeheader()
    wr.writerows(rows)
    return buf.getvalue()


def method_loss(method, c, k=None, base="hinge"):
    try:
        family = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(METHODS)}") from None
    if family == "multinomial_logistic":
        base = "logistic"
    elif family == "cs_margin" or family == "top_k":
        base = "hinge"
    return LossSpec(family, c, base, (k or 1) if family == "top_k" else 1)


def method_bound(method, q, base="hinge", b_psi=None):
    """Evaluate both bound routes, the worst-case RC interval and the slack.

    Parameters
    ----------
    method : str
        Key of :data:`METHODS`.
    q : BoundQuery
        If ``q.profile`` is set it must match the method's loss.
    base : str
        Base loss for the Weston-Watkins, LLW and Jenssen losses.
    b_psi : float, optional
        Bound on the loss over the hypothesis class.  Defaults to
        ``loss(0) + l_inf * lam * max_norm``.
    """
    spec = method_loss(method, q.c, q.k, base)
    profile = lipschitz_profile(spec)
    if q.profile is not None and q.profile != profile:
        raise ValueError(f"profile {q.profile} is inconsistent with method {method!r} ({profile})")
    if (method == "schatten") != (q.regularizer == "schatten"):
        raise ValueError(f"method {method!r} is inconsistent with regularizer {q.regularizer!r}")
    if method == "top_k" and q.k is None:
        raise ValueError("top_k needs k")
    from dataclasses import replace

    q = replace(q, profile=profile)
    warnings = []
    if q.regularizer == "schatten":
        gc = gc_bound_schatten(q)
        cn = cn_bound_schatten(q)
        if q.d is None:
            raise ValueError("Schatten queries need d")
        rc = worst_case_rc_schatten(q.lam, q.max_norm, q.n, q.c, q.d, q.p)
    else:
        if method == "top_k" and q.p == 2:
            gc = 2.0 * q.lam * math.sqrt(2.0 * math.pi) / q.n * (math.sqrt(q.c / q.k) + 1.0) * math.sqrt(q.sum_sq)
        elif method in CLASSIC_METHODS and q.p == 2:
            # per-loss closed forms plug in q = 2 rather than taking the infimum
            gc = gc_bound_lp_at(q, 2.0)
        else:
            gc = gc_bound_lp(q)
        cn = cn_bound_lp(q)
        rc = worst_case_rc_lp(q.lam, q.max_norm, q.n, q.c, q.p)
    if b_psi is None:
        # sup_w ||w||_{2,inf} <= lam for both regularizers
        b_psi = loss_value(spec, np.zeros(q.c), 1) + profile.l_inf * q.lam * q.max_norm
    b_hat = q.max_norm * q.lam
    if not b_psi <= 2.0 * math.e * b_hat * q.n * q.c * profile.l_inf:
        warnings.append("CN route precondition B_psi <= 2e*B*n*c*L fails")
    slack = confidence_slack(b_psi, q.n, q.delta)
    return BoundReport(method, gc, cn, rc, slack, b_psi, q, spec, warnings)


# Shapes of the comparison table: (method, structural-result shape, GC shape, CN shape).
# B1 = sqrt(mean_i K(x_i, x_i)), Binf = max_i ||x_i||.
TABLE1_SHAPES = [
    ("crammer_singer", "B1 n^-1/2 c^1/2", "B1 n^-1/2 c^1/2", "Binf n^-1/2 log^3/2(nc)"),
    ("logistic", "B1 n^-1/2 c^1/2", "B1 n^-1/2 c^1/2", "Binf n^-1/2 log^3/2(nc)"),
    ("weston_watkins", "B1 n^-1/2 c^3/2", "B1 n^-1/2 c", "Binf n^-1/2 c log^3/2(nc)"),
    ("llw", "B1 n^-1/2 c", "B1 n^-1/2 c", "Binf n^-1/2 c log^3/2(nc)"),
    ("jenssen", "B1 n^-1/2 c^1/2", "B1 n^-1/2", "Binf n^-1/2 log^3/2(nc)"),
    ("top_k", "B1 n^-1/2 c^1/2", "B1 n^-1/2 (c/k)^1/2", "Binf n^-1/2 log^3/2(nc)"),
    ("lp_norm", "B1 n^-1/2 c^(1-1/p)", "B1 n^-1/2 c^(1-1/p)", "Binf n^-1/2 c^(1/2-1/max(2,p)) log^3/2(nc)"),
    ("schatten", "B1 n^-1/2 c^1/2 (p<2); c^(1-1/p) (p>=2)", "same as structural",
     "Binf n^-1/2 c^(1/2-1/p)_+ log^3/2(nc)"),
]


def comparison_table(n, c, lam=1.0, max_norm=1.0, sum_sq=None, delta=0.01, p=2.0, d=None, k=None):
    """Evaluate every method at one setting, paired with its asymptotic shapes.

    ``sum_sq`` defaults to ``n * max_norm**2`` (all rows at the maximal norm);
    Schatten rows need ``d`` and, for ``p <= 2``, use the identity-like Gram
    norm ``||sum x x^T||_{S_r} = (n max_norm^2 / d) d^(1/r)``.
    """
    sum_sq = n * max_norm**2 if sum_sq is None else sum_sq
    d = d if d is not None else c
    k = k if k is not None else max(1, c // 2)
    rows = []
    for method, shape_struct, shape_gc, shape_cn in TABLE1_SHAPES:
        reg = "schatten" if method == "schatten" else "block_l2p"
        mp = p if method in ("lp_norm", "schatten") else 2.0
        gram = lambda r, s=sum_sq, dd=d: s / dd * dd ** (1.0 / r)
        q = BoundQuery(n=n, c=c, lam=lam, p=mp, max_norm=max_norm, sum_sq=sum_sq, delta=delta, d=d,
                       regularizer=reg, k=k if method == "top_k" else None, gram_schatten=gram)
        rep = method_bound(method, q)
        rows.append({
            "method": method,
            "p": "inf" if mp == INF else repr(float(mp)),
            "structural_shape": shape_struct,
            "gc_shape": shape_gc,
            "cn_shape": shape_cn,
            "gc_bound": repr(rep.gc_bound),
            "cn_bound": repr(rep.cn_bound),
            "tighter": "gc" if rep.gc_bound < rep.cn_bound else "cn",
        })
    return rows
