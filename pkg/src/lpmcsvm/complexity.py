"""Monte-Carlo estimates of empirical Rademacher/Gaussian complexities of the
loss class over an l2,p ball, and least-squares fits of their scaling laws.

For a noise draw ``eps`` the inner problem is

    sup_{||w||_{2,p} <= lam}  (1/n) sum_i eps_i * loss_{y_i}(w^T x_i)

which is non-convex; it is attacked with Frank-Wolfe on the negated
objective, started from ``w = 0`` (plus optional extra starts).
"""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fw import solve
from .losses import WeightedLoss
from .norms import INF, block_norm

NOISE_KINDS = ("rademacher", "gaussian")


def noise_rng(seed, draw, stream=0):
    """Independent generator for ``(seed, draw, stream)``.

    Uses numpy's SeedSequence spawn keys, so the noise of a draw does not depend
    on how many other draws were taken or in what order.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(draw), int(stream))))


def sample_noise(kind, n, seed, draw):
    rng = noise_rng(seed, draw)
    if kind == "rademacher":
        return rng.integers(0, 2, size=n) * 2.0 - 1.0
    if kind == "gaussian":
        return rng.standard_normal(n)
    raise ValueError(f"unknown noise kind {kind!r}")


@dataclass
class DrawResult:
    value: float
    fw_iters: int
    fw_gap: float
    converged: bool
    w: np.ndarray = field(default=None, repr=False)
    error: str = ""


@dataclass
class ComplexityEstimate:
    per_draw: list
    mean: float
    draws: int
    noise_kind: str
    seed: int
    fw_traces: list
    failed: bool = False

    @property
    def stderr(self):
        if self.draws < 2:
            return math.nan
        return float(np.std(self.per_draw, ddof=1) / math.sqrt(self.draws))


def _random_start(shape, p, lam, rng):
    w = rng.standard_normal(shape)
    nrm = block_norm(w, p)
    return w * (lam * rng.uniform() / nrm) if nrm > 0 else w


def solve_draw(ds, spec, cfg, noise_kind, seed, draw, restarts=0, starts=()):
    """Best value of the inner sup for one noise draw.

    ``starts`` are extra feasible starting points tried alongside ``w = 0``
    and ``restarts`` random interior points.
    """
    eps = sample_noise(noise_kind, ds.n, seed, draw)
    obj = WeightedLoss(ds.X, ds.y0, spec, -eps / ds.n)
    shape = (ds.d, spec.c)
    inits = [np.zeros(shape)]
    inits += [np.asarray(s, dtype=float) for s in starts if s is not None]
    rng = noise_rng(seed, draw, stream=1)
    inits += [_random_start(shape, cfg.p, cfg.lam, rng) for _ in range(restarts)]
    best = None
    for w0 in inits:
        try:
            w, tr = solve(obj, cfg, w0=w0)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            if best is None:
                best = DrawResult(math.nan, 0, math.nan, False, None, repr(exc))
            continue
        value = -tr.objective_history[-1]
        if best is None or not best.value >= value:
            best = DrawResult(value, tr.iterations, tr.final_gap, tr.converged, w)
    return best


def _collect(results, noise_kind, seed):
    per_draw = [r.value for r in results]
    failed = any(r.error or not math.isfinite(r.value) for r in results)
    ok = [v for v in per_draw if math.isfinite(v)]
    mean = float(np.mean(ok)) if ok else math.nan
    traces = [{"fw_iters": r.fw_iters, "fw_gap": r.fw_gap, "converged": r.converged, "error": r.error} for r in results]
    return ComplexityEstimate(per_draw, mean, len(results), noise_kind, int(seed), traces, failed)


def _map(fn, args, jobs):
    if jobs is None or jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def _strip(r):
    r.w = None
    return r


def _one_draw(ds, spec, cfg, noise_kind, seed, t, restarts):
    return _strip(solve_draw(ds, spec, cfg, noise_kind, seed, t, restarts))


def estimate(ds, spec, cfg, draws=20, noise_kind="rademacher", seed=0, restarts=0, jobs=1):
    """AERC: average over ``draws`` noise draws of the inner supremum.

    Draw ``t`` uses the noise stream keyed by ``(seed, t)``; results are
    ordered by draw index whatever ``jobs`` is.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if noise_kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    args = [(ds, spec, cfg, noise_kind, seed, t, restarts) for t in range(draws)]
    return _collect(_map(_one_draw, args, jobs), noise_kind, seed)


def _p_chain(ds, spec, cfg, ps, noise_kind, seed, t, restarts, warm):
    out = []
    prev = None
    for p in ps:
        r = solve_draw(ds, spec, cfg.replace(p=p), noise_kind, seed, t, restarts, starts=(prev,) if warm else ())
        prev = r.w
        out.append(_strip(r))
    return out


def estimate_over_p(ds, spec, cfg, ps, draws=20, noise_kind="rademacher", seed=0, restarts=0, warm_start=True, jobs=1):
    """AERC for each exponent in ``ps`` with noise shared across exponents.

    With ``warm_start`` each draw walks the exponents in increasing order and
    also starts from the previous exponent's maximizer, which is feasible for
    the larger ball; the best value per draw is kept.  Returns estimates in
    the order of ``ps``.
    """
    order = sorted(range(len(ps)), key=lambda i: ps[i])
    sorted_ps = [ps[i] for i in order]
    args = [(ds, spec, cfg, sorted_ps, noise_kind, seed, t, restarts, warm_start) for t in range(draws)]
    chains = _map(_p_chain, args, jobs)
    by_sorted = [_collect([chain[j] for chain in chains], noise_kind, seed) for j in range(len(ps))]
    result = [None] * len(ps)
    for j, i in enumerate(order):
        result[i] = by_sorted[j]
    return result


@dataclass
class ScalingFit:
    tau_hat: float
    residual_rms: float
    model_kind: str


def scaling_basis(x, c_or_p, model_kind):
    """``c^(1/2 - 1/max(2,p))`` with ``p = x`` (in_p) or ``c = x`` (in_c)."""
    x = float(x)
    c_or_p = float(c_or_p)
    if model_kind == "in_p":
        c, p = c_or_p, x
    elif model_kind == "in_c":
        c, p = x, c_or_p
    else:
        raise ValueError(f"model_kind must be 'in_p' or 'in_c', got {model_kind!r}")
    expo = 0.5 - (0.0 if p == INF else 1.0 / max(2.0, p))
    return c ** expo


def fit_scaling(xs, ys, c_or_p, model_kind):
    """Least-squares ``tau >= 0`` in ``y ~ tau * basis(x)``."""
    if len(xs) != len(ys) or len(xs) < 1:
        raise ValueError("xs and ys must be non-empty and of equal length")
    a = np.array([scaling_basis(x, c_or_p, model_kind) for x in xs])
    y = np.asarray(ys, dtype=float)
    denom = float(a @ a)
    if denom == 0:
        raise ValueError("all basis values are zero")
    tau = max(0.0, float(a @ y) / denom)
    resid = y - tau * a
    return ScalingFit(tau, float(np.sqrt(np.mean(resid**2))), model_kind)


def format_exp(p):
    return "inf" if p == INF else repr(float(p))


def aerc_csv(settings, fit=None):
    """CSV text for a sweep.

    ``settings`` is a list of ``(p, c, ComplexityEstimate)``.  One ``draw``
    row per draw, one ``mean`` row per setting, and a final ``fit`` row when
    ``fit`` is given (``value`` holds tau_hat).
    """
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["kind", "p", "c", "draw", "value", "fw_iters", "fw_gap", "residual_rms"])
    for p, c, est in settings:
        for t, (v, tr) in enumerate(zip(est.per_draw, est.fw_traces)):
            wr.writerow(["draw", format_exp(p), c, t, repr(float(v)), tr["fw_iters"], repr(float(tr["fw_gap"])), ""])
        wr.writerow(["mean", format_exp(p), c, "", repr(float(est.mean)), "", "", ""])
    if fit is not None:
        wr.writerow(["fit", fit.model_kind, "", "", repr(fit.tau_hat), "", "", repr(fit.residual_rms)])
    return buf.getvalue()
