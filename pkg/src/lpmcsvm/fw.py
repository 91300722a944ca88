"""Frank-Wolfe over the block l2,p ball ``{w : ||w||_{2,p} <= radius}``.

The linear subproblem has a closed form (``lmo_l2p``), steps come from
Armijo backtracking, and the Frank-Wolfe duality gap is the stopping test.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .norms import INF, check_exponent, column_norms, dual_exponent

log = logging.getLogger(__name__)


class NotDescentDirection(ValueError):
    pass


@dataclass(frozen=True)
class FwConfig:
    p: float = 2.0
    lam: float = 1.0
    max_iters: int = 10_000
    gap_tol: float = 1e-4
    armijo_c1: float = 1e-4
    backtrack_beta: float = 0.5
    min_step: float = 1e-12
    step_rule: str = "armijo"

    def __post_init__(self):
        check_exponent(self.p)
        if not self.lam > 0:
            raise ValueError("ball radius must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.gap_tol > 0:
            raise ValueError("gap_tol must be positive")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_beta < 1:
            raise ValueError("backtrack_beta must lie in (0, 1)")
        if not self.min_step > 0:
            raise ValueError("min_step must be positive")
        if self.step_rule not in ("armijo", "harmonic"):
            raise ValueError("step_rule must be 'armijo' or 'harmonic'")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class FwTrace:
    iterations: int = 0
    final_gap: float = math.inf
    objective_history: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False


class FunctionObjective:
    """Adapt a callable ``w -> (value, grad)`` to the objective interface."""

    def __init__(self, value_and_grad, value=None):
        self._vg = value_and_grad
        self._v = value

    def value_and_grad(self, w):
        return self._vg(w)

    def value(self, w):
        if self._v is not None:
            return self._v(w)
        return self._vg(w)[0]


def as_objective(obj):
    if hasattr(obj, "value_and_grad"):
        return obj
    return FunctionObjective(obj)


def _line_function(obj, w, direction):
    if hasattr(obj, "line"):
        return obj.line(w, direction)
    return lambda gamma: obj.value(w + gamma * direction)


def lmo_l2p(v, p):
    """Minimizer of ``<w, v>`` over the unit ``l2,p`` ball, in closed form.

    Returns ``(w, degenerate)``; ``degenerate`` is True when ``v`` is all zero
    (the zero matrix is returned).  Zero columns of ``v`` map to zero columns.
    """
    p = check_exponent(p)
    v = np.asarray(v, dtype=float)
    norms = column_norms(v)
    w = np.zeros_like(v)
    if not np.any(norms > 0):
        return w, True
    if p == 1:
        j = int(np.argmax(norms))
        w[:, j] = -v[:, j] / norms[j]
        return w, False
    nz = norms > 0
    if p == INF:
        w[:, nz] = -v[:, nz] / norms[nz]
        return w, False
    q = dual_exponent(p)
    # rescale by the largest norm; the result is invariant and avoids overflow
    r = norms[nz] / norms.max()
    total = np.sum(r ** q)
    w[:, nz] = -(total ** (-1.0 / p)) * r ** (q - 2.0) * (v[:, nz] / norms.max())
    return w, False


def armijo_step(f, w, direction, grad_dot_dir, c1=1e-4, beta=0.5, min_step=1e-12, f_w=None):
    """Backtracking line search along ``direction``.

    Returns ``(gamma, f_new, ok)``: the largest ``gamma`` in ``{1, beta,
    beta**2, ...}`` not below ``min_step`` meeting the Armijo condition.  When
    none does, ``gamma = min_step`` and ``ok`` is False.
    """
    if not grad_dot_dir < 0:
        raise NotDescentDirection(f"directional derivative {grad_dot_dir} is not negative")
    if f_w is None:
        f_w = f(w)
    gamma = 1.0
    while gamma >= min_step:
        f_new = f(w + gamma * direction)
        if f_new <= f_w + c1 * gamma * grad_dot_dir:
            return gamma, f_new, True
        gamma *= beta
    return min_step, f(w + min_step * direction), False


def solve(objective, cfg, w0=None, shape=None):
    """Minimize ``objective`` over ``{||w||_{2,p} <= cfg.lam}`` by Frank-Wolfe.

    Parameters
    ----------
    objective : object with ``value_and_grad(w)`` and ``value(w)``, or a
        callable returning ``(value, grad)``.
    cfg : FwConfig
    w0 : ndarray, optional
        Feasible starting point; the zero matrix of ``shape`` by default.

    Returns
    -------
    w : ndarray
        Last iterate.
    trace : FwTrace
    """
    obj = as_objective(objective)
    if w0 is None:
        if shape is None:
            raise ValueError("need w0 or shape")
        w = np.zeros(shape)
    else:
        w = np.array(w0, dtype=float)
    trace = FwTrace()
    f_w, g = obj.value_and_grad(w)
    trace.objective_history.append(float(f_w))
    for k in range(cfg.max_iters + 1):
        s, _ = lmo_l2p(g, cfg.p)
        direction = cfg.lam * s - w
        gap = -float(np.vdot(g, direction))
        trace.final_gap = gap
        if gap <= cfg.gap_tol:
            trace.converged = True
            break
        if k == cfg.max_iters:
            break
        phi = _line_function(obj, w, direction)
        if cfg.step_rule == "harmonic":
            gamma = 2.0 / (k + 2.0)
            f_new = phi(gamma)
        else:
            # search over t -> f(w + t * direction) starting at t = 0
            gamma, f_new, ok = armijo_step(
                phi, 0.0, 1.0, -gap, cfg.armijo_c1, cfg.backtrack_beta, cfg.min_step, f_w=f_w
            )
            if not ok and not f_new <= f_w:
                trace.stalled = True
                log.debug("line search stalled at iteration %d, gap %.3g", k, gap)
                break
        w = w + gamma * direction
        trace.iterations = k + 1
        f_w, g = obj.value_and_grad(w)
        trace.objective_history.append(float(f_w))
    return w, trace
