"""Multi-class losses on score vectors, their subgradients and Lipschitz profiles.

Two calling conventions are provided.  ``loss_value``/``loss_subgradient``
take a single score vector and a label in ``1..c``.  ``batch_values`` and
``batch_subgradients`` take an ``(n, c)`` score matrix with 0-based class
indices and are what the solvers use.  The scalar functions are thin
wrappers around the batch ones, so both agree bit for bit.

Ties in the max over competing classes and in the top-k ordering go to the
smallest index.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

FAMILIES = ("cs_margin", "multinomial_logistic", "weston_watkins", "llw", "jenssen", "top_k")
BASES = ("hinge", "logistic")

# CLI spelling -> (family, base or None to take --base)
CLI_LOSSES = {
    "cs-hinge": ("cs_margin", "hinge"),
    "cs-logistic": ("cs_margin", "logistic"),
    "logistic": ("multinomial_logistic", "logistic"),
    "ww": ("weston_watkins", None),
    "llw": ("llw", None),
    "jenssen": ("jenssen", None),
    "top-k": ("top_k", "hinge"),
}


class BaseLoss:
    """Scalar margin loss ``l: R -> R+``, non-increasing and 1-Lipschitz."""

    lipschitz = 1.0

    def __init__(self, kind="hinge"):
        if kind not in BASES:
            raise ValueError(f"unknown base loss {kind!r}; expected one of {BASES}")
        self.kind = kind

    def __repr__(self):
        return f"BaseLoss({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, BaseLoss) and other.kind == self.kind

    def __hash__(self):
        return hash(self.kind)

    def value(self, m):
        if self.kind == "hinge":
            return np.maximum(0.0, 1.0 - m)
        return np.logaddexp(0.0, -m)

    def derivative(self, m):
        # hinge: -1 strictly left of the kink, 0 from the kink on
        if self.kind == "hinge":
            return np.where(m < 1.0, -1.0, 0.0)
        return -expit(-m)


@dataclass(frozen=True)
class LossSpec:
    family: str
    c: int
    base: str = "hinge"
    k: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.base not in BASES:
            raise ValueError(f"unknown base loss {self.base!r}")
        if self.c < 1:
            raise ValueError("class count must be >= 1")
        if self.family == "top_k" and not 1 <= self.k <= self.c:
            raise ValueError(f"top-k needs 1 <= k <= c, got k={self.k}, c={self.c}")

    @property
    def base_loss(self):
        return BaseLoss(self.base)

    @property
    def cli_name(self):
        for name, (fam, base) in CLI_LOSSES.items():
            if fam == self.family and (base is None or base == self.base):
                return name
        raise AssertionError(self)

    def with_classes(self, c):
        return LossSpec(self.family, c, self.base, min(self.k, c) if self.family == "top_k" else self.k)


def loss_from_cli(name, c, k=1, base="hinge"):
    """Build a LossSpec from a CLI loss name such as ``"top-k"`` or ``"ww"``."""
    try:
        family, fixed_base = CLI_LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected one of {sorted(CLI_LOSSES)}") from None
    return LossSpec(family, c, fixed_base or base, k if family == "top_k" else 1)


@dataclass(frozen=True)
class LipschitzProfile:
    """``l_inf`` is the l_inf-norm constant; ``(l1, l2)`` the variant-l2 pair."""

    l_inf: float
    l1: float
    l2: float


def lipschitz_profile(spec):
    L = BaseLoss.lipschitz
    c = spec.c
    fam = spec.family
    if fam == "cs_margin":
        return LipschitzProfile(2 * L, 2 * L, 0.0)
    if fam == "multinomial_logistic":
        return LipschitzProfile(2.0, 2.0, 0.0)
    if fam == "weston_watkins":
        return LipschitzProfile(2 * L * c, L * math.sqrt(c), L * c)
    if fam == "llw":
        return LipschitzProfile(L * c, L * math.sqrt(c), 0.0)
    if fam == "jenssen":
        return LipschitzProfile(L, 0.0, L)
    return LipschitzProfile(2.0, 1.0 / math.sqrt(spec.k), 1.0)


def _logsumexp_rows(scores):
    m = scores.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(scores - m[:, None]).sum(axis=1)) + m


def _rival_index(scores, y):
    # best competing class, smallest index on ties
    masked = scores.copy()
    masked[np.arange(len(y)), y] = -np.inf
    return np.argmax(masked, axis=1)


def _topk_candidates(scores, y):
    n, c = scores.shape
    ty = scores[np.arange(n), y]
    ind = np.ones((n, c))
    ind[np.arange(n), y] = 0.0
    # written as 1 - (t_y - t_j) so that k = 1 reproduces the CS hinge bit for bit
    return ind - (ty[:, None] - scores)


def _topk_order(a, k):
    return np.argsort(-a, axis=1, kind="stable")[:, :k]


def batch_values(spec, scores, y):
    """Loss of each row of ``scores`` (shape ``(n, c)``) at 0-based labels ``y``."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    n = scores.shape[0]
    rows = np.arange(n)
    ty = scores[rows, y]
    fam = spec.family
    ell = spec.base_loss
    if fam == "multinomial_logistic":
        # (m - t_y) + log1p(sum over non-max classes) keeps tiny losses positive
        top = np.argmax(scores, axis=1)
        m = scores[rows, top]
        e = np.exp(scores - m[:, None])
        e[rows, top] = 0.0
        return (m - ty) + np.log1p(e.sum(axis=1))
    if fam == "cs_margin":
        if spec.c == 1:
            return np.zeros(n)
        rival = scores[rows, _rival_index(scores, y)]
        return ell.value(ty - rival)
    if fam == "weston_watkins":
        return ell.value(ty[:, None] - scores).sum(axis=1)
    if fam == "llw":
        vals = ell.value(-scores)
        vals[rows, y] = 0.0
        return vals.sum(axis=1)
    if fam == "jenssen":
        return ell.value(ty)
    a = _topk_candidates(scores, y)
    top = np.take_along_axis(a, _topk_order(a, spec.k), axis=1)
    return np.maximum(0.0, top.sum(axis=1) / spec.k)


def batch_subgradients(spec, scores, y):
    """Subgradient of each row's loss with respect to its score vector."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    n, c = scores.shape
    rows = np.arange(n)
    ty = scores[rows, y]
    fam = spec.family
    ell = spec.base_loss
    g = np.zeros((n, c))
    if fam == "multinomial_logistic":
        g = np.exp(scores - _logsumexp_rows(scores)[:, None])
        g[rows, y] -= 1.0
        return g
    if fam == "cs_margin":
        if c == 1:
            return g
        r = _rival_index(scores, y)
        d = ell.derivative(ty - scores[rows, r])
        g[rows, y] += d
        g[rows, r] -= d
        return g
    if fam == "weston_watkins":
        d = ell.derivative(ty[:, None] - scores)
        d[rows, y] = 0.0
        g -= d
        g[rows, y] += d.sum(axis=1)
        return g
    if fam == "llw":
        g = -ell.derivative(-scores)
        g[rows, y] = 0.0
        return g
    if fam == "jenssen":
        g[rows, y] = ell.derivative(ty)
        return g
    k = spec.k
    a = _topk_candidates(scores, y)
    order = _topk_order(a, k)
    active = np.take_along_axis(a, order, axis=1).sum(axis=1) > 0
    sel = rows[active]
    for col in range(k):
        g[sel, order[active, col]] += 1.0 / k
    g[sel, y[active]] -= 1.0
    return g


def _check(spec, t, y):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.shape[0] != spec.c:
        raise ValueError(f"score vector must have length c={spec.c}, got shape {t.shape}")
    if not 1 <= int(y) <= spec.c:
        raise ValueError(f"label {y} outside 1..{spec.c}")
    return t[None, :], np.array([int(y) - 1])


def loss_value(spec, t, y):
    """Loss of score vector ``t`` at label ``y`` (1-based)."""
    T, Y = _check(spec, t, y)
    return float(batch_values(spec, T, Y)[0])


def loss_subgradient(spec, t, y):
    T, Y = _check(spec, t, y)
    return batch_subgradients(spec, T, Y)[0]


class WeightedLoss:
    """``f(w) = sum_i weights_i * loss_{y_i}(w^T x_i)`` for a linear model.

    Training uses ``weights = 1/n``; the complexity estimator uses
    ``-eps/n`` to maximize the noise correlation.  ``line`` exploits that the
    scores are linear in ``w`` so a line search costs no extra products with X.
    """

    def __init__(self, X, y0, spec, weights):
        self.X = X
        self.XT = X.T.tocsr()
        self.y0 = np.asarray(y0, dtype=np.intp)
        self.spec = spec
        self.weights = np.broadcast_to(np.asarray(weights, dtype=float), (X.shape[0],))

    def _scores(self, w):
        return np.asarray(self.X @ w)

    def value(self, w):
        return float(self.weights @ batch_values(self.spec, self._scores(w), self.y0))

    def value_and_grad(self, w):
        scores = self._scores(w)
        val = float(self.weights @ batch_values(self.spec, scores, self.y0))
        G = batch_subgradients(self.spec, scores, self.y0) * self.weights[:, None]
        return val, np.asarray(self.XT @ G)

    def line(self, w, direction):
        s0 = self._scores(w)
        sd = self._scores(direction)
        return lambda gamma: float(self.weights @ batch_values(self.spec, s0 + gamma * sd, self.y0))
