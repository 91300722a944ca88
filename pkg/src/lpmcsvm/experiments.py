"""Training, prediction and structural-risk model selection over a (p, lam) grid."""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import structural_risk
from .dataio import LabelMapMismatch, stats
from .fw import FwConfig, FwTrace, solve
from .losses import WeightedLoss, batch_values
from .norms import INF, block_norm

DEFAULT_PS = (1.33, 1.67, 2.0, 2.5, 3.0, 4.0, 8.0, INF)
DEFAULT_LAMBDAS = tuple(10.0 ** (0.5 * e) for e in range(1, 8))  # 10^0.5 .. 10^3.5
RISK_LAMBDA = 0.5


@dataclass
class ModelRecord:
    p: float
    lam: float
    w: np.ndarray = field(repr=False)
    train_loss: float
    block22_norm: float
    structural_risk: float
    fw_trace: FwTrace = field(repr=False)
    test_accuracy: Optional[float] = None
    warm_started: bool = False


@dataclass
class GridSpec:
    ps: tuple = DEFAULT_PS
    lambdas: tuple = DEFAULT_LAMBDAS
    risk_lambda: float = RISK_LAMBDA

    def __post_init__(self):
        if not self.ps or not self.lambdas:
            raise ValueError("grid needs at least one p and one lambda")


def empirical_risk(ds, spec, w):
    return float(np.mean(batch_values(spec, ds.X @ w, ds.y0)))


def train(ds, spec, cfg, w0=None, risk_lambda=RISK_LAMBDA, max_norm=None):
    """Minimize the mean loss over ``{||w||_{2,p} <= lam}`` from ``w0`` (zero by default)."""
    if ds.n < 1:
        raise ValueError("empty dataset")
    if spec.c != ds.c:
        raise ValueError(f"loss has c={spec.c} but the dataset has c={ds.c}")
    obj = WeightedLoss(ds.X, ds.y0, spec, 1.0 / ds.n)
    w, trace = solve(obj, cfg, w0=w0, shape=(ds.d, ds.c))
    loss = empirical_risk(ds, spec, w)
    if max_norm is None:
        max_norm = stats(ds).max_row_norm
    return ModelRecord(
        p=cfg.p,
        lam=cfg.lam,
        w=w,
        train_loss=loss,
        block22_norm=block_norm(w, 2.0),
        structural_risk=structural_risk(loss, w, max_norm, ds.n, risk_lambda),
        fw_trace=trace,
        warm_started=w0 is not None,
    )


def scores(w, X):
    return np.asarray(X @ w)


def predict(w, x):
    """Class (1-based) with the highest score; ties go to the smallest index.

    ``x`` is a dense vector or a sparse/dense matrix of rows.
    """
    w = np.asarray(w)
    single = np.ndim(x) == 1 and not hasattr(x, "tocsr")
    X = np.asarray(x, dtype=float)[None, :] if single else x
    if X.shape[1] != w.shape[0]:
        raise ValueError(f"feature dimension {X.shape[1]} does not match the model's {w.shape[0]}")
    pred = np.argmax(scores(w, X), axis=1) + 1
    return int(pred[0]) if single else pred


def accuracy(w, ds, label_map=None):
    if label_map is not None and tuple(label_map) != tuple(ds.label_map):
        raise LabelMapMismatch("dataset and model use different label maps")
    if w.shape[1] != ds.c:
        raise LabelMapMismatch(f"model has {w.shape[1]} classes, dataset {ds.c}")
    return float(np.mean(predict(w, ds.X) == ds.y))


def _rescale_into_ball(w, p, lam):
    nrm = block_norm(w, p)
    return w if nrm <= lam else w * (lam / nrm)


def _train_row(train_ds, test_ds, spec, cfg_base, p, lambdas, risk_lambda, warm_start, max_norm):
    out = []
    prev = None
    for lam in lambdas:
        cfg = cfg_base.replace(p=p, lam=lam)
        w0 = _rescale_into_ball(prev, p, lam) if (warm_start and prev is not None) else None
        rec = train(train_ds, spec, cfg, w0=w0, risk_lambda=risk_lambda, max_norm=max_norm)
        if test_ds is not None:
            rec.test_accuracy = accuracy(rec.w, test_ds)
        prev = rec.w
        out.append(rec)
    return out


def train_grid(train_ds, test_ds, spec, grid, cfg_base=None, warm_start=True, jobs=1):
    """Train every grid point; records come back in grid order (p-major).

    Each p-row walks the lambdas in increasing order, warm-starting from the
    previous lambda's solution.  Rows are independent tasks.
    """
    cfg_base = cfg_base or FwConfig()
    if test_ds is not None and tuple(test_ds.label_map) != tuple(train_ds.label_map):
        raise LabelMapMismatch("train and test sets use different label maps")
    lam_sorted = sorted(grid.lambdas)
    max_norm = stats(train_ds).max_row_norm
    args = [(train_ds, test_ds, spec, cfg_base, p, lam_sorted, grid.risk_lambda, warm_start, max_norm)
            for p in grid.ps]
    if jobs and jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = [f.result() for f in [pool.submit(_train_row, *a) for a in args]]
    else:
        rows = [_train_row(*a) for a in args]
    table = []
    for row in rows:
        by_lam = {rec.lam: rec for rec in row}
        table.extend(by_lam[lam] for lam in grid.lambdas)
    return table


def select_model(train_ds, test_ds, spec, grid, cfg_base=None, warm_start=True, jobs=1):
    """Structural-risk selection over the grid.

    Returns ``(selected, oracle, table)``: ``selected`` minimizes the
    structural risk, ``oracle`` maximizes test accuracy (first in grid order
    on ties for both).
    """
    table = train_grid(train_ds, test_ds, spec, grid, cfg_base, warm_start, jobs)
    if not table:
        raise ValueError("empty grid")
    selected = min(table, key=lambda r: r.structural_risk)
    oracle = max(table, key=lambda r: -math.inf if r.test_accuracy is None else r.test_accuracy)
    return selected, oracle, table


def best_accuracy_at(table, p):
    accs = [r.test_accuracy for r in table if r.p == p and r.test_accuracy is not None]
    return max(accs) if accs else None


TABLE_COLUMNS = ("p", "lambda", "train_loss", "block22_norm", "structural_risk",
                 "test_accuracy", "fw_iters", "fw_gap", "converged")


def grid_csv(table):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(TABLE_COLUMNS)
    for r in table:
        wr.writerow([
            "inf" if r.p == INF else repr(float(r.p)),
            repr(float(r.lam)),
            repr(r.train_loss),
            repr(r.block22_norm),
            repr(r.structural_risk),
            "" if r.test_accuracy is None else repr(r.test_accuracy),
            r.fw_trace.iterations,
            repr(float(r.fw_trace.final_gap)),
            int(r.fw_trace.converged),
        ])
    return buf.getvalue()
