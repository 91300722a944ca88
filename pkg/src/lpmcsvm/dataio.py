"""LIBSVM-format datasets: parsing, validation, relabeling and summary statistics."""
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(DataError):
    pass


class MalformedToken(DataError):
    pass


class NonPositiveIndex(DataError):
    pass


class DuplicateIndex(DataError):
    pass


class LabelMapMismatch(DataError):
    pass


@dataclass(eq=False)
class SparseDataset:
    """``n`` sparse rows of dimension ``d`` with labels in ``1..c``.

    ``X`` is a CSR matrix with 0-based columns; column ``j`` holds feature
    index ``j + 1`` of the file.  ``label_map[k]`` is the original file label
    of class ``k + 1``.
    """

    X: sparse.csr_matrix
    y: np.ndarray
    c: int
    label_map: tuple = ()

    def __post_init__(self):
        self.X = sparse.csr_matrix(self.X, dtype=float)
        self.X.sort_indices()
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("row count and label count differ")
        if self.y.size and (self.y.min() < 1 or self.y.max() > self.c):
            raise DataError(f"labels must lie in 1..{self.c}")
        if not self.label_map:
            self.label_map = tuple(range(1, self.c + 1))
        if len(self.label_map) != self.c:
            raise DataError("label map length must equal the class count")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def y0(self):
        """0-based class indices."""
        return self.y - 1

    def row(self, i):
        """Row ``i`` as (1-based indices, values)."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[lo:hi] + 1, self.X.data[lo:hi]

    def with_dimension(self, d):
        if d < self.d:
            raise DataError(f"declared dimension {d} is below the largest index {self.d}")
        X = sparse.csr_matrix((self.X.data, self.X.indices, self.X.indptr), shape=(self.n, d))
        return SparseDataset(X, self.y, self.c, self.label_map)

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return SparseDataset(self.X[idx], self.y[idx], self.c, self.label_map)


def _parse_label(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        v = float(tok)
    except ValueError:
        raise MalformedToken(f"bad label {tok!r}", lineno) from None
    if not math.isfinite(v) or v != int(v):
        raise MalformedToken(f"label {tok!r} is not an integer", lineno)
    return int(v)


def parse_libsvm(text, n_features=None, label_map=None):
    """Parse LIBSVM text into a :class:`SparseDataset`.

    Parameters
    ----------
    text : str or bytes
        File contents. LF or CRLF line ends; lines starting with ``#`` are
        comments.
    n_features : int, optional
        Declared dimension; defaults to the largest index seen.
    label_map : sequence of int, optional
        Original labels in class order, e.g. from a training set.  Without it,
        labels are remapped to ``1..c`` by order of first appearance.

    Raises
    ------
    DataError
        Subclasses name the failure and carry the offending line number.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    fixed = label_map is not None
    mapping = {lab: k + 1 for k, lab in enumerate(label_map)} if fixed else {}
    indptr = [0]
    indices = []
    data = []
    labels = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        lab = _parse_label(toks[0], lineno)
        if lab not in mapping:
            if fixed:
                raise LabelMapMismatch(f"label {lab} not in the label map", lineno)
            mapping[lab] = len(mapping) + 1
        labels.append(mapping[lab])
        seen = set()
        pairs = []
        for tok in toks[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise MalformedToken(f"expected <index>:<value>, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise MalformedToken(f"bad feature token {tok!r}", lineno) from None
            if idx < 1:
                raise NonPositiveIndex(f"feature index {idx} is not positive", lineno)
            if idx in seen:
                raise DuplicateIndex(f"feature index {idx} repeated", lineno)
            seen.add(idx)
            pairs.append((idx - 1, val))
        pairs.sort()
        indices.extend(i for i, _ in pairs)
        data.extend(v for _, v in pairs)
        indptr.append(len(indices))
    if not labels:
        raise EmptyDataset("dataset has no examples")
    d_seen = max(indices) + 1 if indices else 0
    d = d_seen if n_features is None else int(n_features)
    if d < d_seen:
        raise DataError(f"declared dimension {d} is below the largest index {d_seen}")
    X = sparse.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(labels), d),
    )
    if fixed:
        lm = tuple(label_map)
    else:
        lm = tuple(sorted(mapping, key=mapping.get))
    return SparseDataset(X, np.array(labels), len(lm), lm)


def load_libsvm(path, n_features=None, label_map=None):
    with open(path, "rb") as fh:
        return parse_libsvm(fh.read(), n_features=n_features, label_map=label_map)


def to_libsvm(ds):
    """Serialize with original labels; values use the shortest round-trip repr."""
    out = []
    for i in range(ds.n):
        idx, val = ds.row(i)
        feats = " ".join(f"{j}:{v!r}" for j, v in zip(idx.tolist(), val.tolist()))
        lab = ds.label_map[ds.y[i] - 1]
        out.append(f"{lab} {feats}".rstrip())
    return "\n".join(out) + "\n"


def relabel(ds, c_new):
    """Relabel ``y -> (y mod c_new) + 1``; features are untouched."""
    c_new = int(c_new)
    if c_new < 1:
        raise ValueError(f"class count must be >= 1, got {c_new}")
    y = ds.y % c_new + 1
    return SparseDataset(ds.X, y, c_new)


def split_head_fraction(ds, fraction):
    """Per-class head split: the first ``ceil(fraction * n_y)`` rows of each
    class (in file order) go to the first part, the rest to the second."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    head, tail = [], []
    for k in range(1, ds.c + 1):
        rows = np.flatnonzero(ds.y == k)
        m = math.ceil(fraction * len(rows))
        head.append(rows[:m])
        tail.append(rows[m:])
    head = np.sort(np.concatenate(head))
    tail = np.sort(np.concatenate(tail))
    return ds.take(head), ds.take(tail)


@dataclass
class DatasetStats:
    max_row_norm: float
    sum_sq_norms: float
    _X: sparse.csr_matrix = field(default=None, repr=False, compare=False)

    def gram_schatten(self, q):
        """``||sum_i x_i x_i^T||_{S_q}`` = l_q norm of squared singular values of X."""
        from .norms import vector_norm

        if self._X is None:
            raise ValueError("Gram Schatten norms need the data matrix")
        return vector_norm(_squared_singular_values(_Key(self._X)), q)


class _Key:
    # hashable by identity so the SVD is cached per matrix
    def __init__(self, X):
        self.X = X

    def __hash__(self):
        return id(self.X)

    def __eq__(self, other):
        return self.X is other.X


@lru_cache(maxsize=8)
def _squared_singular_values(key):
    from .norms import singular_values

    X = key.X
    n, d = X.shape
    # eigenvalues of X^T X equal those of X X^T on the nonzero part
    G = (X.T @ X) if d <= n else (X @ X.T)
    G = G.toarray() if sparse.issparse(G) else np.asarray(G)
    ev = np.linalg.eigvalsh(G)
    ev = np.clip(ev, 0.0, None)
    return np.sort(ev)[::-1]


def stats(ds):
    if ds.n < 1:
        raise EmptyDataset("stats need at least one example")
    sq = np.asarray(ds.X.multiply(ds.X).sum(axis=1)).ravel()
    return DatasetStats(float(math.sqrt(sq.max())), float(sq.sum()), ds.X)


def synthetic_blobs(n, d, c, seed=0, spread=1.0, noise=1.0):
    """Gaussian class clusters; labels cycle through ``1..c``."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(c, d))
    y = np.arange(n) % c + 1
    X = centers[y - 1] + rng.normal(scale=noise, size=(n, d))
    return SparseDataset(sparse.csr_matrix(X), y, c)
