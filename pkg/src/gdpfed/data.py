"""Loading, cleaning and partitioning the Wisconsin breast cancer biopsy data.

The file format is the classic ``breast-cancer-wisconsin.data`` layout: eleven
comma-separated integer fields per line (sample id, nine cytology scores in
``[1, 10]``, class code 2=benign / 4=malignant), ``?`` for a missing score and
no header line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import ConfigurationError, ParseError

N_ATTRIBUTES = 9
CLASS_BENIGN = 2
CLASS_MALIGNANT = 4
MISSING = None

DEFAULT_DATA_PATH = Path(__file__).resolve().parents[2] / "data" / "breast-cancer-wisconsin.data"


class RawRecord(NamedTuple):
    sample_id: int
    attributes: tuple  # nine ints, MISSING (None) where the file had '?'
    class_code: int

    @property
    def has_missing(self) -> bool:
        return any(a is MISSING for a in self.attributes)


@dataclass(frozen=True)
class LabeledData:
    """Cleaned examples as arrays.

    ``X`` has shape (n, 9) with entries in [0, 1]; ``y`` holds labels in
    {-1, +1} with +1 meaning malignant.
    """

    X: np.ndarray
    y: np.ndarray
    sample_ids: np.ndarray
    n_dropped: int = 0

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    X: np.ndarray
    y: np.ndarray
    pi: float
    rows: Optional[np.ndarray] = None  # positions in the source arrays

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class DatasetSplit:
    """Client shards plus a shared held-out test set (which may be empty)."""

    shards: tuple
    X_test: np.ndarray
    y_test: np.ndarray
    test_rows: Optional[np.ndarray] = None

    @property
    def n_clients(self) -> int:
        return len(self.shards)

    @property
    def m(self) -> int:
        """Size of the smallest client shard."""
        return min(len(s) for s in self.shards)

    @property
    def pis(self) -> np.ndarray:
        return np.array([s.pi for s in self.shards])

    def pooled_train(self):
        X = np.concatenate([s.X for s in self.shards])
        y = np.concatenate([s.y for s in self.shards])
        return X, y


def _parse_int(token, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise ParseError(lineno, f"{what} is not an integer: {token!r}") from None


def parse_line(line: str, lineno: int = 1) -> RawRecord:
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) != N_ATTRIBUTES + 2:
        raise ParseError(lineno, f"expected {N_ATTRIBUTES + 2} fields, got {len(fields)}")
    sample_id = _parse_int(fields[0], lineno, "sample id")
    attributes = tuple(
        MISSING if tok == "?" else _parse_int(tok, lineno, f"attribute {k + 1}")
        for k, tok in enumerate(fields[1:-1])
    )
    class_code = _parse_int(fields[-1], lineno, "class")
    if class_code not in (CLASS_BENIGN, CLASS_MALIGNANT):
        raise ParseError(lineno, f"class must be 2 or 4, got {class_code}")
    return RawRecord(sample_id, attributes, class_code)


def parse_bcwd(path) -> list:
    """Read every record of a BCWD file, keeping rows with missing scores.

    Blank lines are skipped. Raises :class:`ParseError` with the 1-based line
    number on the first malformed line.
    """
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_line(line, lineno))
    return records


def normalize_scores(scores):
    """Map cytology scores in [1, 10] onto [0, 1] via (v - 1) / 9."""
    return (np.asarray(scores, dtype=float) - 1.0) / 9.0


def clean_and_normalize(records: Sequence[RawRecord]) -> LabeledData:
    kept = [r for r in records if not r.has_missing]
    n_dropped = len(records) - len(kept)
    if kept:
        X = normalize_scores([r.attributes for r in kept])
    else:
        X = np.empty((0, N_ATTRIBUTES))
    y = np.array([1.0 if r.class_code == CLASS_MALIGNANT else -1.0 for r in kept])
    ids = np.array([r.sample_id for r in kept], dtype=np.int64)
    return LabeledData(X=X, y=y, sample_ids=ids, n_dropped=n_dropped)


def load_bcwd(path=None) -> LabeledData:
    return clean_and_normalize(parse_bcwd(path or DEFAULT_DATA_PATH))


def split_and_partition(data: LabeledData, n_clients: int, test_fraction: float = 0.2,
                        seed: Optional[int] = 0) -> DatasetSplit:
    """Stratified train/test split followed by round-robin dealing into shards.

    Each class is shuffled independently with ``seed``; ``ceil(test_fraction * N)``
    examples go to the test set (allocated across classes by largest
    remainder). The remaining training examples are dealt round-robin, class
    after class, so shard sizes and per-shard class counts each differ by at
    most one.
    """
    if n_clients < 1:
        raise ConfigurationError(f"need at least one client, got {n_clients}")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(data)
    n_test = math.ceil(round(test_fraction * n, 9))  # 0.2 * 685 must give 137
    n_train = n - n_test
    if n_clients > n_train:
        raise ConfigurationError(
            f"{n_clients} clients but only {n_train} training examples")

    rng = np.random.default_rng(seed)
    labels = np.unique(data.y)
    per_class = [rng.permutation(np.flatnonzero(data.y == lab)) for lab in labels]

    quotas = np.array([n_test * len(idx) / n for idx in per_class])
    test_counts = np.floor(quotas).astype(int)
    short = n_test - test_counts.sum()
    for k in np.argsort(-(quotas - test_counts), kind="stable")[:short]:
        test_counts[k] += 1

    test_idx = np.sort(np.concatenate([idx[:k] for idx, k in zip(per_class, test_counts)]))
    order = np.concatenate([idx[k:] for idx, k in zip(per_class, test_counts)])
    shards = deal_shards(data.X, data.y, order, n_clients)
    return DatasetSplit(shards=shards, X_test=data.X[test_idx], y_test=data.y[test_idx],
                        test_rows=test_idx)


def deal_shards(X, y, order, n_clients: int) -> tuple:
    """Deal the rows listed in ``order`` round-robin into ``n_clients`` shards."""
    order = np.asarray(order)
    if not 1 <= n_clients <= len(order):
        raise ConfigurationError(f"cannot deal {len(order)} examples to {n_clients} clients")
    buckets = [order[k::n_clients] for k in range(n_clients)]
    return tuple(
        ClientShard(client_id=k + 1, X=X[b], y=y[b], pi=len(b) / len(order), rows=b)
        for k, b in enumerate(buckets)
    )


def stratified_order(y, rng: np.random.Generator) -> np.ndarray:
    """All row indices, shuffled within each label and grouped label by label."""
    y = np.asarray(y)
    return np.concatenate([rng.permutation(np.flatnonzero(y == lab)) for lab in np.unique(y)])


class ScoreScaler(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping raw 1-10 cytology scores onto [0, 1].

    Rows with missing values are not handled here; drop them first with
    :func:`clean_and_normalize` or an imputer.
    """

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        return normalize_scores(X)

    def inverse_transform(self, X):
        return np.asarray(X, dtype=float) * 9.0 + 1.0
