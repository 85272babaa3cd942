"""Experiment grids over privacy level and client count, CSV output and figures."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import load_bcwd, split_and_partition
from .federation import round_rng, run_protocol, write_traces
from .linear import TrainConfig, evaluate, local_train, zero_model
from .privacy import PrivacyParams

log = logging.getLogger(__name__)

PRIVATE = "private"
NONPRIVATE = "nonprivate_federated"
CENTRALIZED = "centralized"
BASELINES = (PRIVATE, NONPRIVATE, CENTRALIZED)


@dataclass(frozen=True)
class ExperimentGrid:
    """Cross product of settings to run.

    ``exposures_E=None`` ties E to the round count. The non-private baselines
    do not depend on epsilon and run once per (seed, V) and once per seed
    respectively.
    """

    epsilons: tuple = (5.0, 10.0, 20.0, 25.0, 30.0, 50.0)
    client_counts: tuple = (5, 10, 20)
    rounds_T: int = 50
    exposures_E: Optional[int] = None
    seeds: tuple = tuple(range(10))
    baselines: tuple = BASELINES
    dataset_path: Optional[str] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    delta: float = 0.01
    clip_B: float = 1.0
    test_fraction: float = 0.2

    def __post_init__(self):
        for name in ("epsilons", "client_counts", "seeds", "baselines"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise ValueError(f"unknown baselines: {sorted(unknown)}")
        if any(v < 1 for v in self.client_counts):
            raise ValueError("client counts must be >= 1")
        for eps in self.epsilons:
            self.privacy(eps)

    def privacy(self, epsilon) -> PrivacyParams:
        return PrivacyParams(epsilon, self.delta, self.clip_B, self.rounds_T, self.exposures_E)

    def cells(self) -> list:
        """``(baseline, seed, V, epsilon)`` tuples in canonical order."""
        out = []
        for baseline in BASELINES:
            if baseline not in self.baselines:
                continue
            for seed in self.seeds:
                if baseline == CENTRALIZED:
                    out.append((baseline, seed, 1, math.inf))
                    continue
                for V in self.client_counts:
                    if baseline == NONPRIVATE:
                        out.append((baseline, seed, V, math.inf))
                    else:
                        out.extend((baseline, seed, V, eps) for eps in self.epsilons)
        return out


@dataclass(frozen=True)
class ResultRow:
    baseline: str
    seed: int
    V: int
    epsilon: float
    delta: float
    B: float
    T: int
    E: int
    round: int
    mean_test_accuracy: float
    mean_hinge_loss: float


ROW_FIELDS = [f.name for f in fields(ResultRow)]


@dataclass(frozen=True)
class CellFailure:
    cell: tuple
    error: str


@dataclass
class GridResult:
    rows: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def sort_key(row: ResultRow):
    return (BASELINES.index(row.baseline), row.seed, row.V, row.epsilon, row.round)


def centralized_rounds(split, cfg: TrainConfig, rounds: int, seed: int):
    """Train one model on the pooled shards, yielding it after each block of local epochs."""
    X, y = split.pooled_train()
    w = zero_model(X.shape[1])
    for t in range(1, rounds + 1):
        w = local_train(w, X, y, cfg, round_rng(seed, t, 1))
        yield t, w


def run_cell(grid: ExperimentGrid, cell, data=None, trace_dir=None) -> list:
    baseline, seed, V, eps = cell
    if data is None:
        data = load_bcwd(grid.dataset_path)
    split = split_and_partition(data, V, grid.test_fraction, seed)
    T = grid.rounds_T

    if baseline == CENTRALIZED:
        rows = []
        for t, w in centralized_rounds(split, grid.train, T, seed):
            m = evaluate(w, split.X_test, split.y_test)
            rows.append(ResultRow(baseline, seed, 1, math.inf, 0.0, math.inf, T, 0, t,
                                  m.accuracy, m.hinge_loss))
        return rows

    private = baseline == PRIVATE
    p = grid.privacy(eps if private else 1.0)
    _, traces = run_protocol(split, p, grid.train, seed, private=private)
    if trace_dir is not None:
        eps_tag = f"eps{eps:g}" if private else "nonprivate"
        write_traces(traces, Path(trace_dir) / f"{baseline}_seed{seed}_V{V}_{eps_tag}.ndjson")
    if private:
        delta, B, E = p.delta, p.clip_B, p.exposures_E
    else:
        delta, B, E = 0.0, math.inf, 0
    return [ResultRow(baseline, seed, V, eps, delta, B, T, E, tr.round,
                      tr.mean_accuracy, tr.mean_loss) for tr in traces]


def _run_cell_safe(grid, cell, data, trace_dir):
    try:
        return run_cell(grid, cell, data, trace_dir), None
    except Exception as exc:  # a failing cell must not stop the sweep
        log.exception("cell %s failed", cell)
        return [], CellFailure(cell, repr(exc))


def run_grid(grid: ExperimentGrid, trace_dir=None, n_jobs: int = 1) -> GridResult:
    """Run every cell; rows come back sorted so output never depends on execution order."""
    data = load_bcwd(grid.dataset_path)
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    cells = grid.cells()
    if n_jobs == 1:
        results = [_run_cell_safe(grid, c, data, trace_dir) for c in cells]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(_run_cell_safe)(grid, c, data, trace_dir) for c in cells)
    rows = [r for cell_rows, _ in results for r in cell_rows]
    failures = [f for _, f in results if f is not None]
    return GridResult(rows=sorted(rows, key=sort_key), failures=failures)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6g}"


def emit_csv(rows, path):
    """Header plus one line per row, floats to 6 significant digits."""
    if not rows:
        raise ValueError("no rows to write")
    rows = sorted(rows, key=sort_key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROW_FIELDS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, f)) for f in ROW_FIELDS])


def read_csv(path) -> list:
    types = {f.name: f.type for f in fields(ResultRow)}
    casts = {"str": str, "int": int, "float": float}
    with open(path, newline="") as fh:
        return [ResultRow(**{k: casts[types[k]](v) for k, v in rec.items()})
                for rec in csv.DictReader(fh)]


def final_round(rows) -> list:
    last = max(r.round for r in rows)
    return [r for r in rows if r.round == last]


def seed_average(rows, key=lambda r: (r.V, r.epsilon), value="mean_test_accuracy"):
    """Map each key to ``(mean, min, max)`` of ``value`` over seeds."""
    groups = defaultdict(list)
    for r in rows:
        groups[key(r)].append(getattr(r, value))
    return {k: (float(np.mean(v)), float(np.min(v)), float(np.max(v))) for k, v in sorted(groups.items())}


def round_to_round_std(rows, baseline, **match) -> float:
    """Std of successive per-round accuracy changes, pooled over seeds."""
    series = defaultdict(dict)
    for r in rows:
        if r.baseline == baseline and all(getattr(r, k) == v for k, v in match.items()):
            series[r.seed][r.round] = r.mean_test_accuracy
    diffs = []
    for by_round in series.values():
        acc = [by_round[t] for t in sorted(by_round)]
        diffs.extend(np.diff(acc))
    if not diffs:
        raise ValueError(f"no {baseline} rows match {match}")
    return float(np.std(diffs))


def _save_svg(fig, path):
    import matplotlib.pyplot as plt
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.fonttype"] = "path"
    matplotlib.rcParams["svg.hashsalt"] = "gdpfed"
    import matplotlib.pyplot as plt
    return plt


def emit_put_plot(rows, path) -> dict:
    """Final-round accuracy and loss against epsilon, one series per client count.

    Points are seed means with min-max whiskers. Returns
    ``{V: [(epsilon, mean_accuracy), ...]}`` for the plotted series.
    """
    private = final_round([r for r in rows if r.baseline == PRIVATE])
    eps_values = sorted({r.epsilon for r in private})
    if len(eps_values) < 2:
        raise ValueError(f"need at least two distinct epsilon values, got {eps_values}")
    acc = seed_average(private)
    loss = seed_average(private, value="mean_hinge_loss")

    plt = _pyplot()
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9, 3.6))
    series = {}
    for V in sorted({r.V for r in private}):
        keys = [k for k in acc if k[0] == V]
        xs = [k[1] for k in keys]
        for ax, stats in ((ax_acc, acc), (ax_loss, loss)):
            mean = np.array([stats[k][0] for k in keys])
            lo = mean - np.array([stats[k][1] for k in keys])
            hi = np.array([stats[k][2] for k in keys]) - mean
            ax.errorbar(xs, mean, yerr=[lo, hi], marker="o", capsize=3, label=f"V = {V}")
        series[V] = [(k[1], acc[k][0]) for k in keys]
    ax_acc.set_xlabel("epsilon")
    ax_acc.set_ylabel("test accuracy")
    ax_loss.set_xlabel("epsilon")
    ax_loss.set_ylabel("hinge loss")
    ax_acc.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    return series


def emit_epochs_plot(rows, path, epsilon: float = 25.0, V: int = 20) -> dict:
    """Seed-averaged accuracy per round for the private run and the two baselines.

    Missing baselines are skipped with a warning; the private series and at
    least one baseline are required. Returns ``{baseline: [mean per round]}``.
    """
    selectors = {
        PRIVATE: lambda r: r.baseline == PRIVATE and r.V == V and r.epsilon == epsilon,
        NONPRIVATE: lambda r: r.baseline == NONPRIVATE and r.V == V,
        CENTRALIZED: lambda r: r.baseline == CENTRALIZED,
    }
    curves = {}
    for name, sel in selectors.items():
        picked = [r for r in rows if sel(r)]
        if not picked:
            if name == PRIVATE:
                raise ValueError(f"no private rows for epsilon={epsilon}, V={V}")
            warnings.warn(f"no {name} rows; omitting that curve", stacklevel=2)
            continue
        by_round = seed_average(picked, key=lambda r: r.round)
        curves[name] = [by_round[t][0] for t in sorted(by_round)]
    if len(curves) < 2:
        raise ValueError("need the private series and at least one baseline")

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.6))
    labels = {PRIVATE: f"private (eps={epsilon:g})", NONPRIVATE: "non-private federated",
              CENTRALIZED: "centralized"}
    for name, ys in curves.items():
        ax.plot(range(1, len(ys) + 1), ys, label=labels[name])
    ax.set_xlabel("round")
    ax.set_ylabel("test accuracy")
    ax.set_title(f"V = {V}")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    return curves


# flat `key = value` configuration
_LIST_KEYS = {"epsilons": float, "clients": int, "seeds": int, "baselines": str}
_SCALAR_KEYS = {"rounds": int, "exposures": int, "delta": float, "clip_B": float,
                "test_fraction": float, "data": str, "local_epochs": int,
                "learning_rate": float, "lr_decay": float, "l2_lambda": float}


def parse_list(text: str, cast):
    """Comma-separated values; integers also accept inclusive ranges like ``0-9``."""
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        if cast is int and "-" in tok[1:]:
            lo, hi = tok.split("-", 1) if not tok.startswith("-") else (tok, tok)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(cast(tok))
    return out


def read_config(path) -> dict:
    settings = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            settings[key] = value
    return settings


def grid_from_settings(settings: dict) -> ExperimentGrid:
    unknown = set(settings) - set(_LIST_KEYS) - set(_SCALAR_KEYS)
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    parsed = {}
    for key, value in settings.items():
        if value is None:
            continue
        if key in _LIST_KEYS:
            parsed[key] = parse_list(value, _LIST_KEYS[key]) if isinstance(value, str) else list(value)
        elif key == "exposures" and str(value).lower() in ("t", "equal-t", "none"):
            parsed[key] = None
        else:
            parsed[key] = _SCALAR_KEYS[key](value)

    grid = ExperimentGrid()
    train = grid.train
    train_keys = {"local_epochs", "learning_rate", "lr_decay", "l2_lambda"}
    train = replace(train, **{k: parsed.pop(k) for k in list(parsed) if k in train_keys})
    renames = {"epsilons": "epsilons", "clients": "client_counts", "seeds": "seeds",
               "baselines": "baselines", "rounds": "rounds_T", "exposures": "exposures_E",
               "delta": "delta", "clip_B": "clip_B", "test_fraction": "test_fraction",
               "data": "dataset_path"}
    return replace(grid, train=train, **{renames[k]: v for k, v in parsed.items()})
