"""Clients, server and the round loop of differentially private federated SVM training.

Each round: the server broadcasts the current global model, every client
trains locally from it, clips the result to norm ``B``, adds Gaussian noise
with std ``sigma1`` and uploads; the server takes the ``pi``-weighted sum of the
uploads, optionally adds top-up noise with std ``sigma2``, and the result is
both evaluated and broadcast for the next round.

Random streams are derived from ``(master_seed, round, client_id)`` with
client ids starting at 1 and id 0 reserved for the server, so results do not
depend on the order in which clients run.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import ClientShard, DatasetSplit, deal_shards, stratified_order
from .exceptions import ProtocolError, RoundFailedError
from .linear import EvalMetrics, TrainConfig, decision_values, evaluate, local_train, zero_model
from .privacy import ZERO_NOISE, NoisePlan, PrivacyParams, clip, gaussian_perturb, plan_noise

SERVER_ID = 0


def model_hash(w) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype=np.float64).tobytes()).hexdigest()[:16]


def round_rng(master_seed: int, round_index: int, party_id: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, round_index, party_id])


@dataclass
class ClientState:
    client_id: int
    shard: ClientShard
    model: np.ndarray
    rng: np.random.Generator = field(repr=False)
    # last pre-noise clipped model; stays on the client
    clipped: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class ServerState:
    global_model: np.ndarray
    plan: NoisePlan
    round: int = 0


@dataclass(frozen=True)
class ClientRecord:
    client_id: int
    pre_noise_norm: float
    clipped_hash: str
    noise_norm: float
    upload_hash: str


@dataclass(frozen=True)
class RoundTrace:
    """Audit record for one round.

    ``client_metrics`` holds each client's evaluation of the broadcast model
    on the shared test set; it is empty when the split has no test data.
    """

    round: int
    clients: tuple
    aggregate_hash: str
    broadcast_hash: str
    sigma2_applied: bool
    client_metrics: tuple
    mean_accuracy: float
    mean_loss: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "RoundTrace":
        d = json.loads(line)
        d["clients"] = tuple(ClientRecord(**c) for c in d["clients"])
        d["client_metrics"] = tuple(EvalMetrics(**m) for m in d["client_metrics"])
        return cls(**d)


class ObserverLog:
    """Everything an honest-but-curious server sees: uploads and broadcasts by round."""

    def __init__(self):
        self.received = {}
        self.broadcast = {}

    def record_uploads(self, round_index, uploads):
        self.received[round_index] = [w.copy() for _, w in uploads]

    def record_broadcast(self, round_index, w):
        self.broadcast[round_index] = w.copy()

    def hashes(self) -> set:
        seen = {model_hash(w) for ws in self.received.values() for w in ws}
        seen.update(model_hash(w) for w in self.broadcast.values())
        return seen


def client_step(state: ClientState, global_w, cfg: TrainConfig, B: float, sigma1: float):
    """Train from the broadcast model, clip, perturb; return ``(new_state, upload)``.

    ``B = math.inf`` disables clipping.
    """
    if sigma1 < 0:
        raise ValueError(f"sigma1 must be >= 0, got {sigma1}")
    trained = local_train(global_w, state.shard.X, state.shard.y, cfg, state.rng)
    clipped = trained if math.isinf(B) else clip(trained, B)
    upload = gaussian_perturb(clipped, sigma1, state.rng)
    return replace(state, model=trained, clipped=clipped), upload


def server_aggregate(uploads, plan: NoisePlan, rng: np.random.Generator) -> np.ndarray:
    """Weighted sum of ``(pi, model)`` uploads plus top-up noise when ``plan.sigma2 > 0``."""
    if not uploads:
        raise ProtocolError("no uploads to aggregate")
    shapes = {np.shape(w) for _, w in uploads}
    if len(shapes) != 1:
        raise ProtocolError(f"uploads have mismatched shapes: {sorted(shapes)}")
    total = np.zeros(shapes.pop())
    for pi, w in uploads:
        total += pi * np.asarray(w, dtype=float)
    if plan.sigma2 > 0:
        return gaussian_perturb(total, plan.sigma2, rng)
    return total


def run_protocol(split: DatasetSplit, p: PrivacyParams, cfg: TrainConfig, master_seed: int = 0,
                 *, private: bool = True, observer: Optional[ObserverLog] = None, w0=None):
    """Run ``p.rounds_T`` rounds and return ``(final_broadcast_model, traces)``.

    With ``private=False`` clipping is disabled and both noise scales are zero,
    leaving plain federated averaging with the same random streams.
    """
    V = split.n_clients
    n_features = split.shards[0].X.shape[1]
    if private:
        plan = plan_noise(p, V, split.m, split.pis)
        B = p.clip_B
    else:
        plan, B = ZERO_NOISE, math.inf
    if observer is None:
        observer = ObserverLog()

    w_global = zero_model(n_features) if w0 is None else np.array(w0, dtype=float)
    server = ServerState(global_model=w_global, plan=plan)
    clients = [ClientState(s.client_id, s, w_global.copy(), rng=None) for s in split.shards]
    has_test = len(split.y_test) > 0
    traces = []
    for t in range(1, p.rounds_T + 1):
        try:
            uploads, records = [], []
            for k, state in enumerate(clients):
                state.rng = round_rng(master_seed, t, state.client_id)
                state, upload = client_step(state, server.global_model, cfg, B, plan.sigma1)
                clients[k] = state
                uploads.append((state.shard.pi, upload))
                records.append(ClientRecord(
                    client_id=state.client_id,
                    pre_noise_norm=float(np.linalg.norm(state.clipped)),
                    clipped_hash=model_hash(state.clipped),
                    noise_norm=float(np.linalg.norm(upload - state.clipped)),
                    upload_hash=model_hash(upload),
                ))
            observer.record_uploads(t, uploads)
            aggregate = sum(pi * w for pi, w in uploads)
            broadcast = server_aggregate(uploads, plan, round_rng(master_seed, t, SERVER_ID))
            observer.record_broadcast(t, broadcast)
            server.global_model, server.round = broadcast, t

            if has_test:
                metrics = evaluate(broadcast, split.X_test, split.y_test)
                client_metrics = (metrics,) * V
                mean_acc, mean_loss = metrics.accuracy, metrics.hinge_loss
            else:
                client_metrics, mean_acc, mean_loss = (), math.nan, math.nan
        except Exception as exc:
            raise RoundFailedError(t, exc) from exc
        traces.append(RoundTrace(
            round=t,
            clients=tuple(records),
            aggregate_hash=model_hash(aggregate),
            broadcast_hash=model_hash(broadcast),
            sigma2_applied=plan.sigma2_applied,
            client_metrics=client_metrics,
            mean_accuracy=mean_acc,
            mean_loss=mean_loss,
        ))
    return server.global_model, traces


def write_traces(traces, path):
    """One JSON object per line, fields in :class:`RoundTrace` declaration order."""
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(tr.to_json() + "\n")


def read_traces(path) -> list:
    with open(path) as fh:
        return [RoundTrace.from_json(line) for line in fh if line.strip()]


class DPFederatedSVM(ClassifierMixin, BaseEstimator):
    """Linear SVM trained by simulated clients under global (epsilon, delta)-DP.

    ``fit`` deals the training rows into ``n_clients`` label-stratified shards
    and runs the full protocol; the final broadcast model is the fitted model.
    Set ``private=False`` for the non-private federated baseline.

    Parameters
    ----------
    n_clients : int, default=20
    epsilon : float, default=20.0
    delta : float, default=0.01
    clip_B : float, default=1.0
    rounds_T : int, default=50
    exposures_E : int or None, default=None
        Number of rounds an upload may be observed; None means every round.
    private : bool, default=True
    local_epochs, learning_rate, lr_decay, l2_lambda
        Local trainer settings, see :class:`~gdpfed.linear.TrainConfig`.
    random_state : int, default=0
        Seeds both the sharding and the protocol's random streams.

    Attributes
    ----------
    model_ : ndarray of shape (n_features + 1,)
        Final broadcast model, bias last.
    noise_plan_ : NoisePlan
    traces_ : list of RoundTrace
    """

    def __init__(self, n_clients=20, epsilon=20.0, delta=0.01, clip_B=1.0, rounds_T=50,
                 exposures_E=None, private=True, local_epochs=1, learning_rate=0.01,
                 lr_decay=0.98, l2_lambda=0.03, random_state=0):
        self.n_clients = n_clients
        self.epsilon = epsilon
        self.delta = delta
        self.clip_B = clip_B
        self.rounds_T = rounds_T
        self.exposures_E = exposures_E
        self.private = private
        self.local_epochs = local_epochs
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.l2_lambda = l2_lambda
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"DPFederatedSVM is binary; got {len(self.classes_)} classes")
        self.n_features_in_ = X.shape[1]
        signed = np.where(y == self.classes_[1], 1.0, -1.0)

        seed = 0 if self.random_state is None else int(self.random_state)
        order = stratified_order(signed, np.random.default_rng(seed))
        shards = deal_shards(X, signed, order, self.n_clients)
        split = DatasetSplit(shards=shards, X_test=np.empty((0, X.shape[1])), y_test=np.empty(0))
        params = PrivacyParams(self.epsilon, self.delta, self.clip_B, self.rounds_T, self.exposures_E)
        cfg = TrainConfig(self.local_epochs, self.learning_rate, self.lr_decay, self.l2_lambda)
        self.noise_plan_ = plan_noise(params, split.n_clients, split.m, split.pis) if self.private else ZERO_NOISE
        self.model_, self.traces_ = run_protocol(split, params, cfg, seed, private=self.private)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return decision_values(self.model_, X)

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]
