"""Differentially private federated linear SVM on the Wisconsin breast cancer data."""
from .data import (ClientShard, DatasetSplit, LabeledData, ScoreScaler, load_bcwd, parse_bcwd,
                   split_and_partition)
from .exceptions import ConfigurationError, ParseError, ProtocolError, RoundFailedError
from .federation import DPFederatedSVM, ObserverLog, RoundTrace, client_step, run_protocol, server_aggregate
from .linear import LinearSVM, TrainConfig, evaluate, leakage_demo, local_train
from .privacy import NoisePlan, PrivacyParams, c_factor, clip, dp_bound_check, gaussian_perturb, plan_noise

__all__ = [
    "ClientShard", "DatasetSplit", "LabeledData", "ScoreScaler", "load_bcwd", "parse_bcwd",
    "split_and_partition", "ConfigurationError", "ParseError", "ProtocolError", "RoundFailedError",
    "DPFederatedSVM", "ObserverLog", "RoundTrace", "client_step", "run_protocol", "server_aggregate",
    "LinearSVM", "TrainConfig", "evaluate", "leakage_demo", "local_train",
    "NoisePlan", "PrivacyParams", "c_factor", "clip", "dp_bound_check", "gaussian_perturb", "plan_noise",
]
