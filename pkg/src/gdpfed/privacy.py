"""Clipping, sensitivities and Gaussian noise calibration for uplink and broadcast."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr


def c_factor(delta: float) -> float:
    """Smallest admissible Gaussian-mechanism constant, sqrt(2 ln(1.25 / delta))."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(2.0 * math.log(1.25 / delta))


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget and protocol length.

    ``exposures_E`` defaults to ``rounds_T`` (every upload may be observed).
    """

    epsilon: float
    delta: float = 0.01
    clip_B: float = 1.0
    rounds_T: int = 50
    exposures_E: Optional[int] = None

    def __post_init__(self):
        if self.exposures_E is None:
            object.__setattr__(self, "exposures_E", self.rounds_T)
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.clip_B > 0:
            raise ValueError(f"clip_B must be > 0, got {self.clip_B}")
        if self.rounds_T < 1:
            raise ValueError(f"rounds_T must be >= 1, got {self.rounds_T}")
        if not 1 <= self.exposures_E <= self.rounds_T:
            raise ValueError(f"exposures_E must be in [1, {self.rounds_T}], got {self.exposures_E}")

    @property
    def c(self) -> float:
        return c_factor(self.delta)


@dataclass(frozen=True)
class NoisePlan:
    c: float
    s_sharing: float
    sigma1: float
    s_broadcast: float
    sigma: float
    sigma2: float

    @property
    def sigma2_applied(self) -> bool:
        return self.sigma2 > 0.0


ZERO_NOISE = NoisePlan(c=0.0, s_sharing=0.0, sigma1=0.0, s_broadcast=0.0, sigma=0.0, sigma2=0.0)


def clip(w, B: float) -> np.ndarray:
    """Scale ``w`` by ``1 / max(1, ||w|| / B)``.

    Vectors already inside the ball come back unchanged. The scaled result is
    nudged toward zero by a few ulps if rounding left its norm just above B,
    which keeps the bound exact and makes clipping idempotent.
    """
    if not B > 0:
        raise ValueError(f"clip bound must be > 0, got {B}")
    w = np.asarray(w, dtype=float)
    norm = np.linalg.norm(w)
    if norm <= B:
        return w.copy()
    out = w / (norm / B)
    while np.linalg.norm(out) > B:
        out = out * (1.0 - 2.0 ** -52)
    return out


def uplink_sensitivity(B: float, dataset_size: int) -> float:
    """Sensitivity 2B/|D| of a clipped local model; pass the smallest shard size for S_sharing."""
    if dataset_size < 1:
        raise ValueError(f"dataset_size must be >= 1, got {dataset_size}")
    if not B > 0:
        raise ValueError(f"B must be > 0, got {B}")
    return 2.0 * B / dataset_size


def downlink_sensitivity(B: float, pi_i: float, m: int) -> float:
    """Sensitivity 2B*pi_i/m of the aggregated model with respect to client i's data."""
    if not 0.0 < pi_i <= 1.0:
        raise ValueError(f"pi_i must lie in (0, 1], got {pi_i}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return 2.0 * B * pi_i / m


def plan_noise(p: PrivacyParams, n_clients: int, m: int, pis: Optional[Sequence[float]] = None) -> NoisePlan:
    """Derive the client (sigma1) and server top-up (sigma2) noise scales.

    ``sigma`` is the std the broadcast model needs, built from the largest
    per-client broadcast sensitivity. ``sigma2`` uses the closed form
    ``2Bc sqrt(T^2 - E^2 V) / (V m eps)`` and is zero unless ``T > E sqrt(V)``.
    With uniform weights, ``sigma1**2 / V + sigma2**2 == max(sigma**2, sigma1**2 / V)``.
    """
    V = n_clients
    if V < 1:
        raise ValueError(f"need at least one client, got {V}")
    if pis is None:
        pis = [1.0 / V] * V
    pis = np.asarray(pis, dtype=float)
    if len(pis) != V:
        raise ValueError(f"got {len(pis)} weights for {V} clients")
    if abs(pis.sum() - 1.0) > 1e-9:
        raise ValueError(f"client weights must sum to 1, got {pis.sum()!r}")

    B, T, E, eps = p.clip_B, p.rounds_T, p.exposures_E, p.epsilon
    c = p.c
    s_sharing = uplink_sensitivity(B, m)
    sigma1 = c * E * s_sharing / eps
    s_broadcast = max(downlink_sensitivity(B, pi, m) for pi in pis)
    sigma = c * T * s_broadcast / eps
    if T > E * math.sqrt(V):
        sigma2 = 2.0 * B * c * math.sqrt(T * T - E * E * V) / (V * m * eps)
    else:
        sigma2 = 0.0
    return NoisePlan(c=c, s_sharing=s_sharing, sigma1=sigma1,
                     s_broadcast=s_broadcast, sigma=sigma, sigma2=sigma2)


def gaussian_perturb(w, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise to every coordinate. ``sigma == 0`` draws nothing."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    w = np.asarray(w, dtype=float)
    if sigma == 0:
        return w.copy()
    return w + rng.normal(0.0, sigma, size=w.shape)


def gaussian_delta(sensitivity: float, sigma: float, epsilon: float) -> float:
    """Exact delta(epsilon) of the Gaussian mechanism with the given L2 sensitivity.

    delta = Phi(D/(2s) - eps*s/D) - exp(eps) * Phi(-D/(2s) - eps*s/D); the
    second term is evaluated in log space so large epsilon does not overflow.
    """
    a = sensitivity / (2.0 * sigma)
    b = epsilon * sigma / sensitivity
    second = math.exp(epsilon + float(log_ndtr(-a - b)))
    return float(ndtr(a - b)) - second


def dp_bound_check(sensitivity: float, sigma: float, epsilon: float, delta: float) -> bool:
    """Whether N(0, sigma^2) noise at this sensitivity is (epsilon, delta)-DP."""
    for name, v in (("sensitivity", sensitivity), ("sigma", sigma),
                    ("epsilon", epsilon), ("delta", delta)):
        if not v > 0:
            raise ValueError(f"{name} must be > 0, got {v}")
    return gaussian_delta(sensitivity, sigma, epsilon) <= delta
