"""Reference implementations written independently of the package code."""
import mpmath as mp
import numpy as np


def fedavg_oracle(split, cfg, rounds, seed):
    """Textbook FedAvg written without the package's trainer."""
    w = np.zeros(split.shards[0].X.shape[1] + 1)
    history = []
    for t in range(1, rounds + 1):
        new = np.zeros_like(w)
        for shard in split.shards:
            rng = np.random.default_rng([seed, t, shard.client_id])
            v = w.copy()
            lr = cfg.learning_rate
            for _ in range(cfg.local_epochs):
                for i in rng.permutation(len(shard.y)):
                    x, y = shard.X[i], shard.y[i]
                    if y * (v[:-1] @ x + v[-1]) < 1.0:
                        v[:-1] -= lr * (cfg.l2_lambda * v[:-1] - y * x)
                        v[-1] += lr * y
                    else:
                        v[:-1] -= lr * cfg.l2_lambda * v[:-1]
                lr *= cfg.lr_decay
            new += shard.pi * v
        w = new
        history.append(w.copy())
    return history


def mp_gaussian_delta(sens, sigma, eps):
    with mp.workdps(50):
        a = mp.mpf(sens) / (2 * mp.mpf(sigma))
        b = mp.mpf(eps) * mp.mpf(sigma) / mp.mpf(sens)
        return mp.ncdf(a - b) - mp.e ** mp.mpf(eps) * mp.ncdf(-a - b)
