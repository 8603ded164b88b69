"""Standalone chaos experiments: the doubling map as an exactly-solvable
reference, and Monte-Carlo growth of trajectory separation under random-matrix
chains, with and without ReLU and batch normalization.

Growth is accumulated as log-ratios with per-step renormalization of the
propagated states (the chains are positively homogeneous, so a shared rescale
changes nothing), which keeps d^(L/2)-style growth inside float range.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .tensor import derive_seed

RATIO_CAP = 1e300


# --- doubling map -----------------------------------------------------------


def doubling_map_trajectory(x0: float, steps: int) -> np.ndarray:
    """Iterates of x -> 2x mod 1 after x0."""
    if not (0.0 <= x0 < 1.0):
        raise ValueError(f"x0 must be in [0, 1), got {x0}")
    out = np.empty(steps)
    x = x0
    for i in range(steps):
        x = (2.0 * x) % 1.0
        out[i] = x
    return out


def circle_distance(a: float, b: float) -> float:
    d = abs(a - b)
    return min(d, 1.0 - d)


def doubling_map_divergence(x0: float, x0p: float, steps: int):
    """Per-step circle distances between two trajectories and the fitted rate.

    The estimate ln(d_K / d_0) / K uses the pre-saturation window: as long as
    the distance stays at or below 0.25 the next step doubles it exactly, so
    below saturation the rate is ln 2 to machine precision.
    """
    if x0 == x0p:
        raise ValueError("identical starting points: divergence rate undefined")
    ta = doubling_map_trajectory(x0, steps)
    tb = doubling_map_trajectory(x0p, steps)
    dists = np.empty(steps + 1)
    dists[0] = circle_distance(x0, x0p)
    for i in range(steps):
        dists[i + 1] = circle_distance(ta[i], tb[i])
    window = steps
    for k in range(steps):
        if dists[k] > 0.25:
            window = k
            break
    if window == 0:
        return dists, float("nan")
    lam = math.log(dists[window] / dists[0]) / window
    return dists, lam


# --- random-matrix growth chains ---------------------------------------------


@dataclass
class GrowthSeries:
    variant: str            # linear | relu | batchnorm
    d: int
    depth: int
    trials: int
    seed: int
    steps: np.ndarray
    log_ratio: np.ndarray    # per-step geometric mean of distance growth
    trials_alive: np.ndarray
    state_log_rms: np.ndarray  # per-step geometric mean state magnitude (log)
    truncated: bool = False
    collapsed: int = 0         # trials that hit an all-zero state (relu)
    skipped_normalizations: int = 0  # zero-variance dimensions (batchnorm)

    def ratios(self) -> np.ndarray:
        return np.exp(self.log_ratio)

    def slope(self) -> float:
        """Least-squares slope of the log growth against the step index."""
        return float(np.polyfit(self.steps, self.log_ratio, 1)[0])

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["step", "geo_mean_ratio", "trials_alive"])
        for k, lr, alive in zip(self.steps, self.log_ratio, self.trials_alive):
            w.writerow([int(k), repr(float(math.exp(lr))), int(alive)])

    def manifest(self) -> dict:
        return {
            "variant": self.variant,
            "d": self.d,
            "depth": self.depth,
            "trials": self.trials,
            "seed": self.seed,
            "slope": self.slope(),
            "truncated": self.truncated,
            "collapsed": self.collapsed,
            "skipped_normalizations": self.skipped_normalizations,
        }


def _finalize(variant, d, L, trials, seed, logs, alive, state_logs, collapsed=0,
              skipped=0) -> GrowthSeries:
    """Per-step geometric means over alive trials, truncated at the float cap."""
    steps = np.arange(L + 1)
    trials_alive = alive.sum(axis=0)
    log_ratio = np.full(L + 1, np.nan)
    state_log = np.full(L + 1, np.nan)
    for k in range(L + 1):
        live = alive[:, k]
        if live.any():
            log_ratio[k] = logs[live, k].mean()
            state_log[k] = state_logs[live, k].mean()
    keep = L + 1
    truncated = False
    cap = math.log(RATIO_CAP)
    for k in range(L + 1):
        if trials_alive[k] == 0 or not np.isfinite(log_ratio[k]) or log_ratio[k] > cap:
            keep = k
            truncated = True
            break
    return GrowthSeries(
        variant=variant, d=d, depth=L, trials=trials, seed=seed,
        steps=steps[:keep], log_ratio=log_ratio[:keep],
        trials_alive=trials_alive[:keep], state_log_rms=state_log[:keep],
        truncated=truncated, collapsed=collapsed, skipped_normalizations=skipped,
    )


def _rms(v) -> float:
    return math.sqrt(float(np.mean(np.square(v))))


def random_matrix_growth(d: int, L: int, trials: int, seed: int) -> GrowthSeries:
    """Pure matrix chain: expected log growth is ln(d)/2 per step.

    The difference vector itself is propagated (the chain is linear), with a
    per-step renormalization folded back in log domain.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    if L < 1 or trials < 1:
        raise ValueError("L and trials must be >= 1")
    logs = np.zeros((trials, L + 1))
    state_logs = np.zeros((trials, L + 1))
    alive = np.ones((trials, L + 1), dtype=bool)
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        v = rng.standard_normal(d)
        base = _rms(v)
        state_logs[t, 0] = math.log(base)
        acc = 0.0
        scale = base
        for k in range(1, L + 1):
            w = rng.standard_normal((d, d))
            v = w @ v
            m = _rms(v)
            if m == 0.0:
                alive[t, k:] = False
                break
            acc += math.log(m)
            logs[t, k] = acc
            state_logs[t, k] = acc + math.log(scale)
            v = v / m
    return _finalize("linear", d, L, trials, seed, logs, alive, state_logs)


def relu_chain_growth(d: int, L: int, trials: int, seed: int,
                      delta_scale: float = 1e-6) -> GrowthSeries:
    """Matrix chain with ReLU after every multiplication, applied to both
    copies of a perturbed pair.

    Trials whose state collapses to all zeros (or whose copies merge exactly)
    are dropped from that step onward and counted.
    """
    if d < 4:
        raise ValueError(f"d must be >= 4 for the relu chain, got {d}")
    if L < 1 or trials < 1:
        raise ValueError("L and trials must be >= 1")
    logs = np.zeros((trials, L + 1))
    state_logs = np.zeros((trials, L + 1))
    alive = np.ones((trials, L + 1), dtype=bool)
    collapsed = 0
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, t))
        x = rng.standard_normal(d)
        dv = rng.standard_normal(d)
        dv *= delta_scale * _rms(x) / _rms(dv)
        y = x + dv
        d0 = _rms(x - y)
        state_logs[t, 0] = math.log(_rms(x))
        acc = 0.0  # accumulated log of the joint renormalization
        for k in range(1, L + 1):
            w = rng.standard_normal((d, d))
            x = np.maximum(w @ x, 0.0)
            y = np.maximum(w @ y, 0.0)
            dist = _rms(x - y)
            if not x.any() or not y.any() or dist == 0.0:
                alive[t, k:] = False
                collapsed += 1
                break
            logs[t, k] = math.log(dist) + acc - math.log(d0)
            m = _rms(x)
            state_logs[t, k] = math.log(m) + acc
            x = x / m
            y = y / m
            acc += math.log(m)
    return _finalize("relu", d, L, trials, seed, logs, alive, state_logs,
                     collapsed=collapsed)


def batchnorm_chain_growth(d: int, L: int, trials: int, seed: int,
                           delta_scale: float = 1e-6) -> GrowthSeries:
    """ReLU chain with per-step batch standardization across `trials` vectors.

    The batch provides the normalization statistics; the separation is
    measured between a designated pair (rows 0 and 1) inside that batch.
    Dimensions with zero batch variance skip the division and are counted.
    """
    if d < 4:
        raise ValueError(f"d must be >= 4, got {d}")
    if L < 1 or trials < 2:
        raise ValueError("L must be >= 1 and trials >= 2 (the batch)")
    rng = np.random.default_rng(derive_seed(seed, 0))
    batch = rng.standard_normal((trials, d))
    dv = rng.standard_normal(d)
    dv *= delta_scale * _rms(batch[0]) / _rms(dv)
    batch[1] = batch[0] + dv

    d0 = _rms(batch[0] - batch[1])
    logs = np.zeros((1, L + 1))
    state_logs = np.zeros((1, L + 1))
    alive = np.ones((1, L + 1), dtype=bool)
    state_logs[0, 0] = math.log(_rms(batch[0]))
    skipped = 0
    step_rng = np.random.default_rng(derive_seed(seed, 1))
    for k in range(1, L + 1):
        w = step_rng.standard_normal((d, d))
        batch = np.maximum(batch @ w.T, 0.0)
        mu = batch.mean(axis=0)
        sd = batch.std(axis=0)
        ok = sd > 0.0
        skipped += int(np.sum(~ok))
        batch = batch - mu
        batch[:, ok] = batch[:, ok] / sd[ok]
        dist = _rms(batch[0] - batch[1])
        if dist == 0.0:
            alive[0, k:] = False
            break
        logs[0, k] = math.log(dist / d0)
        state_logs[0, k] = math.log(_rms(batch[0]))
    return _finalize("batchnorm", d, L, trials, seed, logs, alive, state_logs,
                     skipped=skipped)
