"""The susceptibility metrics: per-attack ratio, aggregate geometric mean,
per-layer drift, decision-boundary distances, approximated robustness radii,
and accuracy under attack.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .attack import AttackConfig, attack_batch
from .engine import forward, forward_batch
from .model import ModelSpec
from .tensor import as_tensor, derive_seed, rms_distance, rms_norm


def psi(model: ModelSpec, params: dict, x, delta) -> float:
    """Output change divided by input change, both in rms."""
    delta = as_tensor(delta)
    d = rms_norm(delta)
    if d == 0.0:
        raise ValueError("psi needs a nonzero perturbation")
    y0 = forward(model, params, x)
    y1 = forward(model, params, as_tensor(x) + delta)
    return rms_distance(y0, y1) / d


@dataclass
class DriftRecord:
    """rms distance between clean and perturbed hidden states at every depth."""

    entries: list          # (depth, distance), depth 0..L complete
    radius: float
    seed: int | None = None

    def distances(self) -> np.ndarray:
        return np.array([d for _, d in self.entries])


def drift_trajectory(model: ModelSpec, params: dict, x, delta, seed=None) -> DriftRecord:
    delta = as_tensor(delta)
    r = rms_norm(delta)
    if r == 0.0:
        raise ValueError("drift needs a nonzero perturbation")
    _, traj_a = forward(model, params, x, record=True)
    _, traj_b = forward(model, params, as_tensor(x) + delta, record=True)
    entries = [
        (depth, rms_distance(za, zb))
        for (depth, za), (_, zb) in zip(traj_a.states, traj_b.states)
    ]
    return DriftRecord(entries, radius=r, seed=seed)


def lyapunov_exponent(psi_value: float, L: int) -> float:
    """Per-layer exponential rate matching an end-to-end growth ratio."""
    if not psi_value > 0:
        raise ValueError(f"psi must be positive, got {psi_value}")
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    return math.log(psi_value) / L


@dataclass
class PsiRecord:
    input_id: int
    radius: float
    psi: float
    objective: float
    seed: int


@dataclass
class SusceptibilityReport:
    records: list
    psi_hat: float
    lambda_hat: float
    depth_L: int
    n_zero_excluded: int
    config: dict

    def recompute_psi_hat(self) -> float:
        vals = [r.psi for r in self.records if r.psi > 0]
        return math.exp(sum(math.log(v) for v in vals) / len(vals))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["input_id", "radius", "psi", "objective", "seed"])
        for r in self.records:
            w.writerow([r.input_id, repr(r.radius), repr(r.psi), repr(r.objective), r.seed])

    def summary(self) -> dict:
        return {
            "psi_hat": self.psi_hat,
            "lambda_hat": self.lambda_hat,
            "depth_L": self.depth_L,
            "n_records": len(self.records),
            "n_zero_excluded": self.n_zero_excluded,
            "config": self.config,
        }

    def write_summary(self, fh) -> None:
        json.dump(self.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def radius_grid(r_min: float, r_max: float, n_radii: int) -> np.ndarray:
    """Log-uniform grid of attack radii."""
    if not (0 < r_min <= r_max):
        raise ValueError(f"need 0 < r_min <= r_max, got [{r_min}, {r_max}]")
    if n_radii < 1:
        raise ValueError("n_radii must be >= 1")
    if n_radii == 1:
        return np.array([r_min])
    return np.geomspace(r_min, r_max, n_radii)


def psi_hat(model: ModelSpec, params: dict, inputs, r_min: float, r_max: float,
            n_radii: int, seed: int, steps: int = 5, step_size: float = 0.01,
            threads: int = 1) -> SusceptibilityReport:
    """Attack every input at every radius on a log-uniform grid and aggregate
    the ratios by their geometric mean (computed in the log domain).

    Zero ratios cannot enter a geometric mean; they are dropped and counted.
    Per-sample attack seeds derive from (seed, input id, radius index), so the
    report is reproducible and insensitive to execution order.
    """
    xs = np.stack([as_tensor(x) for x in inputs])
    if xs.shape[0] == 0:
        raise ValueError("inputs must be nonempty")
    radii = radius_grid(r_min, r_max, n_radii)

    def run_radius(j):
        r = float(radii[j])
        seeds = [derive_seed(seed, i, j) for i in range(xs.shape[0])]
        cfg = AttackConfig(radius=r, steps=steps, step_size=step_size, seed=seed)
        perts = attack_batch(model, params, xs, cfg, seeds)
        out = []
        for i, pert in enumerate(perts):
            ratio = pert.objective / rms_norm(pert.delta)
            out.append(PsiRecord(i, r, ratio, pert.objective, seeds[i]))
        return out

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            buckets = list(pool.map(run_radius, range(len(radii))))
    else:
        buckets = [run_radius(j) for j in range(len(radii))]

    records = [rec for bucket in buckets for rec in bucket]
    logs = [math.log(r.psi) for r in records if r.psi > 0]
    n_zero = sum(1 for r in records if r.psi == 0)
    if not logs:
        raise ValueError("every attack produced a zero ratio; nothing to aggregate")
    ph = math.exp(sum(logs) / len(logs))
    return SusceptibilityReport(
        records=records,
        psi_hat=ph,
        lambda_hat=lyapunov_exponent(ph, model.depth_L),
        depth_L=model.depth_L,
        n_zero_excluded=n_zero,
        config={
            "r_min": r_min,
            "r_max": r_max,
            "n_radii": n_radii,
            "seed": seed,
            "steps": steps,
            "step_size": step_size,
            "n_inputs": int(xs.shape[0]),
        },
    )


def boundary_distance(y) -> float:
    """rms distance from a score vector to the nearest argmax-changing one.

    Equalizing the top class with the runner-up moves both entries to their
    midpoint; no other class or direction gets there cheaper.
    """
    y = as_tensor(y).ravel()
    n = y.size
    if n < 2:
        raise ValueError("boundary distance needs at least two class scores")
    order = np.argsort(y)
    top, runner_up = y[order[-1]], y[order[-2]]
    return float((top - runner_up) / math.sqrt(2.0 * n))


def approx_robustness_radius(y, psi_hat_value: float) -> float:
    """Boundary distance shrunk by the model's susceptibility ratio."""
    if not psi_hat_value > 0:
        raise ValueError(f"psi_hat must be positive, got {psi_hat_value}")
    return boundary_distance(y) / psi_hat_value


def dataset_robustness_radius(model: ModelSpec, params: dict, inputs,
                              psi_hat_value: float, mode: str = "mean") -> float:
    if mode not in ("mean", "min"):
        raise ValueError(f"mode must be 'mean' or 'min', got {mode!r}")
    xs = [as_tensor(x) for x in inputs]
    if not xs:
        raise ValueError("inputs must be nonempty")
    ys = forward_batch(model, params, np.stack(xs))
    values = [approx_robustness_radius(y, psi_hat_value) for y in ys]
    return float(np.mean(values)) if mode == "mean" else float(np.min(values))


def post_attack_accuracy(model: ModelSpec, params: dict, labeled_inputs, radii,
                         steps: int = 5, step_size: float = 0.01, seed: int = 0):
    """Accuracy under attack, on the subset the model already gets right.

    Returns a list of (radius, accuracy, n) rows; radius 0 skips the attack.
    """
    pairs = list(labeled_inputs)
    if not pairs:
        raise ValueError("labeled_inputs must be nonempty")
    xs = np.stack([as_tensor(x) for x, _ in pairs])
    labels = np.asarray([int(c) for _, c in pairs])
    preds = forward_batch(model, params, xs).argmax(axis=1)
    keep = preds == labels
    if not keep.any():
        raise ValueError("no correctly classified inputs; accuracy curve undefined")
    xs = xs[keep]
    labels = labels[keep]
    ids = np.nonzero(keep)[0]
    n = xs.shape[0]

    curve = []
    for j, r in enumerate(radii):
        r = float(r)
        if r == 0.0:
            curve.append((0.0, 1.0, n))
            continue
        cfg = AttackConfig(radius=r, steps=steps, step_size=step_size, seed=seed)
        seeds = [derive_seed(seed, int(i), j) for i in ids]
        perts = attack_batch(model, params, xs, cfg, seeds)
        adv = xs + np.stack([p.delta for p in perts])
        adv_preds = forward_batch(model, params, adv).argmax(axis=1)
        curve.append((r, float(np.mean(adv_preds == labels)), n))
    return curve
