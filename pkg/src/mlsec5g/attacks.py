"""Attack harness: inference-time, training-time and online attack drivers.

Every driver compares a clean twin with an adversarial twin built from the
same recorded data, so measured damage is attributable to the perturbation
alone. Repeated trials derive their seeds from (master seed, trial index);
reported spreads are population standard deviations over trial means.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import metrics as M
from .repro import derive_seed
from .threat import degradation

METRIC_REGISTRY: dict[str, Callable] = {
    "Acc": M.accuracy,
    "RMSE": M.rmse,
}


def resolve_metric(metric_name: str, metric_fn: Callable | None = None,
                   orientation: str | None = None):
    """Return (fn, orientation) for a metric name, with overrides allowed."""
    fn = metric_fn if metric_fn is not None else METRIC_REGISTRY.get(metric_name)
    if fn is None:
        raise ValueError(f"no metric function registered for {metric_name!r}; pass metric_fn")
    orient = orientation if orientation is not None else M.ORIENTATION.get(metric_name)
    if orient is None:
        raise ValueError(f"unknown orientation for metric {metric_name!r}")
    return fn, orient


def map_trials(fn: Callable[[int], object], n_trials: int, jobs: int = 1) -> list:
    """Run fn(trial_index) for each trial; order of results is by index.

    Trials are seed-isolated, so parallel execution cannot change any value,
    only wall-clock time.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    if jobs <= 1:
        return [fn(t) for t in range(n_trials)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(n_trials)))


@dataclass(frozen=True)
class CurvePoint:
    """One sweep point: per-trial metric values plus their summary."""

    x: float
    metric_mean: float
    metric_std: float
    degradation_mean: float
    degradation_std: float
    n_trials: int
    values: tuple[float, ...]


@dataclass(frozen=True)
class DegradationCurve:
    """Damage along one intensity axis, relative to a clean baseline."""

    name: str
    metric_name: str
    orientation: str
    x_label: str
    baseline: float
    points: tuple[CurvePoint, ...]

    def xs(self) -> list[float]:
        return [p.x for p in self.points]

    def degradations(self) -> list[float]:
        return [p.degradation_mean for p in self.points]


def summarize_curve(name, metric_name, orientation, x_label, baseline,
                    raw_points) -> DegradationCurve:
    """raw_points: sequence of (x, [per-trial metric values])."""
    pts = []
    for x, values in raw_points:
        values = tuple(float(v) for v in values)
        degs = tuple(degradation(baseline, v, orientation) for v in values)
        pts.append(CurvePoint(
            x=float(x),
            metric_mean=float(np.mean(values)),
            metric_std=float(np.std(values)),
            degradation_mean=float(np.mean(degs)),
            degradation_std=float(np.std(degs)),
            n_trials=len(values),
            values=values,
        ))
    return DegradationCurve(name, metric_name, orientation, x_label, float(baseline), tuple(pts))


@dataclass(frozen=True)
class AttackPlan:
    """Config-level description of one attack run."""

    scenario: str
    stage: str  # "inference" | "training" | "online"
    perturbations: tuple[str, ...] = ()
    trials: int = 1
    ratios: tuple[float, ...] = ()
    attacker_ids: tuple[str, ...] = ()
    fraction: float = 1.0

    def __post_init__(self):
        if self.stage not in ("inference", "training", "online"):
            raise ValueError(f"unknown attack stage {self.stage!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        for r in self.ratios:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"poison ratio {r} outside [0, 1]")


@dataclass(frozen=True)
class InferenceAttackResult:
    aggregate: DegradationCurve
    per_group: Mapping[object, DegradationCurve] = field(default_factory=dict)


def _normalize_adversarial_sets(adversarial_sets):
    """Accept (x, X_adv) or (x, [X_adv, ...]); return list of (x, [variants])."""
    out = []
    for x, variants in adversarial_sets:
        if isinstance(variants, np.ndarray):
            variants = [variants]
        else:
            variants = list(variants)
        if not variants:
            raise ValueError(f"sweep point {x!r} has no adversarial variants")
        out.append((float(x), [np.asarray(v, dtype=float) for v in variants]))
    return out


def run_inference_attack(model, clean_eval, adversarial_sets, metric_name: str,
                         metric_fn: Callable | None = None,
                         orientation: str | None = None,
                         group_by=None, name: str = "inference",
                         x_label: str = "intensity") -> InferenceAttackResult:
    """Evaluate a trained model on clean rows and their perturbed twins.

    clean_eval is (X, y); adversarial_sets maps each sweep value to one or
    more row-aligned perturbed versions of X (several when the perturbation
    is itself random and was re-drawn per trial). Degradation is signed so
    positive always means the attacker hurt the defender. group_by, when
    given, holds one group id per row and yields additional per-group curves.
    """
    X, y = clean_eval
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError("clean rows and targets are not aligned")
    fn, orient = resolve_metric(metric_name, metric_fn, orientation)
    sets = _normalize_adversarial_sets(adversarial_sets)
    for x, variants in sets:
        for v in variants:
            if v.shape != X.shape:
                raise ValueError(
                    f"adversarial set at x={x} is not row-aligned with the clean twin "
                    f"({v.shape} vs {X.shape})")

    pred_clean = model.predict(X)
    predictions: dict[tuple[int, int], np.ndarray] = {}
    for si, (x, variants) in enumerate(sets):
        for vi, v in enumerate(variants):
            predictions[(si, vi)] = model.predict(v)

    def curve_for(rows: np.ndarray, label: str) -> DegradationCurve:
        base = float(fn(y[rows], pred_clean[rows]))
        raw = []
        for si, (x, variants) in enumerate(sets):
            values = [float(fn(y[rows], predictions[(si, vi)][rows]))
                      for vi in range(len(variants))]
            raw.append((x, values))
        return summarize_curve(label, metric_name, orient, x_label, base, raw)

    all_rows = np.arange(X.shape[0])
    aggregate = curve_for(all_rows, name)
    per_group: dict[object, DegradationCurve] = {}
    if group_by is not None:
        groups = np.asarray(group_by)
        if groups.shape[0] != X.shape[0]:
            raise ValueError("group_by is not aligned with the rows")
        for g in sorted(set(groups.tolist())):
            rows = np.nonzero(groups == g)[0]
            per_group[g] = curve_for(rows, f"{name}[{g}]")
    return InferenceAttackResult(aggregate, per_group)


def run_training_attack(trainer: Callable, T, V, ratios: Sequence[float],
                        adversarial_flows, trials: int, seed: int,
                        poison_fn: Callable, evaluator: Callable,
                        metric_name: str, orientation: str | None = None,
                        jobs: int = 1, name: str = "training") -> DegradationCurve:
    """Poison a growing share of the attacker's training flows and retrain.

    trainer(T_poisoned, seed) -> model; poison_fn(T, adversarial_flows, ratio,
    seed) -> T_poisoned; evaluator(model, V) -> metric value on the untouched
    validation split. A ratio-0 control is always included; under a fixed
    master seed its model is the baseline model, bit for bit, because the
    trainer seed depends only on the trial index.
    """
    orient = orientation if orientation is not None else M.ORIENTATION.get(metric_name)
    if orient is None:
        raise ValueError(f"unknown orientation for metric {metric_name!r}")
    ratios = sorted(set(float(r) for r in ratios) | {0.0})
    for r in ratios:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"poison ratio {r} outside [0, 1]")
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def one_trial(t: int) -> list[float]:
        out = []
        for j, ratio in enumerate(ratios):
            if ratio == 0.0:
                poisoned = T
            else:
                poisoned = poison_fn(T, adversarial_flows, ratio,
                                     derive_seed(seed, "poison", t, j))
            model = trainer(poisoned, derive_seed(seed, "train", t))
            out.append(float(evaluator(model, V)))
        return out

    per_trial = map_trials(one_trial, trials, jobs)
    baseline_values = [trial[0] for trial in per_trial]
    baseline = float(np.mean(baseline_values))
    raw = [(ratio, [per_trial[t][j] for t in range(trials)])
           for j, ratio in enumerate(ratios)]
    return summarize_curve(name, metric_name, orient, "poison_ratio", baseline, raw)


# ---------------------------------------------------------------------------
# online attacks

SPOOF_MODES = ("floor_zero", "jitter")
JITTER_MAX_OFFSET = 3
CQI_RANGE = (0, 15)


def spoof_value(mode: str, true_value: float, step_index: int, seed: int) -> float:
    """The value the attacker reports instead of the truth at one spoof slot."""
    if mode == "floor_zero":
        return 0.0
    if mode == "jitter":
        rng = np.random.default_rng([int(seed) & 0x7FFFFFFFFFFFFFFF, step_index])
        magnitude = int(rng.integers(1, JITTER_MAX_OFFSET + 1))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        lo, hi = CQI_RANGE
        return float(min(hi, max(lo, true_value + sign * magnitude)))
    raise ValueError(f"unknown spoof mode {mode!r}; expected one of {SPOOF_MODES}")


@dataclass(frozen=True)
class OnlineAttackResult:
    """Differential damage of spoofed reports on an online predictor.

    Both CRMSE series measure predictions against the TRUE series; the
    attacked twin differs only in what it was told, never in what the world
    did. differential = crmse_attacked - crmse_clean, so positive means the
    spoofing degraded tracking.
    """

    t: np.ndarray
    true_series: np.ndarray
    pred_clean: np.ndarray
    pred_attacked: np.ndarray
    crmse_clean: np.ndarray
    crmse_attacked: np.ndarray
    differential: np.ndarray
    spoof_steps: tuple[int, ...]
    spoof_mode: str | None


def run_online_attack(model_factory: Callable[[], object], true_series,
                      spoof_mode: str | None, period_s: float = 60.0,
                      dt: float = 1.0, seed: int = 0) -> OnlineAttackResult:
    """Drive twin online models through one operational phase.

    model_factory() must return a freshly initialized online model and is
    called once per twin; determinism of the factory is what makes the twins
    identical. Every period_s seconds (steps i with i % period == 0) the
    attacked twin receives a spoofed report instead of the truth. spoof_mode
    None runs a no-spoof control whose differential is exactly zero.
    """
    series = np.asarray(true_series, dtype=float)
    if series.ndim != 1 or series.size == 0:
        raise ValueError("true_series must be a non-empty 1-d array")
    if period_s <= 0 or dt <= 0:
        raise ValueError("period_s and dt must be positive")
    period_steps = int(round(period_s / dt))
    if period_steps < 1:
        raise ValueError("spoof period is shorter than one step")
    if series.size < period_steps:
        raise ValueError(
            f"horizon of {series.size} steps is shorter than one spoof period ({period_steps})")
    if spoof_mode is not None and spoof_mode not in SPOOF_MODES:
        raise ValueError(f"unknown spoof mode {spoof_mode!r}")

    clean = model_factory()
    attacked = model_factory()
    H = series.size
    pred_clean = np.empty(H)
    pred_attacked = np.empty(H)
    spoof_steps = []
    for i in range(H):
        pred_clean[i] = clean.predict_next()
        pred_attacked[i] = attacked.predict_next()
        truth = float(series[i])
        reported = truth
        if spoof_mode is not None and i % period_steps == 0:
            reported = spoof_value(spoof_mode, truth, i, seed)
            spoof_steps.append(i)
        clean.step(truth)
        attacked.step(reported)

    crmse_clean = M.crmse(series, pred_clean)
    crmse_attacked = M.crmse(series, pred_attacked)
    return OnlineAttackResult(
        t=np.arange(1, H + 1, dtype=float) * dt,
        true_series=series,
        pred_clean=pred_clean,
        pred_attacked=pred_attacked,
        crmse_clean=crmse_clean,
        crmse_attacked=crmse_attacked,
        differential=crmse_attacked - crmse_clean,
        spoof_steps=tuple(spoof_steps),
        spoof_mode=spoof_mode,
    )


def spoof_positions(topology, attacker_ids: Sequence[int], step_count: int = 8,
                    max_offset: float = 300.0) -> list[np.ndarray]:
    """Position sets for a radial lie: step s moves attackers s/N * max_offset
    away from their serving base station, clamped to the serving cell's edge.

    Step 0 is the identity (true positions). Non-attacker rows are bit-equal
    to the true positions at every step. Attackers exactly on top of their
    base station have no defined direction and are an error.
    """
    if step_count < 1:
        raise ValueError("step_count must be >= 1")
    if max_offset < 0:
        raise ValueError("max_offset must be non-negative")
    positions = np.asarray(topology.ue_positions, dtype=float)
    n = positions.shape[0]
    for a in attacker_ids:
        if not 0 <= a < n:
            raise ValueError(f"attacker id {a} outside the UE population")
    out = []
    for s in range(step_count + 1):
        offset = (s / step_count) * max_offset
        pos = positions.copy()
        for a in attacker_ids:
            gnb = topology.gnb_positions[topology.serving[a]]
            d = positions[a] - gnb
            norm = float(np.hypot(d[0], d[1]))
            if norm == 0.0:
                raise ValueError(f"attacker {a} sits exactly on its base station")
            if offset > 0.0:
                moved = positions[a] + offset * d / norm
                xmin, ymin, xmax, ymax = topology.cell_bounds[topology.serving[a]]
                pos[a] = (min(max(moved[0], xmin), xmax), min(max(moved[1], ymin), ymax))
        out.append(pos)
    return out
