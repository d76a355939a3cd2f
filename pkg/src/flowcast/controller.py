"""Predictive time-of-day switching.

Starting from a nominal plan, the controller walks through the day one
interval at a time.  Inside a search window around each nominal switch time
it predicts the remaining flows up to the end of the next period, evaluates
every admissible switch time ``u >= t`` in the window by the asymmetric fit
(current period scored against the committed parameter vector, remainder
either re-optimized or scored against the nominal next parameters), and
commits the switch the first time the argmin coincides with the current
interval.  Reaching the window end forces the switch.  Committed decisions
are never revisited.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flowdata import FlowDataset, SplitSpec, split_at
from .pls import PlsModel, fit_pls_kernel, predict, pls_to_json, pls_from_json
from .segmentation import FitConfig, SegmentationPlan, fit_value, segment_cost


class ControllerMode(enum.Enum):
    """What the controller may adapt beyond the nominal plan."""

    SEGMENTATION_ONLY = "segmentation_only"          # move switch times, keep nominal params
    SEGMENTATION_AND_PARAMS = "segmentation_and_params"  # also refit upcoming params


@dataclass(frozen=True)
class ControllerConfig:
    window_halfwidth: int = 3
    mode: ControllerMode = ControllerMode.SEGMENTATION_AND_PARAMS
    clamp_predictions: bool = True

    def __post_init__(self) -> None:
        if self.window_halfwidth < 0:
            raise ValueError("window_halfwidth must be >= 0")


def segment_window(tau: int, halfwidth: int, n_intervals: int) -> list[int]:
    """Candidate switch times {tau-h, ..., tau+h} clipped to [1, T-1]."""
    lo = max(1, tau - halfwidth)
    hi = min(n_intervals - 1, tau + halfwidth)
    return list(range(lo, hi + 1))


def validate_windows(plan: SegmentationPlan, halfwidth: int) -> None:
    """Search windows of consecutive nominal switches must not overlap."""
    taus = plan.switch_times
    for a, b in zip(taus, taus[1:]):
        if b - a <= 2 * halfwidth:
            raise ValueError(
                f"switch windows overlap: taus {a} and {b} with halfwidth {halfwidth}"
            )


def t_opt(t: int, window: list[int], y_hat: np.ndarray, mu_current: np.ndarray,
          horizon_end: int, fit_cfg: FitConfig, mode: ControllerMode,
          mu_next: np.ndarray | None = None) -> int:
    """Best admissible switch time in ``window`` at decision time ``t``.

    ``y_hat`` is a grid whose rows ``t+1 .. horizon_end`` hold the predicted
    flows (earlier rows are ignored).  Candidates ``u < t`` are gone and are
    excluded; ties go to the smallest ``u``.  With an empty admissible set
    (``t`` past the window) the current interval is returned, which forces
    the switch.
    """
    feasible = [u for u in window if u >= t]
    if not feasible:
        return t
    if mode is ControllerMode.SEGMENTATION_ONLY and mu_next is None:
        raise ValueError("mu_next is required in SEGMENTATION_ONLY mode")
    best_u, best_cost = feasible[0], np.inf
    for u in feasible:
        cost = fit_value(y_hat, t + 1, u, mu_current, fit_cfg)
        if u + 1 <= horizon_end:
            if mode is ControllerMode.SEGMENTATION_AND_PARAMS:
                cost += segment_cost(y_hat, u + 1, horizon_end, fit_cfg)[0]
            else:
                cost += fit_value(y_hat, u + 1, horizon_end, mu_next, fit_cfg)
        if cost < best_cost:
            best_u, best_cost = u, cost
    return best_u


class PlsModelBank:
    """Fitted predictors keyed by (period index, decision time).

    The model stored under ``(i, t)`` maps measured flows over ``[1, t]`` to
    predicted flows over ``[t+1, tau_{i+1}]``, where ``tau_{i+1}`` is the end
    of period ``i+1`` in the nominal plan (the last period ends at T).
    """

    def __init__(self, models: dict[tuple[int, int], PlsModel],
                 horizons: dict[int, int], n_movements: int):
        for (i, t), model in models.items():
            sp = model.split
            if sp is None or sp.cutoff_index != t or sp.predict_from != t + 1 \
                    or sp.predict_to != horizons[i] \
                    or sp.predictor_stride != 1 or sp.predicted_stride != 1:
                raise ValueError(f"model under key ({i}, {t}) has a mismatched split spec")
        self.models = models
        self.horizons = dict(horizons)
        self.n_movements = n_movements

    @property
    def n_models(self) -> int:
        return len(self.models)

    def predict_window(self, period: int, t: int, horizon_end: int,
                       measured_grid: np.ndarray) -> np.ndarray:
        """Predicted (horizon_end - t, M) grid for intervals t+1 .. horizon_end."""
        key = (period, t)
        if key not in self.models:
            raise ValueError(f"model bank has no entry for period {period}, time {t}")
        if self.horizons[period] != horizon_end:
            raise ValueError(
                f"bank horizon {self.horizons[period]} != requested {horizon_end}"
            )
        model = self.models[key]
        z = np.asarray(measured_grid, dtype=float).T.reshape(-1)
        y = predict(model, z)
        return y.reshape(self.n_movements, horizon_end - t).T

    def prediction_id(self, period: int, t: int) -> str:
        return f"pls:{period}:{t}"

    def to_json(self, path: str | Path | None = None,
                manifest_hash: str | None = None) -> dict:
        doc = {
            "format_version": 1,
            "kind": "pls_model_bank",
            "n_movements": self.n_movements,
            "horizons": {str(i): h for i, h in self.horizons.items()},
            "models": [
                {"period": i, "time": t, "model": pls_to_json(m)}
                for (i, t), m in sorted(self.models.items())
            ],
        }
        if manifest_hash:
            doc["manifest_hash"] = manifest_hash
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, sort_keys=True)
                fh.write("\n")
        return doc

    @classmethod
    def from_json(cls, source: str | Path | dict) -> "PlsModelBank":
        if isinstance(source, dict):
            doc = source
        else:
            with open(source, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        if doc.get("kind") != "pls_model_bank" or doc.get("format_version") != 1:
            raise ValueError("not a version-1 pls_model_bank document")
        models = {
            (int(e["period"]), int(e["time"])): pls_from_json(e["model"])
            for e in doc["models"]
        }
        horizons = {int(k): int(v) for k, v in doc["horizons"].items()}
        return cls(models, horizons, int(doc["n_movements"]))


class FixedProfileBank:
    """Prediction oracle that always returns slices of one fixed day profile.

    Useful for perfect-foresight runs (pass the measured day) and for
    consistency checks (pass the nominal mean profile).
    """

    def __init__(self, profile_grid: np.ndarray):
        self.profile = np.asarray(profile_grid, dtype=float)

    def predict_window(self, period: int, t: int, horizon_end: int,
                       measured_grid: np.ndarray) -> np.ndarray:
        return self.profile[t:horizon_end]

    def prediction_id(self, period: int, t: int) -> str:
        return f"profile:{period}:{t}"


def plan_horizons(plan: SegmentationPlan) -> dict[int, int]:
    """End interval of period i+1 for each switch index i (1-based)."""
    taus = list(plan.switch_times) + [plan.n_intervals]
    return {i: taus[i] for i in range(1, plan.n_periods)}


def build_model_bank(ds: FlowDataset, plan: SegmentationPlan, cfg: ControllerConfig,
                     n_components: int, fitter=fit_pls_kernel) -> PlsModelBank:
    """Fit one predictor per (nominal switch, decision time in its window).

    For a plan with S periods and window width W this is (S-1) * W fits; each
    model predicts ``[t+1, tau_{i+1}]`` from measurements ``[1, t]`` at raw
    resolution.
    """
    validate_windows(plan, cfg.window_halfwidth)
    t_total = plan.n_intervals
    if t_total != ds.intervals_per_day:
        raise ValueError("plan and dataset disagree on intervals per day")
    horizons = plan_horizons(plan)
    models: dict[tuple[int, int], PlsModel] = {}
    for i, tau in enumerate(plan.switch_times, start=1):
        horizon = horizons[i]
        for t in segment_window(tau, cfg.window_halfwidth, t_total):
            spec = SplitSpec(cutoff_index=t, predict_from=t + 1, predict_to=horizon)
            z, y = split_at(ds, spec)
            try:
                models[(i, t)] = fitter(z, y, n_components, split=spec)
            except Exception as exc:
                raise ValueError(
                    f"model fit failed for period {i}, decision time {t}: {exc}"
                ) from exc
    return PlsModelBank(models, horizons, ds.n_movements)


@dataclass(frozen=True)
class PredictivePlan:
    """Controller output: realized switch times, parameters, and a decision log."""

    n_periods: int
    n_intervals: int
    switch_times: tuple[int, ...]
    params: np.ndarray
    mode: ControllerMode
    decision_log: tuple[dict, ...] = field(default=())
    interval_minutes: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "switch_times", tuple(int(t) for t in self.switch_times))
        params = np.array(self.params, dtype=float)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "decision_log", tuple(self.decision_log))

    def periods(self) -> list[tuple[int, int]]:
        bounds = (0,) + self.switch_times + (self.n_intervals,)
        return [(a + 1, b) for a, b in zip(bounds, bounds[1:])]


def run_controller(nominal: SegmentationPlan, day_grid: np.ndarray, bank,
                   cfg: ControllerConfig, fit_cfg: FitConfig) -> PredictivePlan:
    """Run the online switching loop over one day of measured flows.

    ``bank`` provides ``predict_window(period, t, horizon_end, measured)`` and
    ``prediction_id``.  The first period's parameters are taken from the
    nominal plan as-is.  Predictions are clamped at zero before evaluation
    when the config says so.  Deterministic: equal inputs give equal output.
    """
    day = np.asarray(day_grid, dtype=float)
    t_total = nominal.n_intervals
    m = nominal.params.shape[1]
    if day.shape != (t_total, m):
        raise ValueError(f"day grid shape {day.shape} != ({t_total}, {m})")
    validate_windows(nominal, cfg.window_halfwidth)

    taus = nominal.switch_times
    committed: list[int] = []
    params: list[np.ndarray] = [np.array(nominal.params[0])]
    log: list[dict] = []
    i = 1  # 1-based index of the next switch to commit
    for t in range(1, t_total + 1):
        if i > len(taus):
            break
        window = segment_window(taus[i - 1], cfg.window_halfwidth, t_total)
        if t not in window:
            continue
        horizon = taus[i] if i < len(taus) else t_total
        y_hat = bank.predict_window(i, t, horizon, day[:t])
        y_hat = np.asarray(y_hat, dtype=float)
        if y_hat.shape != (horizon - t, m):
            raise ValueError(
                f"bank returned shape {y_hat.shape}, expected ({horizon - t}, {m})"
            )
        if cfg.clamp_predictions:
            y_hat = np.maximum(y_hat, 0.0)
        y_abs = np.zeros((horizon, m))
        y_abs[t:horizon] = y_hat
        u = t_opt(t, window, y_abs, params[i - 1], horizon, fit_cfg, cfg.mode,
                  mu_next=np.asarray(nominal.params[i]))
        log.append({
            "time": t,
            "period": i,
            "t_opt": u,
            "prediction": bank.prediction_id(i, t),
        })
        if u == t or t == window[-1]:
            committed.append(t)
            if cfg.mode is ControllerMode.SEGMENTATION_AND_PARAMS:
                _, mu_next = segment_cost(y_abs, t + 1, horizon, fit_cfg)
            else:
                mu_next = np.array(nominal.params[i])
            params.append(mu_next)
            i += 1

    return PredictivePlan(
        n_periods=nominal.n_periods,
        n_intervals=t_total,
        switch_times=tuple(committed),
        params=np.vstack(params),
        mode=cfg.mode,
        decision_log=tuple(log),
        interval_minutes=nominal.interval_minutes,
    )


def predictive_plan_to_json(plan: PredictivePlan, path: str | Path | None = None,
                            manifest_hash: str | None = None, **extra) -> dict:
    """Serialize a controller run (decision log included)."""
    doc = {
        "format_version": 1,
        "kind": "predictive_plan",
        "mode": plan.mode.value,
        "n_periods": plan.n_periods,
        "n_intervals": plan.n_intervals,
        "switch_times": list(plan.switch_times),
        "params": plan.params.tolist(),
        "decision_log": list(plan.decision_log),
        "interval_minutes": plan.interval_minutes,
    }
    if plan.interval_minutes is not None:
        minutes = plan.interval_minutes
        doc["switch_times_hhmm"] = [
            f"{t * minutes // 60:02d}:{t * minutes % 60:02d}" for t in plan.switch_times
        ]
    if manifest_hash:
        doc["manifest_hash"] = manifest_hash
    doc.update(extra)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return doc
