"""Optimal partition of a day into time-of-day periods.

A candidate period ``[t_a, t_b]`` with a constant per-movement parameter
vector ``mu`` is scored by an asymmetric quadratic fit: intervals where flow
exceeds ``mu`` (demand overflowing the plan) are penalized
``overflow_penalty`` times harder than intervals below it.  The per-period
minimizer over ``mu`` is exact: the objective is a convex piecewise quadratic
in each movement's parameter, so the stationary point is found by scanning
breakpoint intervals of the sorted window.  Day-level plans with a fixed
number of periods are globally optimal by dynamic programming over period
end times.

Time indices are 1-based and inclusive throughout; flow arrays are (T, M)
grids with row ``t-1`` holding interval ``t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class FitConfig:
    """Asymmetric fit weights: squared error above the parameter is scaled
    by ``overflow_penalty`` (>= 1); below it the weight is 1."""

    overflow_penalty: float = 2.0

    def __post_init__(self) -> None:
        if not (self.overflow_penalty >= 1.0):
            raise ValueError("overflow_penalty must be >= 1")


@dataclass(frozen=True)
class SegmentationPlan:
    """A fixed-count partition of [1, T] with per-period parameter vectors.

    ``switch_times`` hold the last interval of each period except the final
    one (so ``n_periods - 1`` strictly increasing values in [1, T-1]);
    ``params`` is an (n_periods, M) array of per-period parameter vectors.
    """

    n_periods: int
    n_intervals: int
    switch_times: tuple[int, ...]
    params: np.ndarray
    total_cost: float
    interval_minutes: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "switch_times", tuple(int(t) for t in self.switch_times))
        params = np.array(self.params, dtype=float)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        s, t = self.n_periods, self.n_intervals
        if len(self.switch_times) != s - 1:
            raise ValueError(f"expected {s - 1} switch times, got {len(self.switch_times)}")
        bounds = (0,) + self.switch_times + (t,)
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ValueError(f"switch times {self.switch_times} do not partition [1, {t}]")
        if params.shape[0] != s:
            raise ValueError(f"expected {s} parameter vectors, got {params.shape[0]}")

    def periods(self) -> list[tuple[int, int]]:
        """Inclusive (start, end) interval ranges, covering [1, T]."""
        bounds = (0,) + self.switch_times + (self.n_intervals,)
        return [(a + 1, b) for a, b in zip(bounds, bounds[1:])]

    def period_of(self, t: int) -> int:
        """0-based index of the period containing interval ``t``."""
        for i, (a, b) in enumerate(self.periods()):
            if a <= t <= b:
                return i
        raise ValueError(f"interval {t} outside [1, {self.n_intervals}]")


def _check_grid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("flow grid must be 2-D (intervals x movements)")
    return x


def fit_value(x: np.ndarray, t_a: int, t_b: int, mu: np.ndarray,
              cfg: FitConfig) -> float:
    """Asymmetric fit of constant ``mu`` to flows over ``[t_a, t_b]``.

    Empty windows (``t_b < t_a``) score 0.  ``mu`` must be entrywise >= 0.
    """
    x = _check_grid(x)
    if t_b < t_a:
        return 0.0
    if t_a < 1 or t_b > x.shape[0]:
        raise ValueError(f"window [{t_a}, {t_b}] outside the grid of {x.shape[0]} rows")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (x.shape[1],):
        raise ValueError(f"mu shape {mu.shape} != ({x.shape[1]},)")
    if np.any(mu < 0):
        raise ValueError("mu must be entrywise non-negative")
    diff = x[t_a - 1 : t_b] - mu
    w = np.where(diff > 0, cfg.overflow_penalty, 1.0)
    return float(np.sum(w * diff * diff))


def _window_cost(window: np.ndarray, penalty: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-movement minimum of the asymmetric fit over one window.

    Returns (cost_per_movement, mu_per_movement) for a (n, M) window.  With
    values sorted ascending, the candidate parameter for the breakpoint scan
    with j values at or below it is a weighted average
    ``(sum_below + penalty * sum_above) / (j + penalty * (n - j))``; the
    candidate consistent with its own interval is the global minimizer.
    """
    n, m = window.shape
    vals = np.sort(window, axis=0)
    pref = np.vstack([np.zeros((1, m)), np.cumsum(vals, axis=0)])
    total = pref[-1]
    j = np.arange(n + 1, dtype=float)[:, None]
    cand = (pref + penalty * (total - pref)) / (j + penalty * (n - j))
    neg_inf = np.full((1, m), -np.inf)
    pos_inf = np.full((1, m), np.inf)
    lo = np.vstack([neg_inf, vals])
    hi = np.vstack([vals, pos_inf])
    valid = (cand >= lo) & (cand <= hi)
    cols = np.arange(m)
    pick = valid.argmax(axis=0)
    mu = cand[pick, cols]
    missing = ~valid.any(axis=0)
    if np.any(missing):
        # Floating-point corner case: no candidate lands in its own interval.
        # Fall back to evaluating every clipped candidate for those columns.
        for col in np.nonzero(missing)[0]:
            best_cost, best_mu = np.inf, 0.0
            for b in np.clip(cand[:, col], lo[:, col], hi[:, col]):
                if not np.isfinite(b):
                    continue
                d = window[:, col] - b
                cost = float(np.sum(np.where(d > 0, penalty, 1.0) * d * d))
                if cost < best_cost:
                    best_cost, best_mu = cost, float(b)
            mu[col] = best_mu
    diff = window - mu
    w = np.where(diff > 0, penalty, 1.0)
    return np.sum(w * diff * diff, axis=0), mu


def segment_cost(x: np.ndarray, t_a: int, t_b: int,
                 cfg: FitConfig) -> tuple[float, np.ndarray]:
    """Minimum fit over constant parameters for the window ``[t_a, t_b]``.

    Returns ``(cost, mu)`` where ``mu`` is the exact per-movement minimizer.
    With ``overflow_penalty == 1`` the minimizer is the window mean.
    """
    x = _check_grid(x)
    if t_a > t_b:
        raise ValueError(f"empty window [{t_a}, {t_b}]")
    if t_a < 1 or t_b > x.shape[0]:
        raise ValueError(f"window [{t_a}, {t_b}] outside the grid of {x.shape[0]} rows")
    costs, mu = _window_cost(x[t_a - 1 : t_b], cfg.overflow_penalty)
    return float(costs.sum()), mu


def cost_table(x: np.ndarray, cfg: FitConfig) -> np.ndarray:
    """Precompute ``segment_cost`` for every window: entry [a, b] (1-based)."""
    x = _check_grid(x)
    t = x.shape[0]
    table = np.full((t + 1, t + 1), np.inf)
    for a in range(1, t + 1):
        for b in range(a, t + 1):
            costs, _ = _window_cost(x[a - 1 : b], cfg.overflow_penalty)
            table[a, b] = costs.sum()
    return table


def optimal_segmentation(x: np.ndarray, n_periods: int, cfg: FitConfig,
                         interval_minutes: int | None = None,
                         costs: np.ndarray | None = None) -> SegmentationPlan:
    """Globally optimal partition of the day into ``n_periods`` periods.

    Dynamic programming over suffixes; cost ties are broken toward the
    earliest switch times (the lexicographically smallest switch vector).
    A precomputed ``cost_table`` may be passed to amortize repeated calls
    with different period counts.
    """
    x = _check_grid(x)
    t = x.shape[0]
    if not (1 <= n_periods <= t):
        raise ValueError(f"n_periods={n_periods} outside [1, {t}]")
    if costs is None:
        costs = cost_table(x, cfg)

    # best[k, a] = optimal cost of covering [a, T] with k periods.
    best = np.full((n_periods + 1, t + 2), np.inf)
    best[1, 1 : t + 1] = costs[1 : t + 1, t]
    for k in range(2, n_periods + 1):
        for a in range(1, t - k + 2):
            ends = np.arange(a, t - k + 2)
            best[k, a] = np.min(costs[a, ends] + best[k - 1, ends + 1])

    # Front-to-back reconstruction, taking the smallest optimal end each time.
    # Recomputing the same sums guarantees an exact float match with best[k, a].
    switches: list[int] = []
    a = 1
    for k in range(n_periods, 1, -1):
        ends = np.arange(a, t - k + 2)
        totals = costs[a, ends] + best[k - 1, ends + 1]
        u = int(ends[np.nonzero(totals == best[k, a])[0][0]])
        switches.append(u)
        a = u + 1

    period_bounds = [0] + switches + [t]
    params = []
    total = 0.0
    for lo, hi in zip(period_bounds, period_bounds[1:]):
        cost, mu = segment_cost(x, lo + 1, hi, cfg)
        params.append(mu)
        total += cost
    return SegmentationPlan(
        n_periods=n_periods,
        n_intervals=t,
        switch_times=tuple(switches),
        params=np.vstack(params),
        total_cost=total,
        interval_minutes=interval_minutes,
    )


def _render_hhmm(interval: int, interval_minutes: int) -> str:
    minutes = interval * interval_minutes
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def plan_to_json(plan: SegmentationPlan, path: str | Path | None = None,
                 manifest_hash: str | None = None, **extra) -> dict:
    """Serialize a plan, rendering switch times as HH:MM when the interval
    length is known (an interval index t ends at clock time t * delta)."""
    doc = {
        "format_version": 1,
        "kind": "segmentation_plan",
        "n_periods": plan.n_periods,
        "n_intervals": plan.n_intervals,
        "switch_times": list(plan.switch_times),
        "params": plan.params.tolist(),
        "total_cost": plan.total_cost,
        "interval_minutes": plan.interval_minutes,
    }
    if plan.interval_minutes is not None:
        doc["switch_times_hhmm"] = [
            _render_hhmm(t, plan.interval_minutes) for t in plan.switch_times
        ]
    if manifest_hash:
        doc["manifest_hash"] = manifest_hash
    doc.update(extra)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return doc


def plan_from_json(source: str | Path | dict) -> SegmentationPlan:
    """Load a plan serialized by :func:`plan_to_json`."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("kind") != "segmentation_plan" or doc.get("format_version") != 1:
        raise ValueError("not a version-1 segmentation_plan document")
    return SegmentationPlan(
        n_periods=int(doc["n_periods"]),
        n_intervals=int(doc["n_intervals"]),
        switch_times=tuple(doc["switch_times"]),
        params=np.asarray(doc["params"], dtype=float),
        total_cost=float(doc["total_cost"]),
        interval_minutes=doc.get("interval_minutes"),
    )
