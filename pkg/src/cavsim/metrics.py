"""Post-run analysis: loop travel times, stops, speed statistics and reports.

Distances and speeds are full scale. The loop-completion threshold (2.5 m)
and outlier cutoff (20 m/s) are the scaled-up counterparts of values used
on a 1:25 scale testbed; times need no conversion.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ComparisonError, UsageError
from .network import position_at

LOOP_THRESHOLD = 2.5
WARMUP = 5.0
OUTLIER_CUTOFF = 20.0
STOP_SPEED = 0.1
STOP_DWELL = 0.5
HISTOGRAM_BINS = 6


def _series(trace, vehicle: int) -> dict:
    s = trace.series(vehicle)
    if len(s["t"]) == 0:
        raise KeyError(f"vehicle {vehicle} not in trace")
    return s


def loop_travel_time(trace, vehicle: int, network, threshold: float = LOOP_THRESHOLD,
                     warmup: float = WARMUP) -> float | None:
    """Seconds until ``vehicle`` comes back to its start after one lap.

    Only samples after ``warmup`` with at least a lap (less ``threshold``)
    driven count. The first run of such samples within ``threshold`` of the
    start point (straight-line distance) marks the return; its closest sample
    gives the time. Returns ``None`` (did not finish) when there is none.
    """
    if not threshold > 0:
        raise UsageError(f"threshold must be > 0 (got {threshold})")
    s = _series(trace, vehicle)
    route = network.route(s["route"][0])
    total = route.total_length
    t, p = s["t"], s["p"]
    x0, y0 = position_at(route, p[0] % total)
    # Straight-line distance never exceeds path distance, so only samples whose
    # path distance to the start point is within the threshold can qualify.
    lap_pos = np.mod(p - p[0], total)
    near = (np.minimum(lap_pos, total - lap_pos) <= threshold) & (p - p[0] >= total - threshold)
    best = None
    for k in np.flatnonzero((t > warmup) & near):
        x, y = position_at(route, p[k] % total)
        d = math.hypot(x - x0, y - y0)
        if d <= threshold:
            if best is not None and d >= best[0]:
                break
            best = (d, k)
        elif best is not None:
            break
    return None if best is None else float(t[best[1]] - t[0])


def smooth_speed(values, dt: float, window: float = 0.45, cutoff: float = OUTLIER_CUTOFF):
    """Drop samples above ``cutoff`` then apply a centered moving average.

    Dropped samples are excluded from every window. Near the edges the
    window shrinks symmetrically so each output is centered on its sample;
    an output whose window holds no kept sample is NaN.
    """
    x = np.asarray(values, dtype=float)
    if not dt > 0:
        raise UsageError(f"sample period must be > 0 (got {dt})")
    if window < dt:
        raise UsageError(f"window {window} s is shorter than the sample period {dt} s")
    n = len(x)
    if n == 0:
        return x.copy()
    keep = x <= cutoff
    half = int(round(window / dt)) // 2
    vals = np.where(keep, x, 0.0)
    csum = np.concatenate(([0.0], np.cumsum(vals)))
    ccnt = np.concatenate(([0], np.cumsum(keep)))
    idx = np.arange(n)
    h = np.minimum(np.minimum(idx, n - 1 - idx), half)
    lo, hi = idx - h, idx + h + 1
    count = ccnt[hi] - ccnt[lo]
    total = csum[hi] - csum[lo]
    out = np.full(n, np.nan)
    ok = count > 0
    out[ok] = total[ok] / count[ok]
    return out


def read_speed_csv(path):
    """Load an external ``t,v`` speed trace (header row required) as two arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"t", "v"} <= set(rows[0]):
        raise UsageError(f"{path}: expected columns 't' and 'v'")
    t = np.asarray([float(r["t"]) for r in rows])
    v = np.asarray([float(r["v"]) for r in rows])
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        raise UsageError(f"{path}: times must be strictly increasing")
    return t, v


def stop_intervals(t, v, stop_speed: float = STOP_SPEED, min_dwell: float = STOP_DWELL):
    """Maximal ``(start, end)`` intervals with ``v < stop_speed`` lasting ``>= min_dwell``."""
    t = np.asarray(t, dtype=float)
    slow = np.asarray(v, dtype=float) < stop_speed
    out = []
    k, n = 0, len(slow)
    while k < n:
        if not slow[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and slow[j + 1]:
            j += 1
        if t[j] - t[k] >= min_dwell - 1e-9:
            out.append((float(t[k]), float(t[j])))
        k = j + 1
    return out


def stop_count(trace, vehicle: int, stop_speed: float = STOP_SPEED,
               min_dwell: float = STOP_DWELL) -> int:
    s = trace.series(vehicle)
    return len(stop_intervals(s["t"], s["v"], stop_speed, min_dwell))


@dataclass(frozen=True)
class SpeedStats:
    route: str
    t: np.ndarray
    max: np.ndarray
    min: np.ndarray
    mean: np.ndarray


def speed_stats(trace, ego_only: bool = False, egos=()) -> dict[str, SpeedStats]:
    """Per-route instantaneous max, min and mean speed at every tick."""
    cols = trace.columns()
    mask = np.ones(len(cols["t"]), dtype=bool)
    if ego_only:
        mask = np.isin(cols["vehicle"], np.asarray(list(egos), dtype=int))
    out = {}
    for route in sorted(set(cols["route"][mask])):
        m = mask & (cols["route"] == route)
        t, v = cols["t"][m], cols["v"][m]
        ticks, inverse = np.unique(t, return_inverse=True)
        vmax = np.full(len(ticks), -np.inf)
        vmin = np.full(len(ticks), np.inf)
        np.maximum.at(vmax, inverse, v)
        np.minimum.at(vmin, inverse, v)
        mean = np.bincount(inverse, weights=v) / np.bincount(inverse)
        out[route] = SpeedStats(route, ticks, vmax, vmin, mean)
    return out


@dataclass(frozen=True)
class TravelTimeRow:
    vehicle: int
    loop: str
    baseline: float | None
    optimal: float | None

    @property
    def saved(self) -> float | None:
        if self.baseline is None or self.optimal is None:
            return None
        return self.baseline - self.optimal

    @property
    def percent(self) -> float | None:
        if self.saved is None or self.baseline == 0:
            return None
        return 100.0 * self.saved / self.baseline


@dataclass(frozen=True)
class TravelTimeReport:
    rows: tuple[TravelTimeRow, ...]
    duration: float

    def capped(self, value):
        """Did-not-finish counts as the full duration in aggregates."""
        return self.duration if value is None else value

    def mean(self, mode: str, loop: str | None = None) -> float:
        vals = [self.capped(getattr(r, mode)) for r in self.rows if loop is None or r.loop == loop]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_saving(self) -> float:
        return self.mean("baseline") - self.mean("optimal")

    def loops(self) -> list[str]:
        return sorted({r.loop for r in self.rows})


def travel_time_report(baseline, optimal, config, threshold=LOOP_THRESHOLD,
                       warmup=WARMUP) -> TravelTimeReport:
    egos = config.ego_ids
    for name, trace in (("baseline", baseline), ("optimal", optimal)):
        present = set(trace.vehicle_ids())
        missing = [v for v in egos if v not in present]
        if missing:
            raise ComparisonError(f"{name} trace lacks ego vehicle(s) {missing}")
    if set(baseline.vehicle_ids()) != set(optimal.vehicle_ids()):
        raise ComparisonError("baseline and optimal traces hold different fleets")
    rows = []
    for vid in egos:
        loop = baseline.route_of(vid)
        if optimal.route_of(vid) != loop:
            raise ComparisonError(f"vehicle {vid} runs on different routes across modes")
        rows.append(TravelTimeRow(
            vid, loop,
            loop_travel_time(baseline, vid, config.network, threshold, warmup),
            loop_travel_time(optimal, vid, config.network, threshold, warmup)))
    return TravelTimeReport(tuple(rows), config.duration)


def arrival_histogram(times, bins: int = HISTOGRAM_BINS):
    """Equal-width histogram over the finite arrival times: (counts, edges)."""
    finite = np.asarray([x for x in times if x is not None and math.isfinite(x)], dtype=float)
    if finite.size == 0:
        return np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    counts, edges = np.histogram(finite, bins=bins)
    return counts, edges


def _fmt_time(value, duration):
    return f"> {duration:g}" if value is None else f"{value:.2f}"


def _fmt(value, spec=".2f"):
    return "" if value is None else format(value, spec)


def build_reports(baseline, optimal, config, out_dir=None, ego_only: bool = False) -> dict:
    """Join both runs into the travel-time table, speed stats and histograms.

    When ``out_dir`` is given, writes ``travel_times.csv``, ``summary.json``,
    ``histogram.csv`` and ``speed_stats.csv`` there.
    """
    report = travel_time_report(baseline, optimal, config)
    hist = {mode: arrival_histogram([getattr(r, mode) for r in report.rows])
            for mode in ("baseline", "optimal")}
    stats = {mode: speed_stats(trace, ego_only, config.ego_ids)
             for mode, trace in (("baseline", baseline), ("optimal", optimal))}
    summary = {
        "scenario": config.name,
        "seed": config.seed,
        "duration": config.duration,
        "vehicles": len(report.rows),
        "mean_baseline": report.mean("baseline"),
        "mean_optimal": report.mean("optimal"),
        "mean_saving": report.mean_saving,
        "mean_percent": (100.0 * report.mean_saving / report.mean("baseline")
                         if report.mean("baseline") else None),
        "did_not_finish": {mode: sum(getattr(r, mode) is None for r in report.rows)
                           for mode in ("baseline", "optimal")},
        "loops": {loop: {"baseline": report.mean("baseline", loop),
                         "optimal": report.mean("optimal", loop)} for loop in report.loops()},
    }
    result = {"report": report, "histogram": hist, "speed_stats": stats, "summary": summary}
    if out_dir is not None:
        write_reports(result, out_dir)
    return result


def write_reports(result: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = result["report"]
    paths = {k: out / f for k, f in (("travel_times", "travel_times.csv"),
                                      ("summary", "summary.json"),
                                      ("histogram", "histogram.csv"),
                                      ("speed_stats", "speed_stats.csv"))}
    with open(paths["travel_times"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vehicle", "baseline", "optimal", "loop", "saved", "percent_decrease"])
        for r in report.rows:
            w.writerow([r.vehicle, _fmt_time(r.baseline, report.duration),
                        _fmt_time(r.optimal, report.duration), r.loop, _fmt(r.saved),
                        _fmt(r.percent)])
    with open(paths["summary"], "w") as fh:
        json.dump(result["summary"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["histogram"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "bin", "lower", "upper", "count"])
        for mode, (counts, edges) in result["histogram"].items():
            for k, c in enumerate(counts):
                w.writerow([mode, k, f"{edges[k]:.9g}", f"{edges[k + 1]:.9g}", int(c)])
    with open(paths["speed_stats"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "route", "t", "max", "min", "mean"])
        for mode, by_route in result["speed_stats"].items():
            for route, st in by_route.items():
                for k in range(len(st.t)):
                    w.writerow([mode, route, f"{st.t[k]:.9g}", f"{st.max[k]:.9g}",
                                f"{st.min[k]:.9g}", f"{st.mean[k]:.9g}"])
    return {k: str(v) for k, v in paths.items()}
