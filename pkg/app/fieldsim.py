"""
Direct simulation of the Brownian fields behind the continuous p-values.

Each replicate draws a standard Brownian path on {k/m}, forms the kind's
functional over all grid pairs, and records whether it exceeds the
threshold. Coarser grid levels are even subgrids of the same paths, so a
finer level never reports a smaller functional.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

import asymptotics
from asymptotics import PValueKind
from errors import DomainError, ParameterError
from rng import STREAM_PRIMARY, ReplicateRunner, check_seed, replicate_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FieldKind:
    tag: PValueKind
    c: Optional[float] = None
    d: Optional[float] = None

    def __post_init__(self):
        tag = PValueKind.parse(self.tag) if not isinstance(self.tag, PValueKind) else self.tag
        object.__setattr__(self, 'tag', tag)
        c, d = self.c, self.d
        if tag == PValueKind.P4:
            return
        if c is None:
            raise ParameterError(f"{tag.value} requires c")
        if tag in (PValueKind.FREE2, PValueKind.FREE3):
            return
        if d is None:
            raise ParameterError(f"{tag.value} requires d")
        if tag == PValueKind.P1 and not (c > d > 0):
            raise DomainError(f"p1 requires c > d > 0, got c={c}, d={d}")
        if tag == PValueKind.P2 and not (c > 0 and d > 0):
            raise DomainError(f"p2 requires c > 0 and d > 0, got c={c}, d={d}")
        if tag == PValueKind.P3 and not (d > 0 and c > 4.0 * d):
            raise DomainError(f"p3 requires c > 4d > 0, got c={c}, d={d}")

    @property
    def uses_bridge(self) -> bool:
        return self.tag != PValueKind.P1

    def analytic(self, threshold: float) -> asymptotics.TailApprox:
        if self.tag == PValueKind.P4:
            return asymptotics.p4_tail(threshold)
        return asymptotics.tail_for(self.tag, self.c, self.d, threshold)

    def to_dict(self) -> Dict:
        return {"kind": self.tag.value, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    n_rep: int
    grid_m: int
    threshold: float
    successes: int = 0
    flags: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict:
        return {
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_rep": self.n_rep,
            "grid_m": self.grid_m,
            "threshold": self.threshold,
            "successes": self.successes,
            "flags": list(self.flags),
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ParameterError(f"Wilson interval requires trials >= 1, got {trials}")
    if not 0 < confidence < 1:
        raise ParameterError(f"confidence must lie in (0, 1), got {confidence}")
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p_hat = successes / trials
    denominator = 1.0 + z ** 2 / trials
    center = (p_hat + z ** 2 / (2.0 * trials)) / denominator
    margin = (z / denominator) * math.sqrt(p_hat * (1.0 - p_hat) / trials + z ** 2 / (4.0 * trials ** 2))
    return max(0.0, min(center - margin, p_hat)), min(1.0, max(center + margin, p_hat))


def kuiper_half_tail(u: float, terms: int = 5) -> float:
    """Half of the Kuiper tail sum 2(4k^2u^2 - 1) exp(-2k^2u^2), k = 1..terms."""
    if not u > 0.5:
        raise ParameterError(f"Kuiper series requires u > 0.5, got {u}")
    if terms < 1:
        raise ParameterError(f"Kuiper series requires terms >= 1, got {terms}")
    k2u2 = (np.arange(1, terms + 1, dtype=float) * u) ** 2
    return 0.5 * math.fsum(2.0 * (4.0 * k2u2 - 1.0) * np.exp(-2.0 * k2u2))


# ---------------------------------------------------------------------------
# Paths and functionals
# ---------------------------------------------------------------------------

def brownian_paths(seed: int, start: int, stop: int, grid_m: int) -> np.ndarray:
    """B(k/m), k = 0..m, for replicates start..stop-1."""
    scale = math.sqrt(1.0 / grid_m)
    out = np.zeros((stop - start, grid_m + 1))
    for row, rep in enumerate(range(start, stop)):
        rng = replicate_rng(seed, rep, STREAM_PRIMARY)
        np.cumsum(rng.standard_normal(grid_m) * scale, out=out[row, 1:])
    return out


def bridge_path(paths: np.ndarray) -> np.ndarray:
    """Y(0, t) = B(t) - t B(1); both endpoints are exactly 0."""
    paths = np.atleast_2d(paths)
    grid_m = paths.shape[1] - 1
    t = np.arange(grid_m + 1) / grid_m
    return paths - t * paths[:, -1:]


def linear_sup(v: np.ndarray) -> np.ndarray:
    """max over grid pairs s < t of v(t) - v(s), per row."""
    prior_min = np.minimum.accumulate(v[:, :-1], axis=1)
    return (v[:, 1:] - prior_min).max(axis=1)


def lag_maxima(w: np.ndarray) -> np.ndarray:
    """M[:, k-1] = max_i w(i + k) - w(i) for lags k = 1..m-1."""
    grid_m = w.shape[1] - 1
    out = np.empty((w.shape[0], max(grid_m - 1, 0)))
    for k in range(1, grid_m):
        out[:, k - 1] = (w[:, k:] - w[:, :grid_m + 1 - k]).max(axis=1)
    return out


def field_excess(kind: FieldKind, paths: np.ndarray, threshold: float,
                 lag_max: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Functional minus threshold per replicate (exceedance when > 0).
    paths is B for P1 and the bridge Y(0, .) for every other kind.
    """
    if math.isinf(threshold):
        return np.full(paths.shape[0], -np.inf)
    grid_m = paths.shape[1] - 1
    t = np.arange(grid_m + 1) / grid_m
    tag, c, d = kind.tag, kind.c, kind.d

    if tag in (PValueKind.P1, PValueKind.P2):
        return linear_sup(paths - c * threshold * t) - d * threshold
    if tag == PValueKind.FREE2:
        return linear_sup(paths - c * t) - threshold

    if lag_max is None:
        lag_max = lag_maxima(paths)
    tau = np.arange(1, grid_m) / grid_m
    spread = tau * (1.0 - tau)
    if tag == PValueKind.P3:
        return (lag_max - c * threshold * spread).max(axis=1) - d * threshold
    if tag == PValueKind.FREE3:
        return (lag_max - c * spread).max(axis=1) - threshold
    return (lag_max / np.sqrt(spread)).max(axis=1) - threshold


def _levels(fine_m: int, strides: Sequence[int]) -> List[int]:
    return [fine_m // s for s in strides]


def _count_exceedances(kind: FieldKind, thresholds: Sequence[float], fine_m: int, strides: Sequence[int],
                       n_rep: int, seed: int, runner: ReplicateRunner) -> np.ndarray:
    """Exceedance counts, shape (len(strides), len(thresholds))."""
    def chunk(start: int, stop: int) -> np.ndarray:
        b = brownian_paths(seed, start, stop, fine_m)
        paths = b if not kind.uses_bridge else bridge_path(b)
        counts = np.zeros((len(strides), len(thresholds)), dtype=np.int64)
        for row, s in enumerate(strides):
            level = paths[:, ::s]
            lag_max = None
            if kind.tag in (PValueKind.P3, PValueKind.P4, PValueKind.FREE3):
                lag_max = lag_maxima(level)
            for col, threshold in enumerate(thresholds):
                counts[row, col] = int(np.count_nonzero(field_excess(kind, level, threshold, lag_max) > 0))
        return counts[np.newaxis]

    return runner.collect(chunk, n_rep).sum(axis=0)


def _validate_run(grid_m: int, n_rep: int, config: Dict) -> Tuple[str, ...]:
    if grid_m < 2:
        raise ParameterError(f"grid_m must be >= 2, got {grid_m}")
    if n_rep < 1:
        raise ParameterError(f"reps must be >= 1, got {n_rep}")
    flags = []
    recommended_grid = config.get('recommended_grid', 100)
    recommended_reps = config.get('recommended_reps', 1000)
    if grid_m < recommended_grid:
        flags.append(f"coarse grid: grid_m={grid_m} is below the recommended {recommended_grid}")
    if n_rep < recommended_reps:
        flags.append(f"few replicates: reps={n_rep} is below the recommended {recommended_reps}")
    for flag in flags:
        logger.warning(flag)
    return tuple(flags)


def _check_threshold(kind: FieldKind, threshold: float):
    if math.isnan(threshold) or threshold < 0:
        raise ParameterError(f"Threshold must be nonnegative, got {threshold}")
    if kind.tag != PValueKind.P4 and threshold == 0:
        raise DomainError(f"{kind.tag.value} requires u > 0, got u={threshold}")


def _estimate(successes: int, n_rep: int, grid_m: int, threshold: float, confidence: float,
              flags: Tuple[str, ...]) -> TailEstimate:
    low, high = wilson_interval(successes, n_rep, confidence)
    return TailEstimate(successes / n_rep, low, high, n_rep, grid_m, threshold, successes, flags)


def simulate_thresholds(kind: FieldKind, thresholds: Sequence[float], grid_m: int, n_rep: int,
                        seed: Optional[int] = None, runner: Optional[ReplicateRunner] = None,
                        config: Optional[Dict] = None) -> List[TailEstimate]:
    """simulate_sup at several thresholds on one shared set of paths."""
    config = config or {}
    flags = _validate_run(grid_m, n_rep, config)
    thresholds = [float(u) for u in thresholds]
    for u in thresholds:
        _check_threshold(kind, u)
    seed = check_seed(seed)
    logger.info(f"Simulating {kind.tag.value} at {len(thresholds)} threshold(s), grid_m={grid_m} reps={n_rep}")
    counts = _count_exceedances(kind, thresholds, grid_m, (1,), n_rep, seed, runner or ReplicateRunner())
    confidence = config.get('confidence', 0.95)
    return [_estimate(int(counts[0, col]), n_rep, grid_m, u, confidence, flags)
            for col, u in enumerate(thresholds)]


def simulate_sup(kind: FieldKind, u_or_d: float, grid_m: int, n_rep: int, seed: Optional[int] = None,
                 runner: Optional[ReplicateRunner] = None, config: Optional[Dict] = None) -> TailEstimate:
    """Exceedance frequency of the kind's functional over a uniform grid of grid_m steps."""
    est = simulate_thresholds(kind, [u_or_d], grid_m, n_rep, seed, runner, config)[0]
    logger.info(f"p_hat={est.p_hat:.6g} CI=[{est.ci_low:.6g}, {est.ci_high:.6g}]")
    return est


def convergence_study(kind: FieldKind, thresholds: Sequence[float], grid_m: int, n_rep: int,
                      seed: Optional[int] = None, runner: Optional[ReplicateRunner] = None,
                      config: Optional[Dict] = None) -> pd.DataFrame:
    """
    One row per (threshold, grid level) with the simulated tail, its
    interval, the closed-form value and their ratio. Levels are grid_m and
    2 grid_m on shared paths.
    """
    config = config or {}
    thresholds = [float(u) for u in thresholds]
    if not thresholds:
        raise ParameterError("convergence_study requires at least one threshold")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ParameterError(f"Thresholds must be strictly increasing, got {thresholds}")
    flags = _validate_run(grid_m, n_rep, config)
    for u in thresholds:
        _check_threshold(kind, u)
    seed = check_seed(seed)

    strides = (2, 1)
    levels = _levels(2 * grid_m, strides)
    counts = _count_exceedances(kind, thresholds, 2 * grid_m, strides, n_rep, seed,
                                runner or ReplicateRunner())
    confidence = config.get('confidence', 0.95)
    terms = config.get('kuiper_terms', 5)
    with_kuiper = kind.tag == PValueKind.FREE2 and kind.c == 0

    rows = []
    for col, u in enumerate(thresholds):
        analytic = kind.analytic(u).value
        for row, level in enumerate(levels):
            est = _estimate(int(counts[row, col]), n_rep, level, u, confidence, flags)
            record = {
                "threshold": u,
                "grid_m": level,
                "p_hat": est.p_hat,
                "ci_low": est.ci_low,
                "ci_high": est.ci_high,
                "analytic": analytic,
                "ratio": est.p_hat / analytic if analytic > 0 else math.nan,
            }
            if with_kuiper:
                record["kuiper"] = kuiper_half_tail(u, terms) if u > 0.5 else math.nan
            rows.append(record)
    logger.info(f"Convergence study {kind.tag.value}: {len(rows)} rows")
    return pd.DataFrame(rows)
