import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

from errors import InputError, ParameterError

logger = logging.getLogger(__name__)


class StatKind(str, Enum):
    Z1 = "Z1"
    Z2 = "Z2"
    Z3 = "Z3"
    Z4 = "Z4"

    @classmethod
    def parse(cls, name: str) -> "StatKind":
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ParameterError(f"Unknown statistic kind {name!r}; expected one of z1, z2, z3, z4")


@dataclass(frozen=True)
class ObservationSeries:
    values: np.ndarray

    def __post_init__(self):
        try:
            arr = np.array(self.values, dtype=float)
        except (TypeError, ValueError) as e:
            raise InputError(f"Observations must be numeric: {e}")
        if arr.ndim != 1:
            raise InputError(f"Observations must be a flat sequence, got shape {arr.shape}")
        if arr.size < 2:
            raise InputError(f"At least 2 observations are required (m >= 2), got {arr.size}")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise InputError(f"Observation {bad[0] + 1} is not finite ({arr[bad[0]]})")
        arr.setflags(write=False)
        object.__setattr__(self, 'values', arr)

    @property
    def m(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class HypothesisParams:
    mu0: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if self.mu0 is not None and not math.isfinite(self.mu0):
            raise ParameterError(f"mu0 must be finite, got {self.mu0}")
        if self.delta is not None and not (math.isfinite(self.delta) and self.delta > 0):
            raise ParameterError(f"delta must satisfy delta > 0, got {self.delta}")


@dataclass(frozen=True)
class StatReport:
    kind: StatKind
    value: float
    i_star: int
    j_star: int

    def to_dict(self) -> Dict:
        return {"kind": self.kind.value, "value": self.value,
                "i_star": self.i_star, "j_star": self.j_star}


def partial_sums(x: ObservationSeries) -> np.ndarray:
    """S_0 = 0 followed by the running sums of the observations."""
    out = np.empty(x.m + 1)
    out[0] = 0.0
    np.cumsum(x.values, out=out[1:])
    return out


class BaseStatistic:
    """
    A statistic of the form max over index pairs 0 <= i < j <= m of a
    quantity that depends on the partial sums and on the lag k = j - i.
    Subclasses supply the per-lag vector and the scalar definition; both
    must use the same arithmetic so the recompute check is exact.
    """
    kind: StatKind = None

    def __init__(self, x: ObservationSeries, h: HypothesisParams):
        self.x = x
        self.h = h
        self.m = x.m
        self.S = partial_sums(x)

    def lags(self) -> range:
        return range(1, self.m + 1)

    def lag_values(self, k: int) -> np.ndarray:
        raise NotImplementedError("Statistics must implement lag_values")

    def at(self, i: int, j: int) -> float:
        raise NotImplementedError("Statistics must implement at")

    def _require_delta(self) -> float:
        if self.h.delta is None:
            raise ParameterError(f"{self.kind.value} requires delta (--delta)")
        return float(self.h.delta)

    def compute(self) -> StatReport:
        best, best_i, best_j = -math.inf, 0, 1
        for k in self.lags():
            vals = self.lag_values(k)
            p = int(np.argmax(vals))
            v = float(vals[p])
            # lexicographic (i, j): smaller i wins a tie, equal i keeps the shorter lag
            if v > best or (v == best and p < best_i):
                best, best_i, best_j = v, p, p + k
        return StatReport(self.kind, best, best_i, best_j)


class Z1Statistic(BaseStatistic):
    kind = StatKind.Z1

    def __init__(self, x: ObservationSeries, h: HypothesisParams):
        super().__init__(x, h)
        delta = self._require_delta()
        if h.mu0 is None:
            raise ParameterError("Z1 requires mu0 (--mu0)")
        idx = np.arange(self.m + 1, dtype=float)
        self.St = delta * (self.S - idx * (h.mu0 + delta / 2.0))

    def lag_values(self, k: int) -> np.ndarray:
        return self.St[k:] - self.St[:self.m + 1 - k]

    def at(self, i: int, j: int) -> float:
        return float(self.St[j] - self.St[i])


class Z2Statistic(BaseStatistic):
    kind = StatKind.Z2

    def __init__(self, x: ObservationSeries, h: HypothesisParams):
        super().__init__(x, h)
        self.delta = self._require_delta()
        idx = np.arange(self.m + 1, dtype=float)
        self.C = self.S - idx * (self.S[-1] / self.m)

    def lag_values(self, k: int) -> np.ndarray:
        return self.delta * ((self.C[k:] - self.C[:self.m + 1 - k]) - k * self.delta / 2.0)

    def at(self, i: int, j: int) -> float:
        k = j - i
        return float(self.delta * ((self.C[j] - self.C[i]) - k * self.delta / 2.0))


class Z3Statistic(BaseStatistic):
    kind = StatKind.Z3

    def __init__(self, x: ObservationSeries, h: HypothesisParams):
        super().__init__(x, h)
        self.delta = self._require_delta()

    def lags(self) -> range:
        # the full-span pair is the null model itself
        return range(1, self.m)

    def _penalty(self, k: int) -> float:
        m = self.m
        return k * self.S[-1] / m + 0.5 * self.delta * k * (1.0 - k / m)

    def lag_values(self, k: int) -> np.ndarray:
        return self.delta * ((self.S[k:] - self.S[:self.m + 1 - k]) - self._penalty(k))

    def at(self, i: int, j: int) -> float:
        return float(self.delta * ((self.S[j] - self.S[i]) - self._penalty(j - i)))


class Z4Statistic(BaseStatistic):
    kind = StatKind.Z4

    def lags(self) -> range:
        return range(1, self.m)

    def _centering(self, k: int) -> float:
        return k * self.S[-1] / self.m

    def _scale(self, k: int) -> float:
        return math.sqrt(k * (1.0 - k / self.m))

    def lag_values(self, k: int) -> np.ndarray:
        num = np.maximum((self.S[k:] - self.S[:self.m + 1 - k]) - self._centering(k), 0.0)
        return num / self._scale(k)

    def at(self, i: int, j: int) -> float:
        k = j - i
        if k == self.m:
            return 0.0
        num = max((self.S[j] - self.S[i]) - self._centering(k), 0.0)
        return float(num / self._scale(k))


class StatisticRegistry:
    _statistics = {
        StatKind.Z1: Z1Statistic,
        StatKind.Z2: Z2Statistic,
        StatKind.Z3: Z3Statistic,
        StatKind.Z4: Z4Statistic,
    }

    @classmethod
    def get_statistic(cls, kind, x: ObservationSeries, h: Optional[HypothesisParams] = None) -> BaseStatistic:
        stat_class = cls._statistics.get(StatKind.parse(kind) if not isinstance(kind, StatKind) else kind)
        if stat_class:
            return stat_class(x, h or HypothesisParams())
        raise ParameterError(f"Statistic {kind} not found")


def compute(kind, x: ObservationSeries, h: Optional[HypothesisParams] = None) -> StatReport:
    stat = StatisticRegistry.get_statistic(kind, x, h)
    report = stat.compute()
    logger.debug(f"{report.kind.value} over m={x.m}: {report.value} at ({report.i_star}, {report.j_star})")
    return report


def statistic_at(kind, x: ObservationSeries, h: Optional[HypothesisParams], i: int, j: int) -> float:
    """The defining expression of a statistic at a single pair."""
    if not 0 <= i < j <= x.m:
        raise ParameterError(f"Pair must satisfy 0 <= i < j <= m, got ({i}, {j}) with m={x.m}")
    return StatisticRegistry.get_statistic(kind, x, h).at(i, j)


def z1(x: ObservationSeries, h: HypothesisParams) -> StatReport:
    return compute(StatKind.Z1, x, h)


def z2(x: ObservationSeries, h: HypothesisParams) -> StatReport:
    return compute(StatKind.Z2, x, h)


def z3(x: ObservationSeries, h: HypothesisParams) -> StatReport:
    return compute(StatKind.Z3, x, h)


def z4(x: ObservationSeries) -> StatReport:
    return compute(StatKind.Z4, x)
