"""
Leading-order tail approximations for the change-point fields.

Everything here is a closed form except the Pickands-type constants, which
come from a ConstantProvider (a fixed table or Monte Carlo estimates).
Values are asymptotic equivalents, not probabilities: a value above 1 is
reported as pre-asymptotic rather than clamped.
"""
import logging
import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

from scipy.special import gamma, log_ndtr, ndtr

import pickands
from core_stats import StatKind
from errors import DomainError, ParameterError

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
LOG_FLOAT_MAX = math.log(sys.float_info.max)


def norm_survival(x: float) -> float:
    """Standard normal survival function Psi(x) = P(N(0,1) > x)."""
    return float(ndtr(-x))


def log_norm_survival(x: float) -> float:
    """log Psi(x), finite far into the upper tail."""
    return float(log_ndtr(-x))


class Trend(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


def _same(x: float, y: float) -> bool:
    return math.isclose(x, y, rel_tol=0.0, abs_tol=1e-12)


@dataclass(frozen=True)
class AsymptoticParams:
    s1: float
    s2: float
    a: float
    b: float
    alpha: float
    beta: float
    c: float = 0.0
    trend: Trend = Trend.LINEAR

    def __post_init__(self):
        if self.s2 < self.s1:
            raise ParameterError(f"Interval requires s2 >= s1, got s1={self.s1}, s2={self.s2}")
        if self.a <= 0:
            raise ParameterError(f"Correlation scale requires a > 0, got {self.a}")
        if self.b <= 0:
            raise ParameterError(f"Variance scale requires b > 0, got {self.b}")
        for name in ('alpha', 'beta'):
            v = getattr(self, name)
            if not 0 < v <= 2:
                raise ParameterError(f"{name} must lie in (0, 2], got {v}")
        object.__setattr__(self, 'trend', Trend(self.trend))

    def f_params(self) -> Tuple[float, float]:
        """(b/a, c/sqrt(a)) of the lag penalty f; the linear part only at alpha = 2."""
        linear = _same(self.alpha, 2.0) and self.trend == Trend.LINEAR
        return self.b / self.a, (self.c / math.sqrt(self.a) if linear else 0.0)


@dataclass(frozen=True)
class TailApprox:
    value: float
    log_value: float
    constant: float
    exponent_power: float
    constant_source: str = "closed form"

    @property
    def pre_asymptotic(self) -> bool:
        return self.value > 1.0

    @classmethod
    def from_log(cls, log_value: float, constant: float, exponent_power: float,
                 constant_source: str = "closed form") -> "TailApprox":
        value = math.inf if log_value > LOG_FLOAT_MAX else math.exp(log_value)
        return cls(value, log_value, constant, exponent_power, constant_source)

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "log_value": self.log_value,
            "constant": self.constant,
            "exponent_power": self.exponent_power,
            "constant_source": self.constant_source,
            "pre_asymptotic": self.pre_asymptotic,
        }


@dataclass(frozen=True)
class ContinuousProblemParams:
    c: float
    d: float
    u: float

    def to_dict(self) -> Dict:
        return {"c": self.c, "d": self.d, "u": self.u}


# ---------------------------------------------------------------------------
# Constant providers
# ---------------------------------------------------------------------------

class ConstantProvider:
    """Supplies H_alpha and P_alpha^f together with a provenance string."""

    def h(self, alpha: float) -> Tuple[float, str]:
        raise NotImplementedError("Constant providers must implement h")

    def p(self, alpha: float, b_over_a: float, c_over_sqrt_a: float) -> Tuple[float, str]:
        raise NotImplementedError("Constant providers must implement p")


class TableConstantProvider(ConstantProvider):
    DEFAULT_TABLE = {"1": 1.0, "2": 1.0 / SQRT_PI}

    def __init__(self, table: Optional[Dict[str, float]] = None):
        self.table = {float(k): float(v) for k, v in (table or self.DEFAULT_TABLE).items()}

    def h(self, alpha: float) -> Tuple[float, str]:
        for key, value in self.table.items():
            if _same(key, alpha):
                return value, f"table H_{key:g}"
        raise ParameterError(
            f"No tabulated Pickands constant for alpha={alpha}; "
            f"tabulated alphas are {sorted(self.table)}")

    def p(self, alpha: float, b_over_a: float, c_over_sqrt_a: float) -> Tuple[float, str]:
        raise ParameterError(
            f"No tabulated P constant for alpha={alpha}, b/a={b_over_a}, "
            f"c/sqrt(a)={c_over_sqrt_a}; use Monte Carlo constants")


class MonteCarloConstantProvider(ConstantProvider):
    """
    Constants from the pickands estimators (increment form), memoised per
    argument tuple so repeated lookups are read-only.
    """

    def __init__(self, config: Dict, runner=None, seed: Optional[int] = None):
        self.config = config
        self.runner = runner
        self.reps = config.get('asymptotics', {}).get('mc_reps', 10000)
        self.seed = seed if seed is not None else config.get('asymptotics', {}).get('mc_seed', 20240101)
        self._cache = {}

    def _step(self, alpha: float) -> float:
        section = self.config.get('pickands', {})
        return section.get('step', 0.01) if alpha >= 1 else section.get('rough_step', 0.002)

    def h(self, alpha: float) -> Tuple[float, str]:
        key = ('H', alpha)
        if key not in self._cache:
            lam = self.config.get('pickands', {}).get('lambda_h', 8.0)
            est = pickands.estimate_H(alpha, lam, self._step(alpha), self.reps, self.seed,
                                      kind=pickands.EstimateKind.H_RATE, runner=self.runner,
                                      config=self.config.get('pickands'))
            self._cache[key] = (est.value, f"monte carlo H_rate (lambda={lam}, step={est.grid.step}, "
                                           f"reps={est.n_replicates}, seed={self.seed}, se={est.std_error:.3g})")
        return self._cache[key]

    def p(self, alpha: float, b_over_a: float, c_over_sqrt_a: float) -> Tuple[float, str]:
        key = ('P', alpha, b_over_a, c_over_sqrt_a)
        if key not in self._cache:
            lam = self.config.get('pickands', {}).get('lambda_p', 4.0)
            est = pickands.estimate_P_rate(alpha, b_over_a, c_over_sqrt_a, lam, self._step(alpha),
                                           self.reps, self.seed, runner=self.runner,
                                           config=self.config.get('pickands'))
            self._cache[key] = (est.value, f"monte carlo P_rate (lambda={lam}, step={est.grid.step}, "
                                           f"reps={est.n_replicates}, seed={self.seed}, se={est.std_error:.3g})")
        return self._cache[key]


# ---------------------------------------------------------------------------
# Theorem-level tail
# ---------------------------------------------------------------------------

def theorem1_exponent(alpha: float, beta: float) -> float:
    return 2.0 / alpha + max(2.0 / alpha - 2.0 / beta, 0.0)


def theorem1_tail(p: AsymptoticParams, u: float, constants: ConstantProvider) -> TailApprox:
    """
    Constant * u**exponent * Psi(u) for the sup of a locally stationary field
    whose variance peaks along a line, in the three regimes alpha <, =, > beta.
    """
    if u <= 0:
        raise ParameterError(f"Threshold requires u > 0, got {u}")
    exponent = theorem1_exponent(p.alpha, p.beta)
    length = p.s2 - p.s1

    if length == 0:
        return TailApprox(0.0, -math.inf, 0.0, exponent, "empty interval")

    if _same(p.alpha, p.beta):
        b_over_a, c_over_sqrt_a = p.f_params()
        p_const, source = constants.p(p.alpha, b_over_a, c_over_sqrt_a)
        constant = length * p.a ** (1.0 / p.alpha) * p_const
    elif p.alpha < p.beta:
        h_const, source = constants.h(p.alpha)
        drift = p.c ** 2 / (4.0 * p.b) if (_same(p.beta, 2.0) and p.trend == Trend.LINEAR) else 0.0
        constant = (2.0 * length * p.a ** (2.0 / p.alpha) * h_const ** 2
                    * p.b ** (-1.0 / p.beta) * float(gamma(1.0 / p.beta + 1.0)) * math.exp(drift))
    else:
        h_const, source = constants.h(p.alpha)
        constant = 2.0 ** (1.0 / p.alpha) * length * p.a ** (1.0 / p.alpha) * h_const

    if not (constant > 0 and math.isfinite(constant)):
        raise ParameterError(f"Tail constant must be positive and finite, got {constant} from {source}")

    log_value = math.log(constant) + exponent * math.log(u) + log_norm_survival(u)
    return TailApprox.from_log(log_value, constant, exponent, source)


# ---------------------------------------------------------------------------
# Continuous-problem p-values
# ---------------------------------------------------------------------------

def _check_u(u: float):
    if not u > 0:
        raise DomainError(f"requires u > 0, got u={u}")


def p1_fixed(q: ContinuousProblemParams) -> TailApprox:
    """2c(c-d) u^2 exp(-2cd u^2), valid for c > d > 0."""
    if not (q.c > q.d > 0):
        raise DomainError(f"p1 requires c > d > 0, got c={q.c}, d={q.d}")
    _check_u(q.u)
    constant = 2.0 * q.c * (q.c - q.d)
    log_value = math.log(constant) + 2.0 * math.log(q.u) - 2.0 * q.c * q.d * q.u ** 2
    return TailApprox.from_log(log_value, constant, 2.0)


def p2_fixed(q: ContinuousProblemParams) -> TailApprox:
    if not (q.c > 0 and q.d > 0):
        raise DomainError(f"p2 requires c > 0 and d > 0, got c={q.c}, d={q.d}")
    _check_u(q.u)
    constant = 32.0 * q.d ** 2 * (q.d + q.c) ** 3 / (2.0 * q.d + q.c) ** 3
    log_value = math.log(constant) + 2.0 * math.log(q.u) - 2.0 * q.d * (q.c + q.d) * q.u ** 2
    return TailApprox.from_log(log_value, constant, 2.0)


def p3_fixed(q: ContinuousProblemParams) -> TailApprox:
    if not (q.d > 0 and q.c > 4.0 * q.d):
        raise DomainError(f"p3 requires c > 4d > 0, got c={q.c}, d={q.d}")
    _check_u(q.u)
    constant = 32.0 * q.c * q.d / math.sqrt(q.c * (q.c - 4.0 * q.d))
    log_value = math.log(constant) + 2.0 * math.log(q.u) - 2.0 * q.c * q.d * q.u ** 2
    return TailApprox.from_log(log_value, constant, 2.0)


def p4_tail(d: float) -> TailApprox:
    """2 d^4 Psi(d) for the studentized bridge-increment field."""
    if not d > 0:
        raise DomainError(f"p4 requires d > 0, got d={d}")
    log_value = math.log(2.0) + 4.0 * math.log(d) + log_norm_survival(d)
    return TailApprox.from_log(log_value, 2.0, 4.0)


def p2_free_delta(c: float, u: float) -> TailApprox:
    _check_u(u)
    log_value = math.log(4.0) + 2.0 * math.log(u) - (2.0 * u ** 2 + 2.0 * c * u)
    return TailApprox.from_log(log_value, 4.0, 2.0)


def p3_free_delta(c: float, u: float) -> TailApprox:
    _check_u(u)
    log_value = math.log(4.0) + 2.0 * math.log(u) - 0.5 * (2.0 * u + c / 2.0) ** 2
    return TailApprox.from_log(log_value, 4.0, 2.0)


class PValueKind(str, Enum):
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"
    P4 = "p4"
    FREE2 = "free2"
    FREE3 = "free3"

    @classmethod
    def parse(cls, name: str) -> "PValueKind":
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ParameterError(
                f"Unknown p-value kind {name!r}; expected one of {', '.join(k.value for k in cls)}")


def _need(name: str, value: Optional[float], kind: PValueKind) -> float:
    if value is None:
        raise ParameterError(f"{kind.value} requires --{name}")
    return float(value)


def tail_for(kind, c: Optional[float] = None, d: Optional[float] = None,
             u: Optional[float] = None) -> TailApprox:
    """Dispatch to the closed form for a continuous problem kind."""
    kind = PValueKind.parse(kind) if not isinstance(kind, PValueKind) else kind
    if kind == PValueKind.P4:
        return p4_tail(_need('d', d, kind))
    if kind in (PValueKind.FREE2, PValueKind.FREE3):
        fn = p2_free_delta if kind == PValueKind.FREE2 else p3_free_delta
        return fn(_need('c', c, kind), _need('u', u, kind))
    q = ContinuousProblemParams(_need('c', c, kind), _need('d', d, kind), _need('u', u, kind))
    return {PValueKind.P1: p1_fixed, PValueKind.P2: p2_fixed, PValueKind.P3: p3_fixed}[kind](q)


def critical_lags(kind, c: Optional[float] = None, d: Optional[float] = None) -> Tuple[float, ...]:
    """Segment lengths t - s where the standardized field's variance peaks."""
    kind = PValueKind.parse(kind) if not isinstance(kind, PValueKind) else kind
    if kind == PValueKind.P4:
        return ()
    if kind in (PValueKind.FREE2, PValueKind.FREE3):
        return (0.5,)
    c, d = _need('c', c, kind), _need('d', d, kind)
    if kind == PValueKind.P1:
        if not (c > d > 0):
            raise DomainError(f"p1 requires c > d > 0, got c={c}, d={d}")
        return (d / c,)
    if kind == PValueKind.P2:
        if not (c > 0 and d > 0):
            raise DomainError(f"p2 requires c > 0 and d > 0, got c={c}, d={d}")
        return (d / (2.0 * d + c),)
    if not (d > 0 and c > 4.0 * d):
        raise DomainError(f"p3 requires c > 4d > 0, got c={c}, d={d}")
    root = math.sqrt(1.0 - 4.0 * d / c)
    return ((1.0 - root) / 2.0, (1.0 + root) / 2.0)


def discrete_to_continuous(m: int, delta: float, level: float, kind) -> ContinuousProblemParams:
    """
    Rescale P{Z > level} for m observations to the continuous problem with
    n = m: u = sqrt(m), c = delta/2, d = level/(delta*m).
    """
    kind = StatKind.parse(kind) if not isinstance(kind, StatKind) else kind
    if kind == StatKind.Z4:
        raise ParameterError("Z4 has no (c, d, u) rescaling; use p4_tail on the statistic value")
    if m < 2:
        raise ParameterError(f"Rescaling requires m >= 2, got {m}")
    if not delta > 0:
        raise ParameterError(f"Rescaling requires delta > 0, got {delta}")
    return ContinuousProblemParams(c=delta / 2.0, d=level / (delta * m), u=math.sqrt(m))


STAT_TO_PVALUE = {"Z1": PValueKind.P1, "Z2": PValueKind.P2, "Z3": PValueKind.P3}
