"""
Monte Carlo estimation of the Pickands constant H_alpha and the two-field
constants P_alpha^f and Q_alpha.

Paths are standard fBm in the variance convention Var B(t) = |t|^alpha,
sampled exactly on a uniform grid by circulant embedding of the stationary
increments. Every estimator can evaluate one simulation on several nested
grids (strides of the finest grid) so refinement comparisons use common
random numbers.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, toeplitz
from scipy.special import ndtr

from errors import ParameterError, ResourceError
from rng import STREAM_PRIMARY, STREAM_SECONDARY, ReplicateRunner, check_seed, replicate_rng

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
GRID_EPS = 1e-9


class EstimateKind(str, Enum):
    H_OF_LAMBDA = "H_of_lambda"
    H_RATE = "H_rate"
    P_OF_LAMBDA = "P_of_lambda"
    P_RATE = "P_rate"
    Q_OF_LAMBDA = "Q_of_lambda"


def _grid_count(length: float, step: float) -> int:
    return int(math.floor(length / step + GRID_EPS))


@dataclass(frozen=True)
class FbmGridSpec:
    alpha: float
    horizon: float
    step: float
    n_points: int = field(init=False)

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ParameterError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ParameterError(f"Grid step must be positive, got {self.step}")
        if not (math.isfinite(self.horizon) and self.horizon >= 0):
            raise ParameterError(f"Horizon must be nonnegative, got {self.horizon}")
        object.__setattr__(self, 'n_points', _grid_count(self.horizon, self.step) + 1)

    @property
    def n_steps(self) -> int:
        return self.n_points - 1

    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.step

    def to_dict(self) -> Dict:
        return {"alpha": self.alpha, "horizon": self.horizon, "step": self.step, "n_points": self.n_points}


@dataclass(frozen=True)
class ConstantEstimate:
    kind: EstimateKind
    value: float
    std_error: float
    n_replicates: int
    grid: FbmGridSpec
    lambda1: Optional[float] = None
    f_params: Optional[Dict[str, float]] = None
    method: str = "monte carlo"

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "value": self.value,
            "std_error": self.std_error,
            "n_replicates": self.n_replicates,
            "grid": self.grid.to_dict(),
            "lambda1": self.lambda1,
            "f_params": self.f_params,
            "method": self.method,
        }


def fgn_autocovariance(alpha: float, step: float, n: int) -> np.ndarray:
    """gamma(k) = step^alpha (|k+1|^a - 2|k|^a + |k-1|^a) / 2 for k = 0..n."""
    k = np.arange(n + 1, dtype=float)
    return 0.5 * step ** alpha * (np.abs(k + 1) ** alpha - 2.0 * k ** alpha + np.abs(k - 1) ** alpha)


class FbmSampler:
    """
    Draws fBm paths B(0), B(step), ..., B(n_steps * step).

    Methods: 'trivial' (single point), 'linear' (alpha = 2, path = t Z),
    'circulant' (spectral synthesis of the increments) and 'dense'
    (factorization of the increment covariance) when the circulant
    embedding has materially negative eigenvalues.
    """

    def __init__(self, alpha: float, step: float, n_steps: int, config: Optional[Dict] = None):
        config = config or {}
        self.alpha = alpha
        self.step = step
        self.n_steps = n_steps
        self.n_points = n_steps + 1
        self.times = np.arange(self.n_points) * step

        if n_steps == 0:
            self.method = "trivial"
        elif math.isclose(alpha, 2.0, rel_tol=0.0, abs_tol=1e-12):
            self.method = "linear"
        else:
            self._setup_increments(config)
        logger.debug(f"fBm sampler alpha={alpha} step={step} n_steps={n_steps}: {self.method}")

    def _setup_increments(self, config: Dict):
        n = self.n_steps
        gam = fgn_autocovariance(self.alpha, self.step, n)
        if n == 1:
            self.method = "circulant"
            self._sqrt_eig = None
            self._scale = math.sqrt(gam[0])
            return

        row = np.concatenate([gam, gam[n - 1:0:-1]])
        eig = np.fft.fft(row).real
        tol = config.get('eigen_tolerance', 1e-10) * eig.max()
        if eig.min() >= -tol:
            self.method = "circulant"
            self._embed = row.size
            self._sqrt_eig = np.sqrt(np.clip(eig, 0.0, None) / row.size)
            return

        max_dense = config.get('max_dense_points', 4000)
        if n > max_dense:
            raise ResourceError(
                f"Circulant embedding is not nonnegative-definite (min eigenvalue {eig.min():.3g}) "
                f"and {n} increments exceed max_dense_points={max_dense}")
        logger.warning(f"Circulant embedding failed (min eigenvalue {eig.min():.3g}); "
                       f"using dense factorization for {n} increments")
        self.method = "dense"
        cov = toeplitz(gam[:n])
        try:
            self._factor = cholesky(cov, lower=True)
        except LinAlgError:
            w, v = eigh(cov)
            self._factor = v * np.sqrt(np.clip(w, 0.0, None))

    def _increments(self, rng: np.random.Generator) -> np.ndarray:
        if self.method == "dense":
            return self._factor @ rng.standard_normal(self.n_steps)
        if self._sqrt_eig is None:
            return self._scale * rng.standard_normal(1)
        z = rng.standard_normal((2, self._embed))
        w = self._sqrt_eig * (z[0] + 1j * z[1])
        return np.fft.fft(w).real[:self.n_steps]

    def path(self, rng: np.random.Generator) -> np.ndarray:
        if self.method == "trivial":
            return np.zeros(1)
        if self.method == "linear":
            return self.times * rng.standard_normal()
        out = np.empty(self.n_points)
        out[0] = 0.0
        np.cumsum(self._increments(rng), out=out[1:])
        return out

    def paths(self, seed: int, start: int, stop: int, stream: int = STREAM_PRIMARY) -> np.ndarray:
        """Paths for replicates start..stop-1, one row each."""
        out = np.empty((stop - start, self.n_points))
        for row, rep in enumerate(range(start, stop)):
            out[row] = self.path(replicate_rng(seed, rep, stream))
        return out


def sample_fbm(spec: FbmGridSpec, seed: int, replicate: int = 0, stream: int = STREAM_PRIMARY,
               config: Optional[Dict] = None) -> np.ndarray:
    """One fBm path on the grid of spec; B(0) = 0."""
    sampler = FbmSampler(spec.alpha, spec.step, spec.n_steps, config)
    return sampler.path(replicate_rng(check_seed(seed), replicate, stream))


def h2_exact(lam: float, step: float) -> float:
    """
    E sup over the grid {0, step, .., N step} of exp(sqrt(2) t Z - t^2),
    the alpha = 2 functional, in closed form.
    """
    n = _grid_count(lam, step)
    if n == 0:
        return 1.0
    edge = float(ndtr(step / SQRT2))
    return 2.0 * edge + (n - 1) * (2.0 * edge - 1.0)


# ---------------------------------------------------------------------------
# Shared estimator plumbing
# ---------------------------------------------------------------------------

def _check_common(alpha: float, lam: float, step: float, n_rep: int, config: Dict):
    if not 0 < alpha <= 2:
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha}")
    if not (math.isfinite(step) and step > 0):
        raise ParameterError(f"Grid step must be positive, got {step}")
    if not (math.isfinite(lam) and lam >= 0):
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    min_reps = config.get('min_reps', 100)
    if n_rep < min_reps:
        raise ParameterError(f"Constant estimation requires reps >= {min_reps}, got {n_rep}")


def _summarize(samples: np.ndarray) -> Tuple[float, float]:
    n = samples.size
    mean = math.fsum(samples) / n
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(samples, ddof=1)) / math.sqrt(n)


def _runner(runner: Optional[ReplicateRunner]) -> ReplicateRunner:
    return runner or ReplicateRunner()


# ---------------------------------------------------------------------------
# H_alpha
# ---------------------------------------------------------------------------

def _h_rate_split(n_steps: int) -> int:
    if n_steps < 2:
        raise ParameterError(f"The rate form needs at least 2 grid steps, got {n_steps}")
    return n_steps // 2


def _estimate_H_strides(alpha: float, lam: float, fine_step: float, strides: Sequence[int],
                        n_rep: int, seed: int, kind: EstimateKind,
                        runner: Optional[ReplicateRunner], config: Dict) -> List[ConstantEstimate]:
    n_fine = _grid_count(lam, fine_step)
    specs = [FbmGridSpec(alpha, lam, fine_step * s) for s in strides]

    if math.isclose(alpha, 2.0, rel_tol=0.0, abs_tol=1e-12):
        results = []
        for spec in specs:
            if kind == EstimateKind.H_RATE:
                k = _h_rate_split(spec.n_steps)
                value = (h2_exact(spec.n_steps * spec.step, spec.step)
                         - h2_exact(k * spec.step, spec.step)) / ((spec.n_steps - k) * spec.step)
            else:
                value = h2_exact(lam, spec.step)
            results.append(ConstantEstimate(kind, value, 0.0, 0, spec, method="exact"))
        return results

    splits = [_h_rate_split(spec.n_steps) for spec in specs] if kind == EstimateKind.H_RATE else None
    sampler = FbmSampler(alpha, fine_step, n_fine, config)
    drift = sampler.times ** alpha

    def chunk(start: int, stop: int) -> np.ndarray:
        paths = sampler.paths(seed, start, stop, STREAM_PRIMARY)
        field_vals = SQRT2 * paths - drift
        out = np.empty((stop - start, len(strides)))
        for col, (s, spec) in enumerate(zip(strides, specs)):
            sub = field_vals[:, :spec.n_steps * s + 1:s]
            sup_full = np.exp(sub.max(axis=1))
            if splits is None:
                out[:, col] = sup_full
            else:
                k = splits[col]
                sup_half = np.exp(sub[:, :k + 1].max(axis=1))
                out[:, col] = (sup_full - sup_half) / ((spec.n_steps - k) * spec.step)
        return out

    samples = _runner(runner).collect(chunk, n_rep)
    results = []
    for col, spec in enumerate(specs):
        value, se = _summarize(samples[:, col])
        results.append(ConstantEstimate(kind, value, se, n_rep, spec, method=f"monte carlo ({sampler.method})"))
    return results


def estimate_H(alpha: float, lam: float, grid_step: float, n_rep: int, seed: Optional[int] = None,
               kind: EstimateKind = EstimateKind.H_RATE, runner: Optional[ReplicateRunner] = None,
               config: Optional[Dict] = None) -> ConstantEstimate:
    """
    H_of_lambda: E sup_{t in grid, t <= lambda} exp(sqrt(2) B(t) - t^alpha).
    H_rate: increment (H(lambda) - H(lambda/2)) / (lambda/2) at grid-aligned
    horizons, with both sups taken on the same paths.
    """
    config = config or {}
    kind = EstimateKind(kind)
    _check_common(alpha, lam, grid_step, n_rep, config)
    seed = check_seed(seed)
    logger.info(f"Estimating {kind.value} alpha={alpha} lambda={lam} step={grid_step} reps={n_rep}")
    est = _estimate_H_strides(alpha, lam, grid_step, (1,), n_rep, seed, kind, runner, config)[0]
    logger.info(f"{kind.value} = {est.value:.6g} (se {est.std_error:.3g})")
    return est


def estimate_H_two_grids(alpha: float, lam: float, grid_step: float, n_rep: int, seed: Optional[int] = None,
                         kind: EstimateKind = EstimateKind.H_RATE, runner: Optional[ReplicateRunner] = None,
                         config: Optional[Dict] = None) -> Tuple[ConstantEstimate, ConstantEstimate]:
    """Estimates at grid_step and grid_step/2 from the same fine-grid paths."""
    config = config or {}
    kind = EstimateKind(kind)
    _check_common(alpha, lam, grid_step, n_rep, config)
    seed = check_seed(seed)
    coarse, fine = _estimate_H_strides(alpha, lam, grid_step / 2.0, (2, 1), n_rep, seed, kind, runner, config)
    logger.info(f"{kind.value}: step {coarse.grid.step} -> {coarse.value:.6g}, "
                f"step {fine.grid.step} -> {fine.value:.6g}")
    return coarse, fine


def estimate_H_horizons(alpha: float, lambdas: Sequence[float], grid_step: float, n_rep: int,
                        seed: Optional[int] = None, runner: Optional[ReplicateRunner] = None,
                        config: Optional[Dict] = None) -> List[ConstantEstimate]:
    """H_of_lambda at several horizons, each a prefix of the same paths."""
    config = config or {}
    lambdas = [float(lam) for lam in lambdas]
    if not lambdas:
        raise ParameterError("At least one horizon is required")
    for lam in lambdas:
        _check_common(alpha, lam, grid_step, n_rep, config)
    seed = check_seed(seed)
    specs = [FbmGridSpec(alpha, lam, grid_step) for lam in lambdas]
    sampler = FbmSampler(alpha, grid_step, max(spec.n_steps for spec in specs), config)
    drift = sampler.times ** alpha

    def chunk(start: int, stop: int) -> np.ndarray:
        field_vals = SQRT2 * sampler.paths(seed, start, stop, STREAM_PRIMARY) - drift
        return np.stack([np.exp(field_vals[:, :spec.n_points].max(axis=1)) for spec in specs], axis=1)

    samples = _runner(runner).collect(chunk, n_rep)
    results = []
    for col, spec in enumerate(specs):
        value, se = _summarize(samples[:, col])
        results.append(ConstantEstimate(EstimateKind.H_OF_LAMBDA, value, se, n_rep, spec,
                                        method=f"monte carlo ({sampler.method})"))
    return results


# ---------------------------------------------------------------------------
# P_alpha^f and Q_alpha
# ---------------------------------------------------------------------------

def lag_penalty(alpha: float, b_over_a: float, c_over_sqrt_a: float, lag: float) -> float:
    """f(x) = (b/a)|x|^alpha + (c/sqrt(a)) x, the linear part only at alpha = 2."""
    value = b_over_a * abs(lag) ** alpha
    if math.isclose(alpha, 2.0, rel_tol=0.0, abs_tol=1e-12):
        value += c_over_sqrt_a * lag
    return value


class TwoFieldSampler:
    """
    B1 on [0, lambda] (primary stream) and a two-sided B2 on
    [-lambda1, lambda + lambda1] (secondary stream), both on one grid.
    B2 row index j + n_lag holds B2(j * step).
    """

    def __init__(self, alpha: float, step: float, n_s: int, n_lag: int, config: Dict):
        self.alpha = alpha
        self.step = step
        self.n_s = n_s
        self.n_lag = n_lag
        self.first = FbmSampler(alpha, step, n_s, config)
        self.second = FbmSampler(alpha, step, n_s + 2 * n_lag, config)
        self.drift_first = self.first.times ** alpha
        self.drift_second = np.abs(np.arange(-n_lag, n_s + n_lag + 1) * step) ** alpha

    def fields(self, seed: int, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
        b1 = self.first.paths(seed, start, stop, STREAM_PRIMARY)
        x = self.second.paths(seed, start, stop, STREAM_SECONDARY)
        b2 = x - x[:, self.n_lag:self.n_lag + 1]
        return SQRT2 * b1 - self.drift_first, SQRT2 * b2 - self.drift_second

    @property
    def method(self) -> str:
        return self.second.method


def _two_field_sup(a: np.ndarray, c: np.ndarray, n_lag_fine: int, stride: int, n_s: int,
                   lags: range, penalty) -> np.ndarray:
    """max over s <= n_s and l in lags of a[s] + c[s - l] - penalty(l), in units of stride."""
    best = np.full(a.shape[0], -np.inf)
    span = n_s * stride + 1
    a_sub = a[:, :span:stride]
    for lag in lags:
        offset = n_lag_fine - lag * stride
        vals = a_sub + c[:, offset:offset + span:stride]
        np.maximum(best, vals.max(axis=1) - penalty(lag), out=best)
    return best


def _check_two_field(lam: float, lam1: float):
    if not (math.isfinite(lam1) and lam1 >= 0):
        raise ParameterError(f"lambda1 must satisfy lambda1 >= 0, got {lam1}")


def _estimate_2d_strides(alpha: float, lam: float, lam1: float, fine_step: float, strides: Sequence[int],
                         one_sided: bool, b_over_a: float, c_over_sqrt_a: float, n_rep: int, seed: int,
                         runner: Optional[ReplicateRunner], config: Dict) -> List[ConstantEstimate]:
    kind = EstimateKind.Q_OF_LAMBDA if one_sided else EstimateKind.P_OF_LAMBDA
    n_s_fine = _grid_count(lam, fine_step)
    n_lag_fine = _grid_count(lam1, fine_step)
    sampler = TwoFieldSampler(alpha, fine_step, n_s_fine, n_lag_fine, config)
    specs = [FbmGridSpec(alpha, lam, fine_step * s) for s in strides]
    lag_counts = [_grid_count(lam1, fine_step * s) for s in strides]

    def chunk(start: int, stop: int) -> np.ndarray:
        a, c = sampler.fields(seed, start, stop)
        out = np.empty((stop - start, len(strides)))
        for col, (s, spec, n_lag) in enumerate(zip(strides, specs, lag_counts)):
            lags = range(0, n_lag + 1) if one_sided else range(-n_lag, n_lag + 1)
            step = spec.step

            def penalty(lag, step=step):
                return 0.0 if one_sided else lag_penalty(alpha, b_over_a, c_over_sqrt_a, lag * step)

            out[:, col] = np.exp(_two_field_sup(a, c, n_lag_fine, s, spec.n_steps, lags, penalty))
        return out

    samples = _runner(runner).collect(chunk, n_rep)
    f_params = None if one_sided else {"b_over_a": b_over_a, "c_over_sqrt_a": c_over_sqrt_a}
    results = []
    for col, spec in enumerate(specs):
        value, se = _summarize(samples[:, col])
        results.append(ConstantEstimate(kind, value, se, n_rep, spec, lambda1=lam1, f_params=f_params,
                                        method=f"monte carlo ({sampler.method})"))
    return results


def estimate_P(alpha: float, b_over_a: float, c_over_sqrt_a: float, lam: float, lam1: float,
               grid_step: float, n_rep: int, seed: Optional[int] = None,
               runner: Optional[ReplicateRunner] = None, config: Optional[Dict] = None) -> ConstantEstimate:
    """
    E sup over 0 <= s <= lambda, |s - t| <= lambda1 of
    exp(sqrt(2)(B1(s) + B2(t)) - |s|^a - |t|^a - f(s - t)).
    """
    config = config or {}
    _check_common(alpha, lam, grid_step, n_rep, config)
    _check_two_field(lam, lam1)
    if b_over_a < 0:
        raise ParameterError(f"b/a must be nonnegative, got {b_over_a}")
    seed = check_seed(seed)
    logger.info(f"Estimating P alpha={alpha} b/a={b_over_a} c/sqrt(a)={c_over_sqrt_a} "
                f"lambda={lam} lambda1={lam1} step={grid_step} reps={n_rep}")
    return _estimate_2d_strides(alpha, lam, lam1, grid_step, (1,), False, b_over_a, c_over_sqrt_a,
                                n_rep, seed, runner, config)[0]


def estimate_Q(alpha: float, lam: float, lam1: float, grid_step: float, n_rep: int,
               seed: Optional[int] = None, runner: Optional[ReplicateRunner] = None,
               config: Optional[Dict] = None) -> ConstantEstimate:
    """As estimate_P with f = 0 and the one-sided lag window 0 <= s - t <= lambda1."""
    config = config or {}
    _check_common(alpha, lam, grid_step, n_rep, config)
    _check_two_field(lam, lam1)
    seed = check_seed(seed)
    logger.info(f"Estimating Q alpha={alpha} lambda={lam} lambda1={lam1} step={grid_step} reps={n_rep}")
    return _estimate_2d_strides(alpha, lam, lam1, grid_step, (1,), True, 0.0, 0.0,
                                n_rep, seed, runner, config)[0]


def estimate_P_two_grids(alpha: float, b_over_a: float, c_over_sqrt_a: float, lam: float, lam1: float,
                         grid_step: float, n_rep: int, seed: Optional[int] = None,
                         runner: Optional[ReplicateRunner] = None,
                         config: Optional[Dict] = None) -> Tuple[ConstantEstimate, ConstantEstimate]:
    config = config or {}
    _check_common(alpha, lam, grid_step, n_rep, config)
    _check_two_field(lam, lam1)
    if b_over_a < 0:
        raise ParameterError(f"b/a must be nonnegative, got {b_over_a}")
    seed = check_seed(seed)
    coarse, fine = _estimate_2d_strides(alpha, lam, lam1, grid_step / 2.0, (2, 1), False,
                                        b_over_a, c_over_sqrt_a, n_rep, seed, runner, config)
    return coarse, fine


def estimate_Q_two_grids(alpha: float, lam: float, lam1: float, grid_step: float, n_rep: int,
                         seed: Optional[int] = None, runner: Optional[ReplicateRunner] = None,
                         config: Optional[Dict] = None) -> Tuple[ConstantEstimate, ConstantEstimate]:
    config = config or {}
    _check_common(alpha, lam, grid_step, n_rep, config)
    _check_two_field(lam, lam1)
    seed = check_seed(seed)
    coarse, fine = _estimate_2d_strides(alpha, lam, lam1, grid_step / 2.0, (2, 1), True,
                                        0.0, 0.0, n_rep, seed, runner, config)
    return coarse, fine


def estimate_P_rate(alpha: float, b_over_a: float, c_over_sqrt_a: float, lam: float, grid_step: float,
                    n_rep: int, seed: Optional[int] = None, runner: Optional[ReplicateRunner] = None,
                    config: Optional[Dict] = None) -> ConstantEstimate:
    """
    Increment form (P(lambda, lambda) - P(lambda/2, lambda/2)) / (lambda/2)
    with both sups on the same pair of paths.
    """
    config = config or {}
    _check_common(alpha, lam, grid_step, n_rep, config)
    if b_over_a < 0:
        raise ParameterError(f"b/a must be nonnegative, got {b_over_a}")
    seed = check_seed(seed)
    n_s = _grid_count(lam, grid_step)
    half = _h_rate_split(n_s)
    sampler = TwoFieldSampler(alpha, grid_step, n_s, n_s, config)
    spec = FbmGridSpec(alpha, lam, grid_step)

    def penalty(lag):
        return lag_penalty(alpha, b_over_a, c_over_sqrt_a, lag * grid_step)

    def chunk(start: int, stop: int) -> np.ndarray:
        a, c = sampler.fields(seed, start, stop)
        full = _two_field_sup(a, c, n_s, 1, n_s, range(-n_s, n_s + 1), penalty)
        part = _two_field_sup(a, c, n_s, 1, half, range(-half, half + 1), penalty)
        return (np.exp(full) - np.exp(part)) / ((n_s - half) * grid_step)

    logger.info(f"Estimating P_rate alpha={alpha} b/a={b_over_a} c/sqrt(a)={c_over_sqrt_a} "
                f"lambda={lam} step={grid_step} reps={n_rep}")
    samples = _runner(runner).collect(chunk, n_rep)
    value, se = _summarize(samples)
    return ConstantEstimate(EstimateKind.P_RATE, value, se, n_rep, spec, lambda1=spec.n_steps * grid_step,
                            f_params={"b_over_a": b_over_a, "c_over_sqrt_a": c_over_sqrt_a},
                            method=f"monte carlo ({sampler.method})")
