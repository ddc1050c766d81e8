"""Power-law fits of benchmark loss against the agent-data mixing ratio,
aggregate-loss minimization over the mixing ratio, and compute-budget
arithmetic for the small-model sweeps.

The fitted form is loss(x) = c + k * x**alpha. A single curve of this
form is monotone, so an interior optimum only ever comes from aggregating
opposing curves (agent benchmarks improving with x, general benchmarks
degrading); optimal_mix_ratio minimizes a weighted sum of curves.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

ALPHA_GRID_LO = -2.0
ALPHA_GRID_HI = 2.0
ALPHA_GRID_STEP = 1e-3
ALPHA_REFINE_TOL = 1e-6


class ScalingError(Exception):
    pass


@dataclass(frozen=True)
class MixObservation:
    x: float
    loss: float
    benchmark: str
    model_params: int | None = None
    tokens: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ScalingError(f"mixing ratio x must be in [0, 1], got {self.x}")
        if self.loss <= 0.0:
            raise ScalingError(f"loss must be positive, got {self.loss}")


@dataclass(frozen=True)
class ScalingCurve:
    c: float
    k: float
    alpha: float
    rmse: float
    benchmark: str

    def to_json(self) -> dict:
        return {"benchmark": self.benchmark, "c": self.c, "k": self.k,
                "alpha": self.alpha, "rmse": self.rmse}


@dataclass(frozen=True)
class BudgetSpec:
    model_params: int
    token_multiplier: float = 50.0
    flops_per_param_token: float = 6.0

    def __post_init__(self):
        if self.model_params <= 0 or self.token_multiplier <= 0 \
                or self.flops_per_param_token <= 0:
            raise ScalingError("budget parameters must be positive")


def _linear_fit_at_alpha(x, y, alpha):
    """Closed-form least-squares (c, k) for fixed alpha; returns (c, k, sse)."""
    u = np.power(x, alpha)
    design = np.column_stack([np.ones_like(u), u])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(coef[0]), float(coef[1]), float(resid @ resid)


def fit_power_law(obs, benchmark: str | None = None) -> ScalingCurve:
    """Least-squares fit of c + k * x**alpha to one benchmark's observations.

    Method: dense grid over alpha (zero excluded: alpha = 0 is degenerate
    with c) with closed-form (c, k) at each grid point, then golden-section
    refinement of alpha around the best bracket. Deterministic.
    """
    obs = list(obs)
    if benchmark is not None:
        obs = [o for o in obs if o.benchmark == benchmark]
    obs = [o for o in obs if o.x > 0.0]  # x = 0 cannot constrain alpha
    if len(obs) < 4:
        raise ScalingError(f"need at least 4 observations with x > 0, got {len(obs)}")
    names = {o.benchmark for o in obs}
    if len(names) > 1:
        raise ScalingError(f"observations span multiple benchmarks: {sorted(names)}")
    obs.sort(key=lambda o: (o.x, o.loss))  # exact order invariance
    x = np.array([o.x for o in obs], dtype=np.float64)
    y = np.array([o.loss for o in obs], dtype=np.float64)
    if len(np.unique(x)) < 3:
        raise ScalingError("need >= 3 distinct x values (alpha unidentifiable)")

    grid = np.arange(ALPHA_GRID_LO, ALPHA_GRID_HI + ALPHA_GRID_STEP / 2,
                     ALPHA_GRID_STEP)
    grid = grid[np.abs(grid) > ALPHA_GRID_STEP / 2]

    best_alpha, best_sse = None, math.inf
    for alpha in grid:
        _, _, sse = _linear_fit_at_alpha(x, y, alpha)
        if sse < best_sse:
            best_alpha, best_sse = float(alpha), sse

    lo = best_alpha - ALPHA_GRID_STEP
    hi = best_alpha + ALPHA_GRID_STEP
    alpha = _golden_section(lambda a: _linear_fit_at_alpha(x, y, a)[2],
                            lo, hi, ALPHA_REFINE_TOL)
    c, k, sse = _linear_fit_at_alpha(x, y, alpha)
    if sse > best_sse:  # refinement must never lose to its own grid point
        alpha = best_alpha
        c, k, sse = _linear_fit_at_alpha(x, y, alpha)
    rmse = math.sqrt(sse / len(obs))
    return ScalingCurve(c, k, alpha, rmse, obs[0].benchmark)


def _golden_section(fn, lo, hi, tol):
    """Golden-section minimization of a unimodal scalar function."""
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = fn(x2)
    return (a + b) / 2.0


def predict_loss(curve: ScalingCurve, x: float) -> float:
    if x <= 0.0 and curve.alpha < 0.0:
        raise ScalingError(f"x = {x} is outside the curve's domain (alpha < 0)")
    if x < 0.0:
        raise ScalingError(f"mixing ratio must be non-negative, got {x}")
    return curve.c + curve.k * x ** curve.alpha


def optimal_mix_ratio(curves, weights, domain=(0.05, 0.6),
                      grid_step=1e-3):
    """Minimize the weighted sum of curve losses over the mixing ratio.

    Grid argmin over [lo, hi] followed by golden-section refinement
    between the grid neighbors; exact ties resolve to the smallest x.
    Returns (x_star, aggregate_loss).
    """
    curves = list(curves)
    weights = [float(w) for w in weights]
    if not curves:
        raise ScalingError("no curves to optimize over")
    if len(weights) != len(curves):
        raise ScalingError(f"{len(weights)} weights for {len(curves)} curves")
    if any(w <= 0 for w in weights):
        raise ScalingError("weights must be positive")
    lo, hi = domain
    if not (0.0 < lo < hi <= 1.0):
        raise ScalingError(f"domain must satisfy 0 < lo < hi <= 1, got {domain}")
    if grid_step <= 0 or grid_step > (hi - lo) / 10:
        raise ScalingError(f"grid_step must be in (0, (hi-lo)/10], got {grid_step}")

    def aggregate(x):
        return sum(w * predict_loss(curve, x) for curve, w in zip(curves, weights))

    xs = np.arange(lo, hi + grid_step / 2, grid_step)
    xs[-1] = min(xs[-1], hi)
    values = [aggregate(float(x)) for x in xs]
    best = min(range(len(xs)), key=lambda i: (values[i], xs[i]))

    bracket_lo = float(xs[max(best - 1, 0)])
    bracket_hi = float(xs[min(best + 1, len(xs) - 1)])
    x_star = _golden_section(aggregate, bracket_lo, bracket_hi, 1e-9)
    if aggregate(x_star) > values[best]:
        x_star = float(xs[best])
    return x_star, aggregate(x_star)


def compute_budget(spec: BudgetSpec):
    """Token and FLOPs budget for one sampling model: D = m*N, F = 6*N*D."""
    tokens = round(spec.token_multiplier * spec.model_params)
    flops = spec.flops_per_param_token * spec.model_params * tokens
    return tokens, flops


def load_observations(path: str) -> list:
    obs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                o = json.loads(line)
                obs.append(MixObservation(
                    x=float(o["x"]), loss=float(o["loss"]),
                    benchmark=o["benchmark"],
                    model_params=o.get("model_params"),
                    tokens=o.get("tokens")))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ScalingError(f"{path}:{lineno}: bad observation: {exc}")
    return obs
