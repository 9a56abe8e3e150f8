"""Monte-Carlo risk-averse decision layer on top of the arbitrage solver.

Price scenarios are sampled uniformly inside the per-offset prediction
intervals, each scenario is solved independently, and the per-step actions are
aggregated with an all-agree rule: act only when every sample acts in the same
direction, taking the minimum agreeing quantity (conservative) or the maximum
(aggressive). Disagreement between samples reads as price uncertainty and
suppresses the action entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arbitrage import SolverConfig, StorageParams, solve_batch

CHARGE = "charge"
DISCHARGE = "discharge"
IDLE = "idle"

# Multiplier on the calibration residual scale when replacing an infinite
# interval bound with a finite one before sampling.
CLAMP_SCALE_MULTIPLIER = 5.0


@dataclass(frozen=True)
class PolicyConfig:
    """Sampling and aggregation settings.

    ``decision_tolerance`` is the MWh threshold above which a sample's action
    counts as acting for the all-agree rule.
    """

    n_samples: int = 100
    mode: str = "conservative"
    seed: int = 0
    decision_tolerance: float = 1e-9

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.mode not in ("conservative", "aggressive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.decision_tolerance < 0:
            raise ValueError(
                f"decision_tolerance must be >= 0, got {self.decision_tolerance}"
            )


@dataclass(frozen=True)
class AggregatedDecision:
    """One step of the aggregated policy.

    ``quantity`` is in MWh and zero iff the action is idle. The agree counts
    record how many samples charged/discharged at this step regardless of the
    final action.
    """

    action: str
    quantity: float
    n_agree_charge: int
    n_agree_discharge: int

    def __post_init__(self):
        if self.action not in (CHARGE, DISCHARGE, IDLE):
            raise ValueError(f"unknown action {self.action!r}")
        if self.action == IDLE and self.quantity != 0.0:
            raise ValueError(f"idle decision with quantity {self.quantity}")
        if self.action != IDLE and self.quantity <= 0.0:
            raise ValueError(f"{self.action} decision with quantity {self.quantity}")


@dataclass(frozen=True)
class PolicyResult:
    decisions: tuple[AggregatedDecision, ...]
    samples_used: int
    p_samples: np.ndarray  # (N, T) per-sample discharge plans
    b_samples: np.ndarray  # (N, T) per-sample charge plans


def sample_scenario(
    lower: np.ndarray, upper: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One price scenario: independent Uniform draws inside each interval."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if lower.shape != upper.shape or lower.ndim != 1 or lower.size < 1:
        raise ValueError(f"bad interval arrays: {lower.shape} vs {upper.shape}")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("infinite interval bound; clamp before sampling")
    if np.any(lower > upper):
        raise ValueError("lower bound above upper bound")
    u = rng.uniform(0.0, 1.0, size=lower.size)
    prices = lower + (upper - lower) * u
    return np.clip(prices, lower, upper)


def clamp_intervals(
    lower: np.ndarray,
    upper: np.ndarray,
    point_forecast: np.ndarray,
    residual_scale: float,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Replace infinite bounds with point_forecast -/+ 5 * residual_scale.

    ``residual_scale`` should be the 99th percentile of absolute calibration
    residuals. Returns (lower, upper, count of bounds replaced) so callers can
    log how often sampling fell back to the clamp.
    """
    lower = np.asarray(lower, dtype=np.float64).copy()
    upper = np.asarray(upper, dtype=np.float64).copy()
    point = np.asarray(point_forecast, dtype=np.float64)
    if residual_scale <= 0 or not np.isfinite(residual_scale):
        raise ValueError(f"residual_scale must be finite and > 0, got {residual_scale}")
    span = CLAMP_SCALE_MULTIPLIER * residual_scale
    lo_inf = ~np.isfinite(lower)
    up_inf = ~np.isfinite(upper)
    lower[lo_inf] = point[lo_inf] - span
    upper[up_inf] = point[up_inf] + span
    n_clamped = int(lo_inf.sum() + up_inf.sum())
    return lower, upper, n_clamped


def aggregate(
    p_samples: np.ndarray,
    b_samples: np.ndarray,
    mode: str,
    tolerance: float = 1e-9,
) -> list[AggregatedDecision]:
    """All-agree reduction of per-sample schedules to one decision per step.

    Charge at a step iff every sample charges there (b > tolerance), likewise
    discharge; quantity is the min (conservative) or max (aggressive) over
    the agreeing quantities. Any disagreement gives Idle. Simultaneous
    unanimous charge and discharge cannot happen because individual schedules
    never do both in one step.
    """
    p_samples = np.asarray(p_samples, dtype=np.float64)
    b_samples = np.asarray(b_samples, dtype=np.float64)
    if p_samples.shape != b_samples.shape or p_samples.ndim != 2:
        raise ValueError(
            f"need matching (N, T) arrays, got {p_samples.shape} vs {b_samples.shape}"
        )
    n, horizon = p_samples.shape
    if n < 1 or horizon < 1:
        raise ValueError(f"need at least one sample and one step, got {p_samples.shape}")
    if mode not in ("conservative", "aggressive"):
        raise ValueError(f"unknown mode {mode!r}")

    charging = b_samples > tolerance
    discharging = p_samples > tolerance
    n_charge = charging.sum(axis=0)
    n_discharge = discharging.sum(axis=0)
    reducer = np.min if mode == "conservative" else np.max

    out = []
    for t in range(horizon):
        if n_charge[t] == n:
            out.append(
                AggregatedDecision(
                    action=CHARGE,
                    quantity=float(reducer(b_samples[:, t])),
                    n_agree_charge=int(n_charge[t]),
                    n_agree_discharge=int(n_discharge[t]),
                )
            )
        elif n_discharge[t] == n:
            out.append(
                AggregatedDecision(
                    action=DISCHARGE,
                    quantity=float(reducer(p_samples[:, t])),
                    n_agree_charge=int(n_charge[t]),
                    n_agree_discharge=int(n_discharge[t]),
                )
            )
        else:
            out.append(
                AggregatedDecision(
                    action=IDLE,
                    quantity=0.0,
                    n_agree_charge=int(n_charge[t]),
                    n_agree_discharge=int(n_discharge[t]),
                )
            )
    return out


def _clip_for_feasibility(
    decisions: list[AggregatedDecision],
    params: StorageParams,
    tolerance: float,
) -> list[AggregatedDecision]:
    """Clip aggregated quantities so the executed trajectory stays feasible.

    Samples agree on direction but may have divergent SoC paths, so the
    aggregate can ask for more than the running SoC allows; each step is cut
    to the feasible maximum from the trajectory so far. A quantity clipped to
    (near) zero becomes Idle.
    """
    e = float(params.e0)
    out = []
    for d in decisions:
        if d.action == CHARGE:
            limit = min(params.p_max, (params.capacity - e) / params.eta)
            qty = min(d.quantity, max(limit, 0.0))
            if qty <= tolerance:
                out.append(
                    AggregatedDecision(IDLE, 0.0, d.n_agree_charge, d.n_agree_discharge)
                )
            else:
                out.append(
                    AggregatedDecision(CHARGE, qty, d.n_agree_charge, d.n_agree_discharge)
                )
                e = e + qty * params.eta
        elif d.action == DISCHARGE:
            limit = min(params.p_max, params.eta * e)
            qty = min(d.quantity, max(limit, 0.0))
            if qty <= tolerance:
                out.append(
                    AggregatedDecision(IDLE, 0.0, d.n_agree_charge, d.n_agree_discharge)
                )
            else:
                out.append(
                    AggregatedDecision(
                        DISCHARGE, qty, d.n_agree_charge, d.n_agree_discharge
                    )
                )
                e = e - qty / params.eta
        else:
            out.append(d)
    return out


def run_policy(
    lower: np.ndarray,
    upper: np.ndarray,
    params: StorageParams,
    cfg: PolicyConfig,
    solver: SolverConfig | None = None,
    use_numba: bool = True,
    decision_key: int | None = None,
) -> PolicyResult:
    """Sample N scenarios from the intervals, solve each, aggregate, clip.

    The RNG stream is partitioned per sample index (seed sequence
    [cfg.seed, i]), so results do not depend on evaluation order and stay
    reproducible if samples are ever solved in parallel. A caller making a
    sequence of decisions passes a distinct ``decision_key`` per decision,
    which is mixed into the stream key so draws differ across decisions
    without reseeding the config.
    """
    solver = solver or SolverConfig()
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    horizon = lower.size
    scenarios = np.empty((cfg.n_samples, horizon))
    for i in range(cfg.n_samples):
        key = [cfg.seed, i] if decision_key is None else [cfg.seed, decision_key, i]
        rng = np.random.default_rng(key)
        scenarios[i] = sample_scenario(lower, upper, rng)
    p, b, _ = solve_batch(scenarios, params, solver, use_numba=use_numba)
    decisions = aggregate(p, b, cfg.mode, cfg.decision_tolerance)
    decisions = _clip_for_feasibility(decisions, params, cfg.decision_tolerance)
    return PolicyResult(
        decisions=tuple(decisions),
        samples_used=cfg.n_samples,
        p_samples=p,
        b_samples=b,
    )
