"""Storage arbitrage over a fixed price scenario.

Maximizes sum_t price_t * (p_t - b_t) - c * p_t subject to per-interval energy
limits, state-of-charge bounds with one-way efficiency eta (state update
e' = e - p/eta + b*eta), no discharging at negative scenario prices, and no
simultaneous charge/discharge.

Two solver paths share one action grid:

* an exact backward induction over the set of SoC states actually reachable
  from e0, used when that set stays below a node budget (small horizons or
  coarse action grids). On its domain it is optimal to machine precision.
* a backward induction over a uniform SoC grid with linear value
  interpolation, used everywhere else. Accuracy is controlled by the grid
  size; the forward pass applies chosen actions exactly, so returned
  schedules are always feasible even when the value surface is approximate.

A brute-force enumerator over the same action grid serves as an independent
verification oracle on small instances. The batch solver runs the uniform
grid DP across many scenarios at once (one per Monte-Carlo price sample)
through a numba kernel; the kernel and the plain numpy grid path share the
exact arithmetic, ordering, and tie-breaking, so their outputs are
bit-identical, and tests rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# Feasibility slack for the SoC box during action enumeration (MWh). The
# dynamics themselves are applied exactly; this only absorbs float dust when
# an action lands on a boundary.
FEASIBILITY_SLACK = 1e-12

# validate_schedule tolerance (MWh / $): violations smaller than this are
# attributed to float noise, not to the solver.
VALIDATION_TOL = 1e-9

# Brute-force oracle work cap: (2 * levels - 1) ** T action sequences.
ORACLE_WORK_CAP = 2_000_000

# Objective ties inside the oracle narrower than this are broken by the
# lexicographic (total discharge, total charge) rule.
ORACLE_TIE_TOL = 1e-12

# Reachable-state bookkeeping for the exact path: states closer than
# _MERGE_TOL MWh are treated as one (different action orders produce the same
# physical state up to float rounding); lookups accept the nearest stored
# state within _LOOKUP_TOL.
_MERGE_TOL = 1e-10
_LOOKUP_TOL = 1e-8


class OracleTooLargeError(ValueError):
    """Brute-force enumeration would exceed the work cap."""


@dataclass(frozen=True)
class StorageParams:
    """Physical storage description.

    ``p_max`` is the per-interval energy limit in MWh (power rating times the
    interval length), ``capacity`` the usable energy in MWh, ``eta`` the
    one-way efficiency applied on both charge and discharge, and
    ``discharge_cost`` a fixed $/MWh wear cost on discharged energy.
    """

    p_max: float = 0.5
    capacity: float = 1.0
    eta: float = 0.9
    discharge_cost: float = 10.0
    e0: float = 0.0

    def __post_init__(self):
        if self.p_max <= 0:
            raise ValueError(f"p_max must be > 0, got {self.p_max}")
        if self.capacity <= 0:
            raise ValueError(f"capacity must be > 0, got {self.capacity}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.discharge_cost < 0:
            raise ValueError(f"discharge_cost must be >= 0, got {self.discharge_cost}")
        if not 0.0 <= self.e0 <= self.capacity:
            raise ValueError(
                f"e0 must be in [0, capacity={self.capacity}], got {self.e0}"
            )


@dataclass(frozen=True)
class SolverConfig:
    """DP discretization and exact-path budget.

    Action magnitudes are {0, delta, ..., p_max} with
    delta = p_max / (action_levels - 1), used for both charge and discharge.
    ``exact_node_budget`` caps the total reachable-state count for the exact
    path; 0 disables it and forces the uniform grid everywhere.
    """

    grid_points: int = 101
    action_levels: int = 51
    exact_node_budget: int = 20_000

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValueError(f"grid_points must be >= 2, got {self.grid_points}")
        if self.action_levels < 2:
            raise ValueError(f"action_levels must be >= 2, got {self.action_levels}")
        if self.exact_node_budget < 0:
            raise ValueError(
                f"exact_node_budget must be >= 0, got {self.exact_node_budget}"
            )


@dataclass(frozen=True)
class Schedule:
    """A charge/discharge plan with its resulting SoC path and objective.

    ``p`` and ``b`` are per-interval discharge and charge energies in MWh,
    ``e`` the SoC after each interval (e[-1] is terminal SoC), ``objective``
    the plan's value against the scenario it was solved for.
    """

    p: np.ndarray
    b: np.ndarray
    e: np.ndarray
    objective: float

    def __post_init__(self):
        for name in ("p", "b", "e"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.p.shape == self.b.shape == self.e.shape or self.p.ndim != 1:
            raise ValueError(
                f"p/b/e must be equal-length vectors, got "
                f"{self.p.shape}/{self.b.shape}/{self.e.shape}"
            )

    @property
    def horizon(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class ProfitBreakdown:
    revenue: float
    charge_cost: float
    discharge_cost: float
    net: float


@dataclass(frozen=True)
class Violation:
    """One feasibility violation found by validate_schedule."""

    kind: str
    t: int
    detail: str


def _check_scenario(prices: np.ndarray) -> np.ndarray:
    prices = np.asarray(prices, dtype=np.float64)
    if prices.ndim != 1 or prices.size < 1:
        raise ValueError(f"scenario must be a non-empty vector, got shape {prices.shape}")
    if not np.all(np.isfinite(prices)):
        raise ValueError("scenario contains NaN or infinite prices")
    return prices


def _action_grid(params: StorageParams, action_levels: int):
    """Per-action arrays in fixed enumeration order.

    Order is idle first, then ascending magnitude with discharge before
    charge at each magnitude. Combined with strict greater-than comparisons
    this realizes the tie rule: prefer idle, then the smaller action, with
    discharge winning an exact tie against charge of the same size.
    """
    delta = params.p_max / (action_levels - 1)
    n_actions = 2 * action_levels - 1
    p = np.zeros(n_actions)
    b = np.zeros(n_actions)
    for k in range(1, action_levels):
        p[2 * k - 1] = k * delta
        b[2 * k] = k * delta
    p_over_eta = p / params.eta
    b_eta = b * params.eta
    reward_price_coeff = p - b  # objective term multiplying the price
    reward_const = -params.discharge_cost * p
    return p, b, p_over_eta, b_eta, reward_price_coeff, reward_const


def _objective_from_actions(prices: np.ndarray, p: np.ndarray, b: np.ndarray, c: float) -> float:
    """Exact objective recomputation, fixed accumulation order."""
    total = 0.0
    for t in range(prices.size):
        total += prices[t] * (p[t] - b[t]) - c * p[t]
    return total


def _soc_path(e0: float, p: np.ndarray, b: np.ndarray, eta: float) -> np.ndarray:
    e = np.empty(p.size)
    cur = e0
    for t in range(p.size):
        cur = cur - p[t] / eta + b[t] * eta
        e[t] = cur
    return e


def _grid_solve(
    prices: np.ndarray, params: StorageParams, cfg: SolverConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform-grid DP; numpy mirror of the numba batch kernel."""
    horizon = prices.size
    grid_n = cfg.grid_points
    capacity = params.capacity
    p_arr, b_arr, p_over_eta, b_eta, coeff, const = _action_grid(params, cfg.action_levels)
    n_actions = p_arr.size
    grid = np.linspace(0.0, capacity, grid_n)
    inv_step = (grid_n - 1) / capacity

    # Backward pass: values[t] is the value-to-go before acting at step t.
    values = np.zeros((horizon + 1, grid_n))
    for t in range(horizon - 1, -1, -1):
        price = prices[t]
        v_next = values[t + 1]
        best = np.full(grid_n, -np.inf)
        for k in range(n_actions):
            if price < 0.0 and p_arr[k] > 0.0:
                continue
            e_next = grid - p_over_eta[k] + b_eta[k]
            feasible = (e_next >= -FEASIBILITY_SLACK) & (e_next <= capacity + FEASIBILITY_SLACK)
            x = np.clip(e_next, 0.0, capacity)
            u = x * inv_step
            idx = np.minimum(u.astype(np.int64), grid_n - 2)
            frac = u - idx
            cont = v_next[idx] + frac * (v_next[idx + 1] - v_next[idx])
            cand = price * coeff[k] + const[k] + cont
            improve = feasible & (cand > best)
            best = np.where(improve, cand, best)
        values[t] = best

    # Forward pass from the exact initial SoC.
    p_out = np.zeros(horizon)
    b_out = np.zeros(horizon)
    e_cur = float(params.e0)
    for t in range(horizon):
        price = prices[t]
        v_next = values[t + 1]
        best_val = -np.inf
        best_k = 0
        best_e = e_cur
        for k in range(n_actions):
            if price < 0.0 and p_arr[k] > 0.0:
                continue
            e_next = e_cur - p_over_eta[k] + b_eta[k]
            if e_next < -FEASIBILITY_SLACK or e_next > capacity + FEASIBILITY_SLACK:
                continue
            x = min(max(e_next, 0.0), capacity)
            u = x * inv_step
            idx = min(int(u), grid_n - 2)
            frac = u - idx
            cont = v_next[idx] + frac * (v_next[idx + 1] - v_next[idx])
            cand = price * coeff[k] + const[k] + cont
            if cand > best_val:
                best_val = cand
                best_k = k
                best_e = e_next
        p_out[t] = p_arr[best_k]
        b_out[t] = b_arr[best_k]
        e_cur = best_e
    return p_out, b_out


def _dedup_states(children: np.ndarray) -> np.ndarray:
    """Sort and merge states closer than _MERGE_TOL, keeping one representative."""
    children = np.sort(children)
    if children.size <= 1:
        return children
    keep = np.empty(children.size, dtype=bool)
    keep[0] = True
    np.greater(np.diff(children), _MERGE_TOL, out=keep[1:])
    return children[keep]


def _lookup_values(states: np.ndarray, values: np.ndarray, queries: np.ndarray):
    """Value of the nearest stored state for each query, within _LOOKUP_TOL.

    Returns (found mask, value array); queries with no stored state nearby
    come back marked not found and must be treated as infeasible.
    """
    pos = np.searchsorted(states, queries)
    lo = np.clip(pos - 1, 0, states.size - 1)
    hi = np.clip(pos, 0, states.size - 1)
    d_lo = np.abs(queries - states[lo])
    d_hi = np.abs(queries - states[hi])
    use_hi = d_hi < d_lo
    nearest = np.where(use_hi, hi, lo)
    dist = np.where(use_hi, d_hi, d_lo)
    found = dist <= _LOOKUP_TOL
    return found, values[nearest]


def _exact_solve(
    prices: np.ndarray, params: StorageParams, cfg: SolverConfig
) -> tuple[np.ndarray, np.ndarray] | None:
    """Backward induction over the exact reachable SoC set.

    Returns None when the reachable-state count would exceed the node budget;
    the caller then falls back to the uniform grid. On success the result is
    the true optimum over the discrete action space (same action order and
    tie preference as the grid path).
    """
    budget = cfg.exact_node_budget
    if budget == 0:
        return None
    horizon = prices.size
    p_arr, b_arr, p_over_eta, b_eta, coeff, const = _action_grid(params, cfg.action_levels)
    n_actions = p_arr.size
    # Cheap pre-guard so huge instances skip straight to the grid path.
    if n_actions ** min(horizon, 4) > 50 * budget:
        return None
    capacity = params.capacity

    level_states: list[np.ndarray] = [np.array([float(params.e0)])]
    total = 1
    for t in range(horizon):
        price = prices[t]
        cur = level_states[t]
        allowed = [
            k for k in range(n_actions) if not (price < 0.0 and p_arr[k] > 0.0)
        ]
        children = (
            cur[:, None] - p_over_eta[None, allowed] + b_eta[None, allowed]
        ).ravel()
        feasible = (children >= -FEASIBILITY_SLACK) & (
            children <= capacity + FEASIBILITY_SLACK
        )
        states = _dedup_states(children[feasible])
        total += states.size
        if total > budget:
            return None
        level_states.append(states)

    level_values: list[np.ndarray] = [np.empty(0)] * (horizon + 1)
    level_values[horizon] = np.zeros(level_states[horizon].size)
    for t in range(horizon - 1, -1, -1):
        price = prices[t]
        cur = level_states[t]
        best = np.full(cur.size, -np.inf)
        nxt_states = level_states[t + 1]
        nxt_values = level_values[t + 1]
        for k in range(n_actions):
            if price < 0.0 and p_arr[k] > 0.0:
                continue
            e_next = cur - p_over_eta[k] + b_eta[k]
            feasible = (e_next >= -FEASIBILITY_SLACK) & (
                e_next <= capacity + FEASIBILITY_SLACK
            )
            found, cont = _lookup_values(nxt_states, nxt_values, e_next)
            cand = price * coeff[k] + const[k] + cont
            improve = feasible & found & (cand > best)
            best = np.where(improve, cand, best)
        level_values[t] = best

    p_out = np.zeros(horizon)
    b_out = np.zeros(horizon)
    e_cur = float(params.e0)
    for t in range(horizon):
        price = prices[t]
        nxt_states = level_states[t + 1]
        nxt_values = level_values[t + 1]
        best_val = -np.inf
        best_k = 0
        best_e = e_cur
        for k in range(n_actions):
            if price < 0.0 and p_arr[k] > 0.0:
                continue
            e_next = e_cur - p_over_eta[k] + b_eta[k]
            if e_next < -FEASIBILITY_SLACK or e_next > capacity + FEASIBILITY_SLACK:
                continue
            found, cont = _lookup_values(
                nxt_states, nxt_values, np.array([e_next])
            )
            if not found[0]:
                continue
            cand = price * coeff[k] + const[k] + cont[0]
            if cand > best_val:
                best_val = cand
                best_k = k
                best_e = e_next
        p_out[t] = p_arr[best_k]
        b_out[t] = b_arr[best_k]
        e_cur = best_e
    return p_out, b_out


def optimize_schedule(
    prices: np.ndarray, params: StorageParams, cfg: SolverConfig | None = None
) -> Schedule:
    """Best feasible schedule for the scenario on the configured action grid.

    Small instances (reachable SoC states within the node budget) are solved
    exactly; larger ones use the uniform-grid DP with interpolated values.
    Either way the forward pass applies actions with exact dynamics and the
    objective is recomputed from the actions, not read off the value surface.
    """
    cfg = cfg or SolverConfig()
    prices = _check_scenario(prices)
    solved = _exact_solve(prices, params, cfg)
    if solved is None:
        solved = _grid_solve(prices, params, cfg)
    p_out, b_out = solved
    e_out = _soc_path(params.e0, p_out, b_out, params.eta)
    objective = _objective_from_actions(prices, p_out, b_out, params.discharge_cost)
    return Schedule(p=p_out, b=b_out, e=e_out, objective=objective)


@njit(cache=True)
def _dp_batch_kernel(
    prices_batch,
    capacity,
    p_arr,
    b_arr,
    p_over_eta,
    b_eta,
    coeff,
    const,
    grid_n,
    e0,
    p_out,
    b_out,
):  # pragma: no cover - exercised via solve_batch
    n_samples, horizon = prices_batch.shape
    n_actions = p_arr.size
    inv_step = (grid_n - 1) / capacity
    step = capacity / (grid_n - 1)
    values = np.zeros((horizon + 1, grid_n))
    for s in range(n_samples):
        for j in range(grid_n):
            values[horizon, j] = 0.0
        for t in range(horizon - 1, -1, -1):
            price = prices_batch[s, t]
            for j in range(grid_n):
                e_here = j * step
                best = -np.inf
                for k in range(n_actions):
                    if price < 0.0 and p_arr[k] > 0.0:
                        continue
                    e_next = e_here - p_over_eta[k] + b_eta[k]
                    if e_next < -FEASIBILITY_SLACK or e_next > capacity + FEASIBILITY_SLACK:
                        continue
                    x = min(max(e_next, 0.0), capacity)
                    u = x * inv_step
                    idx = int(u)
                    if idx > grid_n - 2:
                        idx = grid_n - 2
                    frac = u - idx
                    cont = values[t + 1, idx] + frac * (
                        values[t + 1, idx + 1] - values[t + 1, idx]
                    )
                    cand = price * coeff[k] + const[k] + cont
                    if cand > best:
                        best = cand
                values[t, j] = best
        e_cur = e0
        for t in range(horizon):
            price = prices_batch[s, t]
            best_val = -np.inf
            best_k = 0
            best_e = e_cur
            for k in range(n_actions):
                if price < 0.0 and p_arr[k] > 0.0:
                    continue
                e_next = e_cur - p_over_eta[k] + b_eta[k]
                if e_next < -FEASIBILITY_SLACK or e_next > capacity + FEASIBILITY_SLACK:
                    continue
                x = min(max(e_next, 0.0), capacity)
                u = x * inv_step
                idx = int(u)
                if idx > grid_n - 2:
                    idx = grid_n - 2
                frac = u - idx
                cont = values[t + 1, idx] + frac * (
                    values[t + 1, idx + 1] - values[t + 1, idx]
                )
                cand = price * coeff[k] + const[k] + cont
                if cand > best_val:
                    best_val = cand
                    best_k = k
                    best_e = e_next
            p_out[s, t] = p_arr[best_k]
            b_out[s, t] = b_arr[best_k]
            e_cur = best_e


def solve_batch(
    prices_batch: np.ndarray,
    params: StorageParams,
    cfg: SolverConfig | None = None,
    use_numba: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform-grid DP over many scenarios sharing params and initial SoC.

    Returns (p, b, objectives) with shapes (N, T), (N, T), (N,). With
    ``use_numba=False`` the numpy grid path runs per row instead; both paths
    produce bit-identical output. The exact small-instance path is
    deliberately not used here so every sample goes through one code path.
    """
    cfg = cfg or SolverConfig()
    prices_batch = np.asarray(prices_batch, dtype=np.float64)
    if prices_batch.ndim != 2 or prices_batch.shape[1] < 1:
        raise ValueError(f"need a (samples, horizon) batch, got {prices_batch.shape}")
    if not np.all(np.isfinite(prices_batch)):
        raise ValueError("batch contains NaN or infinite prices")
    n_samples, horizon = prices_batch.shape

    if use_numba:
        p_arr, b_arr, p_over_eta, b_eta, coeff, const = _action_grid(
            params, cfg.action_levels
        )
        p = np.zeros((n_samples, horizon))
        b = np.zeros((n_samples, horizon))
        _dp_batch_kernel(
            prices_batch,
            float(params.capacity),
            p_arr,
            b_arr,
            p_over_eta,
            b_eta,
            coeff,
            const,
            cfg.grid_points,
            float(params.e0),
            p,
            b,
        )
    else:
        p = np.empty((n_samples, horizon))
        b = np.empty((n_samples, horizon))
        for s in range(n_samples):
            p[s], b[s] = _grid_solve(prices_batch[s], params, cfg)
    obj = np.empty(n_samples)
    for s in range(n_samples):
        obj[s] = _objective_from_actions(prices_batch[s], p[s], b[s], params.discharge_cost)
    return p, b, obj


def brute_force_oracle(
    prices: np.ndarray, params: StorageParams, action_levels: int = 11
) -> Schedule:
    """Exhaustive search over per-step action combinations on the DP's grid.

    Feasible sequences are enumerated recursively with pruning; the best
    objective wins, with ties (within 1e-12) broken by the lexicographically
    smallest (total discharge, total charge). Guarded by a work cap of
    (2 * levels - 1)^T enumerated sequences.
    """
    prices = _check_scenario(prices)
    horizon = prices.size
    if action_levels < 2:
        raise ValueError(f"action_levels must be >= 2, got {action_levels}")
    work = (2 * action_levels - 1) ** horizon
    if work > ORACLE_WORK_CAP:
        raise OracleTooLargeError(
            f"{(2 * action_levels - 1)}^{horizon} = {work} sequences exceeds "
            f"cap {ORACLE_WORK_CAP}"
        )
    p_arr, b_arr, p_over_eta, b_eta, coeff, const = _action_grid(params, action_levels)
    n_actions = p_arr.size
    capacity = params.capacity

    best = {
        "obj": -np.inf,
        "key": (np.inf, np.inf),
        "p": None,
        "b": None,
    }
    p_seq = np.zeros(horizon)
    b_seq = np.zeros(horizon)

    def recurse(t: int, e_cur: float, obj: float) -> None:
        if t == horizon:
            key = (float(np.sum(p_seq)), float(np.sum(b_seq)))
            if obj > best["obj"] + ORACLE_TIE_TOL:
                best.update(obj=obj, key=key, p=p_seq.copy(), b=b_seq.copy())
            elif obj >= best["obj"] - ORACLE_TIE_TOL and key < best["key"]:
                best.update(
                    obj=max(obj, best["obj"]), key=key, p=p_seq.copy(), b=b_seq.copy()
                )
            return
        price = prices[t]
        for k in range(n_actions):
            if price < 0.0 and p_arr[k] > 0.0:
                continue
            e_next = e_cur - p_over_eta[k] + b_eta[k]
            if e_next < -FEASIBILITY_SLACK or e_next > capacity + FEASIBILITY_SLACK:
                continue
            p_seq[t] = p_arr[k]
            b_seq[t] = b_arr[k]
            recurse(t + 1, e_next, obj + price * coeff[k] + const[k])
        p_seq[t] = 0.0
        b_seq[t] = 0.0

    recurse(0, float(params.e0), 0.0)
    p_best, b_best = best["p"], best["b"]
    e = _soc_path(params.e0, p_best, b_best, params.eta)
    objective = _objective_from_actions(prices, p_best, b_best, params.discharge_cost)
    return Schedule(p=p_best, b=b_best, e=e, objective=objective)


def evaluate_profit(
    schedule: Schedule, realized: np.ndarray, params: StorageParams
) -> ProfitBreakdown:
    """Profit of a schedule against realized prices.

    Sign convention: charge_cost is negative when the realized price is
    negative at a charge step (the storage is paid to absorb energy).
    """
    realized = _check_scenario(realized)
    if realized.size != schedule.horizon:
        raise ValueError(
            f"length mismatch: {realized.size} prices vs {schedule.horizon} steps"
        )
    revenue = float(np.sum(realized * schedule.p))
    charge_cost = float(np.sum(realized * schedule.b))
    discharge_cost = float(params.discharge_cost * np.sum(schedule.p))
    return ProfitBreakdown(
        revenue=revenue,
        charge_cost=charge_cost,
        discharge_cost=discharge_cost,
        net=revenue - charge_cost - discharge_cost,
    )


def validate_schedule(
    schedule: Schedule, params: StorageParams, prices: np.ndarray
) -> list[Violation]:
    """Check every schedule invariant to VALIDATION_TOL; violations are data."""
    prices = _check_scenario(prices)
    out: list[Violation] = []
    tol = VALIDATION_TOL
    p, b, e = schedule.p, schedule.b, schedule.e
    if prices.size != schedule.horizon:
        return [
            Violation(
                kind="length_mismatch",
                t=-1,
                detail=f"{prices.size} prices vs {schedule.horizon} steps",
            )
        ]
    e_prev = params.e0
    for t in range(schedule.horizon):
        if not -tol <= p[t] <= params.p_max + tol:
            out.append(Violation("power_limit", t, f"p={p[t]} outside [0, {params.p_max}]"))
        if not -tol <= b[t] <= params.p_max + tol:
            out.append(Violation("power_limit", t, f"b={b[t]} outside [0, {params.p_max}]"))
        if not -tol <= e[t] <= params.capacity + tol:
            out.append(
                Violation("soc_bounds", t, f"e={e[t]} outside [0, {params.capacity}]")
            )
        expected = e_prev - p[t] / params.eta + b[t] * params.eta
        if abs(e[t] - expected) > tol:
            out.append(
                Violation("soc_dynamics", t, f"e={e[t]} but dynamics give {expected}")
            )
        if prices[t] < 0 and p[t] > tol:
            out.append(
                Violation("negative_price_discharge", t, f"p={p[t]} at price {prices[t]}")
            )
        if p[t] > tol and b[t] > tol:
            out.append(
                Violation("simultaneous_charge_discharge", t, f"p={p[t]}, b={b[t]}")
            )
        e_prev = e[t]
    return out


def schedule_frame(schedule: Schedule, prices: np.ndarray, params: StorageParams):
    """Tabular schedule export: t, price, p, b, e, step_profit."""
    import pandas as pd

    prices = _check_scenario(prices)
    if prices.size != schedule.horizon:
        raise ValueError(
            f"length mismatch: {prices.size} prices vs {schedule.horizon} steps"
        )
    step_profit = prices * (schedule.p - schedule.b) - params.discharge_cost * schedule.p
    return pd.DataFrame(
        {
            "t": np.arange(schedule.horizon),
            "price": prices,
            "p": schedule.p,
            "b": schedule.b,
            "e": schedule.e,
            "step_profit": step_profit,
        }
    )
