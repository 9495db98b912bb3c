"""Battery arbitrage: a single buy-sell heuristic, a DP schedule over a
discretized state of charge, settlement against realized prices, and an
exhaustive oracle for the DP.

Energy convention: plan actions are battery-side MWh. Buying e from the grid
costs (e / eta_c) * price because charging is lossy; selling e earns
(eta_d * e) * price because discharge is lossy. Both efficiencies are costs
borne by the trader.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FeasibilityError
from .quantile import QuantileForecast

_EPS = 1e-9


@dataclass(frozen=True)
class BatteryConfig:
    capacity: float = 1.0
    max_charge: float = 1.0
    max_discharge: float = 1.0
    eta_c: float = 0.98
    eta_d: float = 0.8
    min_soc: float = 0.0
    initial_soc: float = 0.0

    def __post_init__(self):
        if self.capacity < 0.0:
            raise ConfigError(f"capacity must be >= 0, got {self.capacity}")
        if not 0.0 <= self.min_soc <= self.initial_soc <= self.capacity:
            raise ConfigError(
                "state-of-charge bounds must satisfy "
                f"0 <= min_soc ({self.min_soc}) <= initial_soc ({self.initial_soc}) "
                f"<= capacity ({self.capacity})"
            )
        if self.max_charge <= 0.0 or self.max_discharge <= 0.0:
            raise ConfigError("charge and discharge rates must be > 0")
        for name in ("eta_c", "eta_d"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class PlanStep:
    action: str  # "charge" | "discharge" | "idle"
    energy: float  # battery-side MWh, 0 for idle

    def __post_init__(self):
        if self.action not in ("charge", "discharge", "idle"):
            raise ConfigError(f"unknown action {self.action!r}")
        if self.action == "idle" and self.energy != 0.0:
            raise ConfigError("idle steps carry no energy")
        if self.energy < 0.0:
            raise ConfigError("energy must be >= 0")


IDLE = PlanStep("idle", 0.0)


@dataclass(frozen=True)
class TradePlan:
    steps: tuple[PlanStep, ...]
    planned_profit: float

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def is_idle(self) -> bool:
        return all(s.action == "idle" for s in self.steps)


@dataclass(frozen=True)
class TradeRecord:
    period: int
    side: str  # "buy" | "sell"
    grid_energy: float
    price: float
    cash: float
    soc_after: float


@dataclass(frozen=True)
class TradeLedger:
    records: tuple[TradeRecord, ...]
    profit: float


def validate_plan(plan: TradePlan, battery: BatteryConfig) -> None:
    """Simulate the plan from the battery's initial state; out-of-bounds SoC
    or rate violations raise a feasibility error."""
    soc = battery.initial_soc
    for t, step in enumerate(plan.steps):
        if step.action == "charge":
            if step.energy > battery.max_charge + _EPS:
                raise FeasibilityError(f"period {t}: charge {step.energy} beats rate limit")
            soc += step.energy
            if soc > battery.capacity + _EPS:
                raise FeasibilityError(f"period {t}: state of charge {soc} above capacity")
        elif step.action == "discharge":
            if step.energy > battery.max_discharge + _EPS:
                raise FeasibilityError(
                    f"period {t}: discharge {step.energy} beats rate limit"
                )
            soc -= step.energy
            if soc < battery.min_soc - _EPS:
                raise FeasibilityError(f"period {t}: state of charge {soc} below minimum")


def _median_column(forecast: QuantileForecast, level: float) -> np.ndarray:
    return forecast.level_column(level)


def ts1_plan(
    forecast: QuantileForecast,
    battery: BatteryConfig,
    risk_filter: bool = False,
    act_level: float = 0.1,
) -> TradePlan:
    """One buy before one sell, chosen to maximize the efficiency-adjusted
    median spread. With the risk filter on, the trade only stands when the
    pessimistic sell quantile still beats the optimistic buy cost."""
    H = forecast.n_steps
    if H < 2:
        raise ConfigError(f"single-pair trading needs at least 2 periods, got {H}")
    m = _median_column(forecast, 0.5)
    best = None
    for b in range(H - 1):
        for s in range(b + 1, H):
            spread = battery.eta_d * m[s] - m[b] / battery.eta_c
            if best is None or spread > best[0]:
                best = (spread, b, s)
    spread, b, s = best
    volume = min(
        battery.capacity - battery.initial_soc,
        battery.max_charge,
        battery.max_discharge,
    )
    if spread <= 0.0 or volume <= _EPS:
        return TradePlan(steps=(IDLE,) * H, planned_profit=0.0)
    if risk_filter:
        if not 0.0 < act_level < 0.5:
            raise ConfigError(f"act_level must be in (0, 0.5), got {act_level}")
        sell_floor = forecast.level_column(act_level)[s]
        buy_ceiling = forecast.level_column(round(1.0 - act_level, 12))[b]
        if not battery.eta_d * sell_floor - buy_ceiling / battery.eta_c > 0.0:
            return TradePlan(steps=(IDLE,) * H, planned_profit=0.0)
    steps = [IDLE] * H
    steps[b] = PlanStep("charge", volume)
    steps[s] = PlanStep("discharge", volume)
    cash_buy = -(volume / battery.eta_c) * m[b]
    cash_sell = (battery.eta_d * volume) * m[s]
    plan = TradePlan(steps=tuple(steps), planned_profit=cash_buy + cash_sell)
    validate_plan(plan, battery)
    return plan


def _soc_grid(battery: BatteryConfig, soc_steps: int) -> np.ndarray:
    if soc_steps < 2:
        raise ConfigError(f"soc_steps must be >= 2, got {soc_steps}")
    return np.linspace(battery.min_soc, battery.capacity, soc_steps)


def _start_index(grid: np.ndarray, battery: BatteryConfig) -> int:
    hits = np.nonzero(np.abs(grid - battery.initial_soc) <= _EPS)[0]
    if hits.size == 0:
        raise ConfigError(
            f"initial_soc {battery.initial_soc} does not sit on the "
            f"{grid.size}-point state-of-charge grid"
        )
    return int(hits[0])


def _cash_matrix(
    buy_prices: np.ndarray,
    sell_prices: np.ndarray,
    battery: BatteryConfig,
    grid: np.ndarray,
) -> np.ndarray:
    """cash[t, i, j] = immediate cash flow of moving the state of charge from
    grid[i] to grid[j] during period t; -inf when infeasible."""
    H = buy_prices.shape[0]
    S = grid.size
    cash = np.full((H, S, S), float("-inf"))
    for t in range(H):
        for i in range(S):
            cash[t, i, i] = 0.0
            for j in range(i + 1, S):
                e = grid[j] - grid[i]
                if e > battery.max_charge + _EPS or e <= 1e-12:
                    continue
                cash[t, i, j] = -(e / battery.eta_c) * buy_prices[t]
            for j in range(i - 1, -1, -1):
                e = grid[i] - grid[j]
                if e > battery.max_discharge + _EPS or e <= 1e-12:
                    continue
                cash[t, i, j] = (battery.eta_d * e) * sell_prices[t]
    return cash


def _candidate_order(i: int, S: int) -> list[int]:
    """Idle first, then charges small-to-large, then discharges
    small-to-large; ties in plan value resolve in this order."""
    return [i] + list(range(i + 1, S)) + list(range(i - 1, -1, -1))


def _steps_from_path(path: list[int], grid: np.ndarray) -> tuple[PlanStep, ...]:
    steps = []
    i = path[0]
    for j in path[1:]:
        if j == i:
            steps.append(IDLE)
        elif j > i:
            steps.append(PlanStep("charge", float(grid[j] - grid[i])))
        else:
            steps.append(PlanStep("discharge", float(grid[i] - grid[j])))
        i = j
    return tuple(steps)


def ts2_plan(
    forecast: QuantileForecast,
    battery: BatteryConfig,
    soc_steps: int = 11,
    buy_level: float = 0.5,
    sell_level: float = 0.5,
) -> TradePlan:
    """Multi-period schedule by dynamic programming over the discretized
    state of charge, maximizing total cash at the forecast prices. Buying and
    selling can be priced at different quantile levels as a risk knob; both
    default to the median."""
    H = forecast.n_steps
    if H < 1:
        raise ConfigError("cannot plan over an empty horizon")
    grid = _soc_grid(battery, soc_steps)
    start = _start_index(grid, battery)
    buy = _median_column(forecast, buy_level)
    sell = _median_column(forecast, sell_level)
    cash = _cash_matrix(buy, sell, battery, grid)
    S = grid.size

    V = np.zeros(S)
    choice = np.zeros((H, S), dtype=np.int64)
    for t in range(H - 1, -1, -1):
        V_next = V
        V = np.empty(S)
        for i in range(S):
            best_v = float("-inf")
            best_j = i
            for j in _candidate_order(i, S):
                c = cash[t, i, j]
                if c == float("-inf"):
                    continue
                v = c + V_next[j]
                if v > best_v:
                    best_v = v
                    best_j = j
            V[i] = best_v
            choice[t, i] = best_j

    path = [start]
    i = start
    for t in range(H):
        i = int(choice[t, i])
        path.append(i)
    plan = TradePlan(steps=_steps_from_path(path, grid), planned_profit=float(V[start]))
    validate_plan(plan, battery)
    return plan


def brute_force_plan(
    prices, battery: BatteryConfig, soc_steps: int = 11
) -> TradePlan:
    """Exhaustive schedule search on the same state grid, candidate order,
    and cash arithmetic as the DP planner; the independent oracle for it."""
    p = np.asarray(prices, dtype=np.float64)
    H = p.shape[0]
    if H < 1:
        raise ConfigError("cannot plan over an empty horizon")
    if H > 8:
        raise ConfigError(f"exhaustive search refuses horizons above 8, got {H}")
    grid = _soc_grid(battery, soc_steps)
    if float(grid.size) ** H > 2e6:
        raise ConfigError(
            f"exhaustive search over {grid.size}^{H} schedules is too large"
        )
    start = _start_index(grid, battery)
    cash = _cash_matrix(p, p, battery, grid)
    S = grid.size

    def explore(t: int, i: int) -> tuple[float, list[int]]:
        if t == H:
            return 0.0, []
        best = None
        for j in _candidate_order(i, S):
            c = cash[t, i, j]
            if c == float("-inf"):
                continue
            sub_profit, sub_path = explore(t + 1, j)
            total = c + sub_profit
            if best is None or total > best[0]:
                best = (total, [j] + sub_path)
        return best

    profit, tail = explore(0, start)
    plan = TradePlan(
        steps=_steps_from_path([start] + tail, grid), planned_profit=float(profit)
    )
    validate_plan(plan, battery)
    return plan


def settle(plan: TradePlan, realized, battery: BatteryConfig) -> TradeLedger:
    """Execute a plan against realized prices under the battery-side energy
    convention; returns executed records and total profit."""
    prices = np.asarray(realized, dtype=np.float64)
    if prices.shape[0] < plan.horizon:
        raise DataError(
            f"{prices.shape[0]} realized prices cannot settle a "
            f"{plan.horizon}-period plan"
        )
    soc = battery.initial_soc
    records: list[TradeRecord] = []
    profit = 0.0
    for t, step in enumerate(plan.steps):
        if step.action == "idle":
            continue
        price = float(prices[t])
        if step.action == "charge":
            if step.energy > battery.max_charge + _EPS:
                raise FeasibilityError(f"period {t}: charge beats rate limit")
            soc += step.energy
            if soc > battery.capacity + _EPS:
                raise FeasibilityError(f"period {t}: state of charge above capacity")
            grid_energy = step.energy / battery.eta_c
            flow = -grid_energy * price
            side = "buy"
        else:
            if step.energy > battery.max_discharge + _EPS:
                raise FeasibilityError(f"period {t}: discharge beats rate limit")
            soc -= step.energy
            if soc < battery.min_soc - _EPS:
                raise FeasibilityError(f"period {t}: state of charge below minimum")
            grid_energy = battery.eta_d * step.energy
            flow = grid_energy * price
            side = "sell"
        profit += flow
        records.append(
            TradeRecord(
                period=t,
                side=side,
                grid_energy=grid_energy,
                price=price,
                cash=flow,
                soc_after=soc,
            )
        )
    return TradeLedger(records=tuple(records), profit=profit)
