"""GDP paths, military-spending proxy, money printing and the inflation feedback."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .simcore import CORE_NODES, CN, RU, US, Currency, SimConfig, WorldState

HISTORICAL = "historical+extrapolated"
PARETO = "pareto-drawn"


@dataclass
class GdpSeries:
    node: int
    values: np.ndarray
    source: str


def annual_to_monthly_factor(g: float) -> float:
    if g <= -1.0:
        raise ValueError(f"annual growth rate must exceed -1, got {g}")
    return (1.0 + g) ** (1.0 / 12.0)


def interpolate_monthly(annual: Sequence[tuple[int, float]]) -> np.ndarray:
    """Log-linear monthly path through annual points.

    Month ``k`` between consecutive values ``a`` and ``b`` is ``a * (b/a)**(k/12)``;
    the result starts at the first annual value and ends at the last one, so it
    has ``12 * (len(annual) - 1) + 1`` entries.
    """
    pts = sorted((int(y), float(v)) for y, v in annual)
    if len(pts) < 2:
        raise ValueError("need at least two annual points to interpolate")
    years = [y for y, _ in pts]
    if len(set(years)) != len(years):
        raise ValueError(f"duplicate years in annual series: {years}")
    if any(v <= 0 for _, v in pts):
        raise ValueError("annual values must be positive")
    out = []
    for (y0, a), (y1, b) in zip(pts, pts[1:]):
        months = 12 * (y1 - y0)
        k = np.arange(months)
        out.append(a * (b / a) ** (k / months))
    out.append(np.array([pts[-1][1]]))
    return np.concatenate(out)


def extend_series(values: np.ndarray, factor: float, length: int) -> np.ndarray:
    """Truncate or extend ``values`` to ``length`` months at a constant monthly factor."""
    values = np.asarray(values, dtype=float)
    if length <= len(values):
        return values[:length].copy()
    extra = values[-1] * factor ** np.arange(1, length - len(values) + 1)
    return np.concatenate([values, extra])


def load_core_history(path=None) -> dict[int, list[tuple[int, float]]]:
    """Read node_id,year,gdp_usd rows (``#`` lines are comments).

    Without a path the bundled approximate PPP series for nodes 0-2 is used.
    """
    if path is None:
        text = resources.files("reserve_shift").joinpath("data/core_gdp.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    missing = {"node_id", "year", "gdp_usd"} - set(rows.fieldnames or ())
    if missing:
        raise ValueError(f"core GDP CSV lacks columns {sorted(missing)}")
    history: dict[int, list[tuple[int, float]]] = {}
    for row in rows:
        history.setdefault(int(row["node_id"]), []).append((int(row["year"]), float(row["gdp_usd"])))
    return history


def init_gdps(config: SimConfig, history: Optional[Mapping[int, Sequence[tuple[int, float]]]],
              rng: np.random.Generator) -> list[GdpSeries]:
    """Monthly GDP paths for every node over ``max(horizon, 1)`` months.

    Core nodes follow their interpolated history and then grow at their fixed
    rates; peripheral nodes start from a Pareto draw ``x_min * U**(-1/alpha)``
    with ``U`` in (0, 1] and grow at the peripheral rate.
    """
    length = max(config.horizon_months, 1)
    if not history:
        history = load_core_history()
    rates = {US: config.growth_us, CN: config.growth_cn, RU: config.growth_ru}
    series = []
    for node in CORE_NODES:
        if node not in history:
            raise ValueError(f"no GDP history for core node {node}")
        monthly = interpolate_monthly(history[node])
        values = extend_series(monthly, annual_to_monthly_factor(rates[node]), length)
        series.append(GdpSeries(node, values, HISTORICAL))

    n_periph = config.n_countries - len(CORE_NODES)
    u = 1.0 - rng.random(n_periph)
    start = config.pareto_scale * u ** (-1.0 / config.pareto_shape)
    growth = annual_to_monthly_factor(config.growth_periph) ** np.arange(length)
    for k, x0 in enumerate(start):
        series.append(GdpSeries(len(CORE_NODES) + k, x0 * growth, PARETO))
    return series


def gdp_matrix(series: Sequence[GdpSeries]) -> np.ndarray:
    """Stack series into a (months, nodes) array ordered by node id."""
    ordered = sorted(series, key=lambda s: s.node)
    return np.column_stack([s.values for s in ordered])


def military_spending(gdp, gamma: float):
    return gamma * gdp


def money_printed(config: SimConfig, gdp_us: float) -> float:
    if config.money_printed_per_step is not None:
        return config.money_printed_per_step
    return config.money_printed_share * gdp_us


def monetary_expansion(state: WorldState, m_printed: float, config: SimConfig) -> np.ndarray:
    """Hand ``m_printed`` dollars to USD-labelled countries pro rata to GDP.

    Updates receipts, the printed total and the US debt-interest bill in place
    and returns this step's receipts.
    """
    if m_printed < 0:
        raise ValueError("printed money must be non-negative")
    dollarized = state.currency == int(Currency.USD)
    weights = np.where(dollarized, state.gdp, 0.0)
    receipts = m_printed * weights / weights.sum()
    state.dollars_received += receipts
    state.cumulative_printed += m_printed
    state.us_debt_interest += config.debt_interest_rate * m_printed
    return receipts


def effective_inflation(f: float, base: float) -> float:
    if not 0.0 <= f < 1.0:
        raise ValueError(f"dedollarized fraction must lie in [0, 1), got {f}")
    return base / (1.0 - f)
