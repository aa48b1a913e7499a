"""Shared domain types and the hub-and-spoke world network."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Mapping, Optional

import numpy as np

US, CN, RU = 0, 1, 2
CORE_NODES = (US, CN, RU)


class Currency(IntEnum):
    USD = 0
    CNY = 1
    RUB = 2


class ConfigError(ValueError):
    """Invalid simulation configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_PROBABILITIES = (
    "p_inherent_scale", "p_neighbor_scale", "neighbor_threshold", "switch_threshold",
    "ms_share", "fer_share", "initial_dollar_share", "money_printed_share",
)


@dataclass(frozen=True)
class SimConfig:
    """Every constant of the currency-network model.

    Monetary amounts are in US dollars, growth and interest rates are annual,
    and time is counted in months from January of the first historical year.
    """

    n_countries: int = 195
    horizon_months: int = 300
    decay_horizon: int = 180
    p_inherent_scale: float = 0.02
    p_neighbor_scale: float = 0.008
    neighbor_threshold: float = 0.25
    switch_threshold: float = 0.5
    pareto_shape: float = 2.5
    pareto_scale: float = 0.5e12
    growth_us: float = 0.02
    growth_cn: float = 0.03
    growth_ru: float = 0.01
    growth_periph: float = 0.02
    min_degree: int = 10
    runs: int = 100
    base_inflation: float = 0.02
    # None means money_printed_share * current US GDP each month
    money_printed_per_step: Optional[float] = None
    money_printed_share: float = 0.002
    debt_interest_rate: float = 0.05
    initial_debt_interest: float = 0.196e12
    ms_share: float = 0.017
    fer_share: float = 0.1
    initial_dollar_share: float = 0.56
    master_seed: int = 20100101
    # "stay": no switch until a CNY/RUB neighbour exists; "uniform": coin flip
    switch_fallback: str = "stay"
    # "mean_d": average dedollarization level; "count": share of countries with d > 0
    inflation_driver: str = "mean_d"

    def __post_init__(self):
        for name in ("n_countries", "horizon_months", "decay_horizon", "min_degree", "runs",
                     "master_seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(name, f"expected an integer, got {value!r}")
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(f.name, "must be finite")
        for name in _PROBABILITIES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"must lie in [0, 1], got {value}")
        if self.n_countries < 3:
            raise ConfigError("n_countries", "needs at least the three core nodes")
        if self.horizon_months < 0:
            raise ConfigError("horizon_months", "must be >= 0")
        if self.decay_horizon < 1:
            raise ConfigError("decay_horizon", "must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs", "must be >= 1")
        if self.pareto_shape <= 1.0:
            raise ConfigError("pareto_shape", "must exceed 1")
        if self.pareto_scale <= 0.0:
            raise ConfigError("pareto_scale", "must be positive")
        if not 0 <= self.min_degree <= self.n_countries - 1:
            raise ConfigError("min_degree", "must lie in [0, n_countries - 1]")
        for name in ("growth_us", "growth_cn", "growth_ru", "growth_periph"):
            if getattr(self, name) <= -1.0:
                raise ConfigError(name, "growth rate must exceed -1")
        if self.base_inflation < 0:
            raise ConfigError("base_inflation", "must be >= 0")
        if self.money_printed_per_step is not None and self.money_printed_per_step < 0:
            raise ConfigError("money_printed_per_step", "must be >= 0")
        if self.debt_interest_rate < 0:
            raise ConfigError("debt_interest_rate", "must be >= 0")
        if self.initial_debt_interest < 0:
            raise ConfigError("initial_debt_interest", "must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
        if self.switch_fallback not in ("stay", "uniform"):
            raise ConfigError("switch_fallback", "expected 'stay' or 'uniform'")
        if self.inflation_driver not in ("mean_d", "count"):
            raise ConfigError("inflation_driver", "expected 'mean_d' or 'count'")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SimConfig":
        """Build a config from a flat mapping; unknown keys are rejected."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        kwargs = {}
        for key, value in values.items():
            default = known[key].default
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:  # pragma: no cover - dataclass signature errors
            raise ConfigError("config", str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


class Graph:
    """Undirected simple graph stored as sorted adjacency lists."""

    def __init__(self, n: int, edges=()):
        self.n = int(n)
        self._adj: list[set[int]] = [set() for _ in range(self.n)]
        for i, j in edges:
            self.add_edge(int(i), int(j))

    def add_edge(self, i: int, j: int) -> None:
        if i == j:
            raise ValueError(f"self-loop on node {i}")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
        self._adj[i].add(j)
        self._adj[j].add(i)

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._adj[i]

    def neighbors(self, i: int) -> list[int]:
        return sorted(self._adj[i])

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._adj], dtype=int)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in sorted(self._adj[i]) if i < j]

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for j in self._adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n

    def adjacency_matrix(self, exclude: tuple[int, ...] = ()) -> np.ndarray:
        """Dense 0/1 matrix; columns listed in ``exclude`` are zeroed."""
        a = np.zeros((self.n, self.n))
        for i, j in self.edges():
            a[i, j] = a[j, i] = 1.0
        for k in exclude:
            a[:, k] = 0.0
        return a

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.edges() == other.edges()

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={len(self.edges())})"


@dataclass
class CountryState:
    id: int
    gdp: float
    d: float
    currency: Currency
    dollar_holding: float
    dollars_received: float


@dataclass
class WorldState:
    """Mutable state of one run. Per-country quantities are parallel arrays."""

    graph: Graph
    gdp: np.ndarray
    d: np.ndarray
    currency: np.ndarray
    h: np.ndarray
    dollars_received: np.ndarray
    t: int = 0
    trigger: Optional[int] = None
    us_debt_interest: float = 0.0
    cumulative_printed: float = 0.0
    fer_dollar_share: float = 0.0
    # reserve stocks are fixed at the run-start GDP allocation
    reserve_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.reserve_weights is None:
            self.reserve_weights = np.asarray(self.gdp, dtype=float).copy()

    @classmethod
    def initial(cls, graph: Graph, gdp: np.ndarray, config: SimConfig) -> "WorldState":
        n = graph.n
        currency = np.full(n, int(Currency.USD), dtype=np.int8)
        currency[CN] = int(Currency.CNY)
        currency[RU] = int(Currency.RUB)
        h = np.full(n, config.initial_dollar_share)
        gdp = np.asarray(gdp, dtype=float).copy()
        return cls(
            graph=graph, gdp=gdp, d=np.zeros(n), currency=currency, h=h,
            dollars_received=np.zeros(n),
            us_debt_interest=config.initial_debt_interest,
            fer_dollar_share=float(np.dot(gdp, h) / gdp.sum()),
        )

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def dedollarized_fraction(self) -> float:
        return float(np.count_nonzero(self.d > 0)) / self.n

    @property
    def mean_dedollarization(self) -> float:
        return float(self.d.mean())

    def country(self, i: int) -> CountryState:
        return CountryState(i, float(self.gdp[i]), float(self.d[i]), Currency(int(self.currency[i])),
                            float(self.h[i]), float(self.dollars_received[i]))


def build_network(config: SimConfig, gdps, rng: np.random.Generator) -> Graph:
    """Star around node 0 plus GDP-biased peer edges up to the degree floor.

    Nodes are visited in ascending order. A node below the floor draws peers
    without replacement among non-adjacent non-US nodes, each with probability
    proportional to its GDP. No edges are added beyond the floor.
    """
    n = config.n_countries
    gdps = np.asarray(gdps, dtype=float)
    if n < 3:
        raise ValueError("network needs the three core nodes")
    if gdps.shape != (n,):
        raise ValueError(f"expected {n} GDP values, got shape {gdps.shape}")
    if np.any(gdps <= 0) or not np.all(np.isfinite(gdps)):
        raise ValueError("GDP values must be positive and finite")

    g = Graph(n, ((US, i) for i in range(1, n)))
    adjacent = np.zeros((n, n), dtype=bool)
    adjacent[US, :] = adjacent[:, US] = True
    floor = min(config.min_degree, n - 1)
    for i in range(n):
        need = floor - g.degree(i)
        if need <= 0:
            continue
        open_ = ~adjacent[i]
        open_[i] = False
        cand = np.flatnonzero(open_)
        w = gdps[cand]
        # successive GDP-weighted draws, each excluding the peers already taken
        for j in rng.choice(cand, size=need, replace=False, p=w / w.sum()):
            g.add_edge(i, int(j))
            adjacent[i, j] = adjacent[j, i] = True
    return g
