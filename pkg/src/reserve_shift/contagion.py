"""Dedollarization cascade: trigger, decay envelope, shocks, neighbour influence, switching."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .econdyn import military_spending
from .simcore import CORE_NODES, US, Currency, SimConfig, WorldState

INHERENT = "inherent"
NEIGHBOR = "neighbor"
SWITCH = "switch"

EVENT_COLUMNS = ("month", "node", "kind", "magnitude", "new_currency")


@dataclass(frozen=True)
class CascadeEvent:
    month: int
    node: int
    kind: str
    magnitude: float = 0.0
    new_currency: Optional[Currency] = None


def detect_trigger(gdp_us, gdp_cn) -> Optional[int]:
    """First month in which China's GDP strictly exceeds US GDP, else None."""
    us = np.asarray(gdp_us, dtype=float)
    cn = np.asarray(gdp_cn, dtype=float)
    if us.shape != cn.shape:
        raise ValueError(f"series lengths differ: {us.shape} vs {cn.shape}")
    above = np.flatnonzero(cn > us)
    return int(above[0]) if above.size else None


def decay(t: int, t_star: int, horizon: int) -> float:
    if horizon < 1:
        raise ValueError("decay horizon must be >= 1")
    value = 1.0 - max(0, t - t_star) / horizon
    return min(1.0, max(0.0, value))


_NONCORE_START = len(CORE_NODES)


def _apply_increments(state: WorldState, nodes: np.ndarray, kind: str, fer_share: float,
                      rng: np.random.Generator) -> list[CascadeEvent]:
    u = rng.uniform(0.0, fer_share, size=nodes.size)
    state.d[nodes] = np.minimum(1.0, state.d[nodes] + u)
    state.h[nodes] = np.maximum(0.0, state.h[nodes] - u)
    return [CascadeEvent(state.t, int(i), kind, float(x)) for i, x in zip(nodes, u)]


def inherent_shock_step(state: WorldState, delta: float, config: SimConfig,
                        rng: np.random.Generator) -> list[CascadeEvent]:
    """Idiosyncratic shocks: each non-core node fires with probability ``p0 * delta``.

    A firing node gains ``u ~ U(0, f_t)`` in dedollarization and loses the same
    ``u`` of its dollar holding, both clamped to [0, 1].
    """
    p = config.p_inherent_scale * delta
    if p <= 0.0:
        return []
    fire = rng.random(state.n - _NONCORE_START) < p
    nodes = np.flatnonzero(fire) + _NONCORE_START
    return _apply_increments(state, nodes, INHERENT, state.fer_dollar_share, rng)


def neighbor_mean_d(state: WorldState, adjacency: Optional[np.ndarray] = None) -> np.ndarray:
    """Mean neighbour dedollarization ignoring the US hub; 0 when nothing remains."""
    if adjacency is None:
        adjacency = state.graph.adjacency_matrix(exclude=(US,))
    deg = adjacency.sum(axis=1)
    total = adjacency @ state.d
    return np.divide(total, deg, out=np.zeros_like(total), where=deg > 0)


def debt_gate_open(state: WorldState, config: SimConfig) -> bool:
    return state.us_debt_interest > military_spending(state.gdp[US], config.ms_share)


def neighbor_influence_step(state: WorldState, delta: float, config: SimConfig,
                            rng: np.random.Generator,
                            adjacency: Optional[np.ndarray] = None) -> list[CascadeEvent]:
    p = config.p_neighbor_scale * delta
    if p <= 0.0 or not debt_gate_open(state, config):
        return []
    dbar = neighbor_mean_d(state, adjacency)[_NONCORE_START:]
    eligible = dbar >= config.neighbor_threshold
    if not eligible.any():
        return []
    fire = (rng.random(state.n - _NONCORE_START) < p) & eligible
    nodes = np.flatnonzero(fire) + _NONCORE_START
    return _apply_increments(state, nodes, NEIGHBOR, state.fer_dollar_share, rng)


def _choose_currency(state: WorldState, i: int, config: SimConfig,
                     rng: np.random.Generator) -> Optional[Currency]:
    labels = state.currency[state.graph.neighbors(i)]
    counts = np.bincount(labels, minlength=3)[1:]
    if counts.sum() == 0:
        if config.switch_fallback == "stay":
            return None
        return Currency.CNY if rng.random() < 0.5 else Currency.RUB
    if counts[0] == counts[1]:
        return Currency.CNY if rng.random() < 0.5 else Currency.RUB
    return Currency.CNY if counts[0] > counts[1] else Currency.RUB


def currency_switch_step(state: WorldState, config: SimConfig,
                         rng: np.random.Generator) -> list[CascadeEvent]:
    """USD-labelled non-core nodes above the switch threshold adopt the modal
    alternative currency among their neighbours.

    Passes repeat within the month until no node switches, so adoption chains
    settle in the month they start.
    """
    events = []
    while True:
        usd = state.currency == int(Currency.USD)
        over = state.d > config.switch_threshold
        candidates = np.flatnonzero(usd & over)
        candidates = candidates[candidates >= _NONCORE_START]
        switched = False
        for i in candidates:
            choice = _choose_currency(state, int(i), config, rng)
            if choice is None:
                continue
            state.currency[i] = int(choice)
            events.append(CascadeEvent(state.t, int(i), SWITCH, 0.0, choice))
            switched = True
        if not switched:
            return events


def update_fer_share(state: WorldState) -> float:
    """Reserve-weighted dollar share; a uniform FER/GDP ratio cancels out."""
    w = state.reserve_weights
    state.fer_dollar_share = float(np.dot(w, state.h) / w.sum())
    return state.fer_dollar_share


def write_events_csv(events: Iterable[CascadeEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in events:
            cur = e.new_currency.name if e.new_currency is not None else ""
            w.writerow([e.month, e.node, e.kind, repr(float(e.magnitude)), cur])


def read_events_csv(path) -> list[CascadeEvent]:
    with open(path, newline="") as fh:
        return [CascadeEvent(int(r["month"]), int(r["node"]), r["kind"], float(r["magnitude"]),
                             Currency[r["new_currency"]] if r["new_currency"] else None)
                for r in csv.DictReader(fh)]
