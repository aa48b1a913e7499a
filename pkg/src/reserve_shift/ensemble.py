"""Single runs, Monte Carlo ensembles, per-currency subgraph statistics and snapshots."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import contagion
from .econdyn import effective_inflation, gdp_matrix, init_gdps, monetary_expansion, money_printed
from .simcore import CORE_NODES, CN, US, Currency, Graph, SimConfig, WorldState, build_network

TRAJECTORY_COLUMNS = (
    "month", "mean_d", "inflation", "share_usd", "share_cny", "share_rub",
    "debt_interest", "fer_dollar_share",
    # auxiliary columns
    "dedollarized_fraction", "share_usd_gdp", "share_cny_gdp", "share_rub_gdp",
)
SERIES = TRAJECTORY_COLUMNS[1:]

CURRENCY_COLORS = {Currency.USD: "gray", Currency.CNY: "red", Currency.RUB: "blue"}


def run_rng(master_seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for one run, derived from (master seed, run index)."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(run_index,)))


@dataclass
class Trajectory:
    series: dict[str, np.ndarray]
    dollars_received: np.ndarray
    trigger: Optional[int] = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.series[name]

    def __len__(self) -> int:
        return len(self.series["month"])

    def to_csv(self) -> str:
        return _table_csv(TRAJECTORY_COLUMNS, [self.series[c] for c in TRAJECTORY_COLUMNS])


@dataclass
class Snapshot:
    month: int
    graph: Graph
    currency: np.ndarray
    d: np.ndarray


@dataclass
class SimulationRun:
    trajectory: Trajectory
    events: list
    state: WorldState
    snapshots: list[Snapshot] = field(default_factory=list)


def snapshot_months(horizon: int) -> list[int]:
    if horizon <= 0:
        return []
    months = list(range(0, horizon, 12))
    if months[-1] != horizon - 1:
        months.append(horizon - 1)
    return months


def _shares(state: WorldState) -> tuple[np.ndarray, np.ndarray]:
    labels = state.currency[len(CORE_NODES):]
    gdp = state.gdp[len(CORE_NODES):]
    counts = np.bincount(labels, minlength=len(Currency)).astype(float)
    weights = np.bincount(labels, weights=gdp, minlength=len(Currency))
    total = max(labels.size, 1)
    return counts / total, weights / max(gdp.sum(), np.finfo(float).tiny)


def run_simulation(config: SimConfig, run_index: int = 0, history=None,
                   record_snapshots: bool = False,
                   observer: Optional[Callable] = None) -> SimulationRun:
    """Run one realisation of the model.

    Each month: GDP growth, monetary expansion, then (from the trigger on)
    inherent shocks, neighbour influence and currency switches, then metrics.
    The stream is a pure function of ``(config.master_seed, run_index)``.
    ``observer(state, month_events, receipts, printed)`` is called at the end
    of every month.
    """
    rng = run_rng(config.master_seed, run_index)
    gdp = gdp_matrix(init_gdps(config, history, rng))
    graph = build_network(config, gdp[0], rng)
    state = WorldState.initial(graph, gdp[0], config)
    trigger = contagion.detect_trigger(gdp[:, US], gdp[:, CN]) if config.horizon_months else None
    state.trigger = trigger
    adjacency = graph.adjacency_matrix(exclude=(US,))
    snap_at = set(snapshot_months(config.horizon_months)) if record_snapshots else set()

    horizon = config.horizon_months
    rec = {c: np.zeros(horizon) for c in TRAJECTORY_COLUMNS}
    events: list[contagion.CascadeEvent] = []
    snapshots = []
    for t in range(horizon):
        state.t = t
        state.gdp[:] = gdp[t]
        printed = money_printed(config, state.gdp[US])
        receipts = monetary_expansion(state, printed, config)
        month_events = []
        if trigger is not None and t >= trigger:
            delta = contagion.decay(t, trigger, config.decay_horizon)
            month_events += contagion.inherent_shock_step(state, delta, config, rng)
            month_events += contagion.neighbor_influence_step(state, delta, config, rng, adjacency)
            month_events += contagion.currency_switch_step(state, config, rng)
        events += month_events
        contagion.update_fer_share(state)

        f = state.mean_dedollarization if config.inflation_driver == "mean_d" \
            else state.dedollarized_fraction
        counts, weights = _shares(state)
        rec["month"][t] = t
        rec["mean_d"][t] = state.mean_dedollarization
        rec["inflation"][t] = effective_inflation(f, config.base_inflation)
        rec["share_usd"][t], rec["share_cny"][t], rec["share_rub"][t] = counts
        rec["share_usd_gdp"][t], rec["share_cny_gdp"][t], rec["share_rub_gdp"][t] = weights
        rec["debt_interest"][t] = state.us_debt_interest
        rec["fer_dollar_share"][t] = state.fer_dollar_share
        rec["dedollarized_fraction"][t] = state.dedollarized_fraction
        if t in snap_at:
            snapshots.append(Snapshot(t, graph, state.currency.copy(), state.d.copy()))
        if observer is not None:
            observer(state, month_events, receipts, printed)

    traj = Trajectory(rec, state.dollars_received.copy(), trigger)
    return SimulationRun(traj, events, state, snapshots)


@dataclass
class EnsembleStats:
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    runs: int
    master_seed: int
    triggers: list = field(default_factory=list)

    def to_csv(self) -> str:
        cols = ["month"]
        data = [self.mean["month"]]
        for name in SERIES:
            cols += [f"{name}_mean", f"{name}_std"]
            data += [self.mean[name], self.std[name]]
        return _table_csv(cols, data)


def aggregate(trajectories: Mapping[int, Trajectory], master_seed: int) -> EnsembleStats:
    """Pointwise mean and population std, reduced in run-index order."""
    if not trajectories:
        raise ValueError("no trajectories to aggregate")
    order = sorted(trajectories)
    mean, std = {}, {}
    for name in TRAJECTORY_COLUMNS:
        stack = np.vstack([trajectories[i][name] for i in order])
        mean[name] = stack.mean(axis=0)
        std[name] = stack.std(axis=0)
    return EnsembleStats(mean, std, len(order), master_seed, [trajectories[i].trigger for i in order])


def _run_trajectory(args) -> Trajectory:
    config, index, history = args
    return run_simulation(config, index, history).trajectory


def monte_carlo(config: SimConfig, history=None, jobs: int = 1,
                indices: Optional[Sequence[int]] = None) -> EnsembleStats:
    """``config.runs`` independent runs aggregated pointwise.

    Results do not depend on ``jobs`` or on the order in which runs finish.
    """
    indices = list(range(config.runs)) if indices is None else list(indices)
    work = [(config, i, history) for i in indices]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trajs = list(pool.map(_run_trajectory, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        trajs = [_run_trajectory(w) for w in work]
    return aggregate(dict(zip(indices, trajs)), config.master_seed)


@dataclass(frozen=True)
class SubgraphMetrics:
    node_count: int
    avg_degree: float
    global_clustering: float


def subgraph_metrics(graph: Graph, labels, currency) -> SubgraphMetrics:
    """Size, average degree and transitivity of the subgraph induced by one currency."""
    labels = np.asarray(labels)
    if labels.shape != (graph.n,):
        raise ValueError("need one label per node")
    nodes = set(np.flatnonzero(labels == int(currency)).tolist())
    if not nodes:
        return SubgraphMetrics(0, 0.0, 0.0)
    adj = {i: set(graph.neighbors(i)) & nodes for i in nodes}
    n_edges = sum(len(a) for a in adj.values()) // 2
    # each triangle is counted once per vertex below, i.e. three times
    closed = sum(1 for i in nodes for j, k in combinations(sorted(adj[i]), 2) if k in adj[j])
    triples = sum(len(a) * (len(a) - 1) // 2 for a in adj.values())
    clustering = closed / triples if triples else 0.0
    return SubgraphMetrics(len(nodes), 2.0 * n_edges / len(nodes), clustering)


def snapshot_of(state: WorldState) -> Snapshot:
    return Snapshot(state.t, state.graph, state.currency.copy(), state.d.copy())


def snapshot_to_json(snap: Snapshot) -> str:
    doc = {
        "month": int(snap.month),
        "nodes": [{"id": i, "currency": Currency(int(c)).name, "d": float(x)}
                  for i, (c, x) in enumerate(zip(snap.currency, snap.d))],
        "edges": [[i, j] for i, j in snap.graph.edges()],
    }
    return json.dumps(doc, indent=1) + "\n"


def snapshot_to_dot(snap: Snapshot) -> str:
    lines = [f"graph world_{int(snap.month)} {{", "  node [style=filled];"]
    for i, (c, x) in enumerate(zip(snap.currency, snap.d)):
        cur = Currency(int(c))
        lines.append(f'  {i} [currency="{cur.name}", d="{float(x)!r}", '
                     f'fillcolor="{CURRENCY_COLORS[cur]}"];')
    lines += [f"  {i} -- {j};" for i, j in snap.graph.edges()]
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_snapshot(snapshot, path, fmt: Optional[str] = None) -> Path:
    """Write a snapshot (or a live WorldState) as JSON node-link or DOT."""
    if isinstance(snapshot, WorldState):
        snapshot = snapshot_of(snapshot)
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    if fmt == "json":
        text = snapshot_to_json(snapshot)
    elif fmt == "dot":
        text = snapshot_to_dot(snapshot)
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    path.write_text(text)
    return path


def load_snapshot(path, fmt: Optional[str] = None) -> Snapshot:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    text = path.read_text()
    if fmt == "json":
        doc = json.loads(text)
        nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
        graph = Graph(len(nodes), (tuple(e) for e in doc["edges"]))
        currency = np.array([Currency[nd["currency"]] for nd in nodes], dtype=np.int8)
        d = np.array([float(nd["d"]) for nd in nodes])
        return Snapshot(int(doc.get("month", 0)), graph, currency, d)
    if fmt == "dot":
        return _parse_dot(text)
    raise ValueError(f"unknown snapshot format {fmt!r}")


def _parse_dot(text: str) -> Snapshot:
    import re

    header = re.search(r"graph\s+world_(\d+)", text)
    node_re = re.compile(r'^\s*(\d+)\s*\[currency="(\w+)",\s*d="([^"]+)"')
    edge_re = re.compile(r"^\s*(\d+)\s*--\s*(\d+)\s*;")
    labels, d, edges = {}, {}, []
    for line in text.splitlines():
        m = node_re.match(line)
        if m:
            labels[int(m[1])] = Currency[m[2]]
            d[int(m[1])] = float(m[3])
            continue
        m = edge_re.match(line)
        if m:
            edges.append((int(m[1]), int(m[2])))
    n = len(labels)
    return Snapshot(int(header[1]) if header else 0, Graph(n, edges),
                    np.array([labels[i] for i in range(n)], dtype=np.int8),
                    np.array([d[i] for i in range(n)]))


def _table_csv(columns, data) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in zip(*data):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def read_table_csv(text: str) -> dict[str, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return {}
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[k]) for r in body]) for k, name in enumerate(header)}
