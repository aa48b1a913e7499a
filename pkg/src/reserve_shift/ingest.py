"""Yearly reserve-currency panel from COFER-style and World-Bank-style CSV files.

Canonical input schemas (UTF-8, header row, ``#`` lines ignored)::

    cofer.csv  currency,year,quarter,claims_usd_billions
    ms.csv     issuer,year,ms_usd_billions
    gdp.csv    issuer,year,gdp_usd_billions
    gold.csv   issuer,year,gold_usd_billions
    trade.csv  issuer,year,exports_usd_billions,imports_usd_billions
    m2.csv     issuer,year,m2_pct_gdp

Converting real downloads: keep allocated-reserve claims by currency from
COFER (one row per quarter), map country names to the issuer codes of
``ISSUER_OF``, express money amounts in billions of US dollars and the
broad-money ratio in percent of GDP. The euro area enters as the single
issuer ``EU``; everything COFER does not break out is the issuer ``OTHER``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .econometrics import DesignMatrix

ISSUER_OF = {
    "USD": "US", "EUR": "EU", "JPY": "JP", "GBP": "GB", "CNY": "CN", "RMB": "CN",
    "CAD": "CA", "AUD": "AU", "CHF": "CH", "OTHER": "OTHER",
}
WESTERN = ("AU", "CA", "CH", "EU", "GB", "JP", "US")
RMB_ISSUER = "CN"
OTHER_ISSUER = "OTHER"
YEAR_RANGE = (2003, 2023)

PANEL_COLUMNS = ("year", "issuer", "ln_fer", "ln_ms", "ln_gdp", "ln_gold", "ln_trade", "ln_m2",
                 "dv_rmb", "dv_other")
SOURCE_FILES = ("cofer.csv", "ms.csv", "gdp.csv", "gold.csv", "trade.csv", "m2.csv")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    name: str
    response: str
    predictors: tuple[str, ...]
    issuers: Optional[tuple[str, ...]] = None  # None keeps every issuer

    @property
    def required(self) -> tuple[str, ...]:
        return (self.response, *(p for p in self.predictors if not p.startswith("dv_")))


MODELS = {
    "simple_gdp": ModelSpec("simple_gdp", "ln_fer", ("ln_gdp", "dv_rmb", "dv_other")),
    "simple_ms": ModelSpec("simple_ms", "ln_fer", ("ln_ms", "dv_rmb", "dv_other")),
    "simple_trade": ModelSpec("simple_trade", "ln_fer", ("ln_trade", "dv_rmb", "dv_other")),
    # every unit but the aggregate: the Others dummy would only absorb its own row
    "multiple": ModelSpec("multiple", "ln_fer", ("ln_ms", "ln_gold", "ln_trade", "ln_m2", "dv_rmb"),
                          WESTERN + (RMB_ISSUER,)),
    "penalized": ModelSpec("penalized", "ln_fer", ("ln_ms", "ln_gdp"), WESTERN),
}


@dataclass(frozen=True)
class Drop:
    issuer: str
    year: int
    reason: str


@dataclass
class PanelDataset:
    frame: pd.DataFrame
    drops: list[Drop] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    def year(self, year: int) -> pd.DataFrame:
        return self.frame[self.frame["year"] == year].reset_index(drop=True)

    def to_csv(self) -> str:
        return panel_to_csv(self.frame)

    def drops_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["issuer", "year", "reason"])
        for d in self.drops:
            w.writerow([d.issuer, d.year, d.reason])
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        p, m = out / "panel.csv", out / "drops.csv"
        p.write_text(self.to_csv())
        m.write_text(self.drops_csv())
        return p, m


def _read(source, columns: Sequence[str], numeric: Sequence[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(source, comment="#", dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"{source}: {exc}") from exc
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise IngestError(f"{source}: missing columns {missing}")
    df = df[list(columns)].copy()
    for col in [c for c in columns if c not in numeric]:
        df[col] = df[col].str.strip()
    for col in ("year", "quarter", *numeric):
        if col not in df.columns:
            continue
        values = pd.to_numeric(df[col], errors="coerce")
        bad = df.loc[values.isna(), col]
        if len(bad):
            raise IngestError(f"{source}: unparseable {col} value {bad.iloc[0]!r} "
                              f"on data row {bad.index[0] + 1}")
        df[col] = values
    for col in ("year", "quarter"):
        if col in df.columns:
            if not np.all(df[col] == df[col].round()):
                raise IngestError(f"{source}: non-integer {col}")
            df[col] = df[col].astype(int)
    return df


def _keyed(df: pd.DataFrame, source, value: str) -> pd.Series:
    dup = df.duplicated(["issuer", "year"], keep=False)
    if dup.any():
        r = df[dup].iloc[0]
        raise IngestError(f"{source}: duplicate rows for ({r['issuer']}, {r['year']})")
    return df.set_index(["issuer", "year"])[value].astype(float)


def load_cofer(source, years: Optional[Iterable[int]] = None) -> pd.Series:
    """Q4 claims per ``(currency, year)`` in billions of US dollars.

    Every requested year must have exactly one Q4 row for each currency that
    reports in it; without ``years`` every year in the file is requested.
    """
    df = _read(source, ("currency", "year", "quarter", "claims_usd_billions"),
               ("claims_usd_billions",))
    if years is not None:
        df = df[df["year"].isin(list(years))]
    q4 = df[df["quarter"] == 4]
    dup = q4.duplicated(["currency", "year"], keep=False)
    if dup.any():
        r = q4[dup].iloc[0]
        raise IngestError(f"{source}: ambiguous Q4 rows for ({r['currency']}, {r['year']})")
    have = set(zip(q4["currency"], q4["year"]))
    for cur, yr in sorted(set(zip(df["currency"], df["year"])) - have):
        raise IngestError(f"{source}: no Q4 observation for ({cur}, {yr})")
    return q4.set_index(["currency", "year"])["claims_usd_billions"].astype(float).sort_index()


def load_levels(source, value: str) -> pd.Series:
    return _keyed(_read(source, ("issuer", "year", value), (value,)), source, value)


def load_trade(source) -> pd.Series:
    """Exports plus imports, summed before any log transform."""
    cols = ("issuer", "year", "exports_usd_billions", "imports_usd_billions")
    df = _read(source, cols, cols[2:])
    df["trade"] = df["exports_usd_billions"] + df["imports_usd_billions"]
    return _keyed(df, source, "trade")


def load_m2(source, gdp: pd.Series) -> pd.Series:
    """Broad money in billions: ratio (percent of GDP) / 100 times GDP."""
    ratio = load_levels(source, "m2_pct_gdp")
    unmatched = ratio.index.difference(gdp.index)
    if len(unmatched):
        issuer, year = unmatched[0]
        raise IngestError(f"{source}: no GDP for M2 ratio row ({issuer}, {year})")
    return ratio / 100.0 * gdp.reindex(ratio.index)


def _ln(values: pd.Series, name: str) -> pd.Series:
    bad = values[values <= 0]
    if len(bad):
        issuer, year = bad.index[0]
        raise IngestError(f"{name} for ({issuer}, {year}) is {bad.iloc[0]}; cannot take a log")
    return np.log(values)


@dataclass
class Sources:
    cofer: pd.Series
    gdp: pd.Series
    ms: Optional[pd.Series] = None
    gold: Optional[pd.Series] = None
    trade: Optional[pd.Series] = None
    m2: Optional[pd.Series] = None
    digests: dict = field(default_factory=dict)

    @classmethod
    def from_dir(cls, directory, years: Optional[Iterable[int]] = None) -> "Sources":
        """Read whichever canonical files exist; COFER and GDP are mandatory."""
        d = Path(directory)

        def opt(name, loader):
            path = d / name
            return loader(path) if path.exists() else None

        for name in ("cofer.csv", "gdp.csv"):
            if not (d / name).exists():
                raise FileNotFoundError(d / name)
        gdp = load_levels(d / "gdp.csv", "gdp_usd_billions")
        return cls(
            cofer=load_cofer(d / "cofer.csv", years),
            gdp=gdp,
            ms=opt("ms.csv", lambda p: load_levels(p, "ms_usd_billions")),
            gold=opt("gold.csv", lambda p: load_levels(p, "gold_usd_billions")),
            trade=opt("trade.csv", load_trade),
            m2=opt("m2.csv", lambda p: load_m2(p, gdp)),
            digests={name: _sha256(d / name) for name in SOURCE_FILES if (d / name).exists()},
        )


def _sha256(path: Path) -> str:
    import hashlib

    return hashlib.sha256(path.read_bytes()).hexdigest()


def bundled_replication_dir() -> Path:
    return Path(str(resources.files("reserve_shift").joinpath("data/replication")))


def build_panel(sources: Sources, years: Optional[Iterable[int]] = None,
                model: Optional[ModelSpec] = None,
                aliases: Mapping[str, str] = ISSUER_OF) -> PanelDataset:
    """Join all sources on (issuer, year) with COFER as the spine.

    Issuer-years that appear in other sources but not in COFER are dropped and
    recorded, as are rows lacking a predictor the requested model needs.
    Levels are logged after the join; rows are ordered by year then issuer.
    """
    lo, hi = YEAR_RANGE
    years = None if years is None else sorted(set(int(y) for y in years))
    if years is not None and (years[0] < lo or years[-1] > hi):
        raise IngestError(f"years must lie within [{lo}, {hi}]")

    cofer = sources.cofer
    unknown = sorted(set(cofer.index.get_level_values(0)) - set(aliases))
    if unknown:
        raise IngestError(f"no issuer alias for currency {unknown[0]!r}")
    fer = pd.Series(cofer.values, index=pd.MultiIndex.from_tuples(
        [(aliases[c], int(y)) for c, y in cofer.index], names=["issuer", "year"]))
    if fer.index.duplicated().any():
        issuer, year = fer.index[fer.index.duplicated()][0]
        raise IngestError(f"several currencies map to ({issuer}, {year})")

    def in_years(idx):
        return [k for k in idx if (years is None or k[1] in years) and lo <= k[1] <= hi]

    keys = in_years(fer.index)
    drops = []
    others = [s for s in (sources.gdp, sources.ms, sources.gold, sources.trade, sources.m2)
              if s is not None]
    extra = set().union(*(set(in_years(s.index)) for s in others)) - set(keys)
    for issuer, year in sorted(extra, key=lambda k: (k[1], k[0])):
        drops.append(Drop(issuer, year, "absent from COFER"))

    idx = pd.MultiIndex.from_tuples(sorted(keys, key=lambda k: (k[1], k[0])),
                                    names=["issuer", "year"])
    frame = pd.DataFrame(index=idx)
    frame["ln_fer"] = _ln(fer.reindex(idx), "FER")
    for col, series, label in (("ln_ms", sources.ms, "military spending"),
                               ("ln_gdp", sources.gdp, "GDP"),
                               ("ln_gold", sources.gold, "gold"),
                               ("ln_trade", sources.trade, "trade"),
                               ("ln_m2", sources.m2, "M2")):
        if series is None:
            frame[col] = np.nan
            continue
        level = series.reindex(idx)
        present = level.dropna()
        frame[col] = np.nan
        frame.loc[present.index, col] = _ln(present, label)
    frame = frame.reset_index()
    frame["dv_rmb"] = (frame["issuer"] == RMB_ISSUER).astype(int)
    frame["dv_other"] = (frame["issuer"] == OTHER_ISSUER).astype(int)
    frame = frame[list(PANEL_COLUMNS)]

    if model is not None:
        if model.issuers is not None:
            frame = frame[frame["issuer"].isin(model.issuers)]
        missing = frame[list(model.required)].isna()
        for i in np.flatnonzero(missing.any(axis=1).to_numpy()):
            row = frame.iloc[i]
            cols = [c for c in model.required if missing.iloc[i][c]]
            drops.append(Drop(row["issuer"], int(row["year"]), f"missing {','.join(cols)}"))
        frame = frame[~missing.any(axis=1)]
    return PanelDataset(frame.reset_index(drop=True), drops)


def panel_to_csv(frame: pd.DataFrame) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PANEL_COLUMNS)
    for row in frame[list(PANEL_COLUMNS)].itertuples(index=False):
        out = []
        for col, v in zip(PANEL_COLUMNS, row):
            if col in ("year", "dv_rmb", "dv_other"):
                out.append(str(int(v)))
            elif col == "issuer":
                out.append(v)
            else:
                out.append("" if pd.isna(v) else repr(float(v)))
        w.writerow(out)
    return buf.getvalue()


def read_panel(source) -> PanelDataset:
    df = pd.read_csv(source, dtype={"issuer": str}, float_precision="round_trip")
    missing = [c for c in PANEL_COLUMNS if c not in df.columns]
    if missing:
        raise IngestError(f"{source}: panel lacks columns {missing}")
    return PanelDataset(df[list(PANEL_COLUMNS)])


def model_rows(panel: PanelDataset, model: ModelSpec, year: int) -> pd.DataFrame:
    """Rows of one year usable for ``model``; raises when nothing is left."""
    rows = panel.year(year)
    if rows.empty:
        raise IngestError(f"panel has no rows for {year}")
    if model.issuers is not None:
        rows = rows[rows["issuer"].isin(model.issuers)]
    lacking = [c for c in model.required if rows[c].isna().all()]
    if lacking:
        raise IngestError(f"panel has no {', '.join(lacking)} for {year}")
    return rows.dropna(subset=list(model.required)).reset_index(drop=True)


def design(rows: pd.DataFrame, model: ModelSpec) -> tuple[np.ndarray, DesignMatrix]:
    """Response vector and design; a dummy with no member rows is left out."""
    names = [p for p in model.predictors if not (p.startswith("dv_") and rows[p].sum() == 0)]
    X = DesignMatrix(rows[names].to_numpy(dtype=float), names)
    return rows[model.response].to_numpy(dtype=float), X
