"""Valued trade flows to dichotomized network panels.

Steps: resolve partner designations (Taiwan reported as "Other Asia, nes",
indefinite partners dropped), net out re-exports, predict importer market
sizes from a log-log regression on GDP per capita and population, code ties
under a relative or an absolute inclusion scheme, and map split or unified
countries onto continuous identifiers with structural zeros.

Every drop, clamp, exclusion and reconstructed flow is recorded in a
:class:`Provenance` log.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .netpanel import CompositionEvent, CovariateSet, NetworkPanel, build_panel

log = logging.getLogger(__name__)

TAIWAN = "Taiwan"
TAIWAN_DESIGNATION = "Other Asia, nes"
INDEFINITE_PARTNERS = frozenset({"World", "Areas, nes"})


class TradePrepError(ValueError):
    pass


class Provenance:
    """Append-only record of data-handling decisions, one dict per event."""

    def __init__(self):
        self.events: list[dict] = []

    def record(self, event: str, **fields) -> None:
        self.events.append({"event": event, **fields})

    def count(self, event: str) -> int:
        return sum(1 for e in self.events if e["event"] == event)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for e in self.events:
                f.write(json.dumps(e, sort_keys=True) + "\n")


@dataclass(frozen=True)
class FlowRecord:
    """One reported flow.

    ``flow="export"``: ``reporter`` exported ``gross_exports`` to ``partner``.
    ``flow="import"``: ``reporter`` imported ``gross_exports`` from ``partner``.
    """

    reporter: str
    partner: str
    year: int
    gross_exports: float
    re_exports: float = 0.0
    flow: str = "export"
    source: str = "reported"

    def __post_init__(self):
        if self.gross_exports < 0 or self.re_exports < 0:
            raise TradePrepError(f"negative trade value in {self}")
        if self.flow not in ("export", "import"):
            raise TradePrepError(f"unknown flow direction {self.flow!r}")


def is_indefinite(partner: str, indefinite: Iterable[str] = INDEFINITE_PARTNERS) -> bool:
    return partner in indefinite or (partner.endswith(", nes") and partner != TAIWAN_DESIGNATION)


def resolve_partners(records: Sequence[FlowRecord], log_: Provenance | None = None,
                     indefinite: Iterable[str] = INDEFINITE_PARTNERS) -> list[FlowRecord]:
    """Export records with definite partners, Taiwan's exports reconstructed.

    Import reports are only used to mirror Taiwan's exports for years in
    which Taiwan reports none; mirrored values are taken as reported.
    """
    prov = log_ if log_ is not None else Provenance()
    indefinite = frozenset(indefinite)
    exports, imports = [], []
    for r in records:
        if r.partner == TAIWAN_DESIGNATION:
            r = replace(r, partner=TAIWAN)
        if is_indefinite(r.partner, indefinite):
            prov.record("drop_indefinite", reporter=r.reporter, partner=r.partner, year=r.year)
            continue
        (exports if r.flow == "export" else imports).append(r)
    taiwan_years = {r.year for r in exports if r.reporter == TAIWAN}
    for r in imports:
        if r.partner == TAIWAN and r.year not in taiwan_years:
            exports.append(FlowRecord(TAIWAN, r.reporter, r.year, r.gross_exports, 0.0,
                                      "export", "mirror"))
            prov.record("mirror_taiwan", importer=r.reporter, year=r.year, value=r.gross_exports,
                        note="mirror import value used as-is")
    dropped = prov.count("drop_indefinite")
    if dropped:
        log.info("dropped %d flows with indefinite partners", dropped)
    return exports


def net_exports(record: FlowRecord, log_: Provenance | None = None) -> float:
    net = record.gross_exports - record.re_exports
    if net < 0:
        log.warning("re-exports exceed exports for %s -> %s in %s; clamped to 0",
                    record.reporter, record.partner, record.year)
        if log_ is not None:
            log_.record("clamp_net_exports", reporter=record.reporter, partner=record.partner,
                        year=record.year, gross=record.gross_exports, re_exports=record.re_exports)
        return 0.0
    return net


@dataclass(frozen=True)
class MarketSizeModel:
    """``ln market = intercept + b1 ln(GDP per capita) + b2 ln(population)``."""

    intercept: float
    coef_ln_gdp_per_capita: float
    coef_ln_population: float
    n: int | None = None
    r_squared: float | None = None
    adj_r_squared: float | None = None

    def predict(self, gdp_per_capita, population):
        return predict_market_size(self, gdp_per_capita, population)


# full-sample coefficients of the published music-market regression
REFERENCE_MARKET_MODEL = MarketSizeModel(-15.99, 1.23, 0.988, n=47, adj_r_squared=0.935)


def fit_market_model(observations: Sequence[tuple[float, float, float]]) -> MarketSizeModel:
    """OLS of ln(market) on ln(GDP per capita) and ln(population).

    ``observations`` are ``(market, gdp_per_capita, population)`` triples.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != 3 or obs.shape[0] < 3:
        raise TradePrepError("need at least 3 (market, gdp_per_capita, population) observations")
    if (obs <= 0).any():
        raise TradePrepError("market size, GDP per capita and population must be positive")
    y = np.log(obs[:, 0])
    X = np.column_stack([np.ones(len(obs)), np.log(obs[:, 1]), np.log(obs[:, 2])])
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 3:
        raise TradePrepError("singular design: regressors are collinear or constant")
    resid = y - X @ coef
    n, k = X.shape
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if n > k else float("nan")
    return MarketSizeModel(float(coef[0]), float(coef[1]), float(coef[2]), n, r2, adj)


def predict_market_size(model: MarketSizeModel, gdp_per_capita, population):
    g = np.asarray(gdp_per_capita, dtype=float)
    p = np.asarray(population, dtype=float)
    if (g <= 0).any() or (p <= 0).any():
        raise TradePrepError("GDP per capita and population must be positive")
    out = np.exp(model.intercept + model.coef_ln_gdp_per_capita * np.log(g)
                 + model.coef_ln_population * np.log(p))
    return float(out) if out.ndim == 0 else out


# -- continuity ---------------------------------------------------------------

@dataclass
class ContinuityMap:
    rename: dict[str, str] = field(default_factory=dict)
    events: list[CompositionEvent] = field(default_factory=list)

    def apply(self, country: str) -> str:
        return self.rename.get(country, country)


def _effective_wave(entry: Mapping, years: Sequence[int] | None) -> int | None:
    if "wave" in entry:
        return int(entry["wave"])
    if years is None:
        raise TradePrepError(f"continuity entry {entry} gives a year but no wave years are known")
    later = [k for k, y in enumerate(years) if y >= int(entry["year"])]
    return later[0] if later else None


def continuity_map(spec: Sequence[Mapping], years: Sequence[int] | None = None) -> ContinuityMap:
    """Rename map and composition events for country splits and unifications.

    ``{"kind": "split", "parent": P, "children": {C: population, ...}, "year"|"wave": ..}``
    gives the most populous child the parent's identifier and a birth event
    to the others.  ``{"kind": "unification", "continuing": W, "unified": G,
    "absorbed": [E, ...], ...}`` maps ``G`` onto ``W`` and ends ``E``.
    An optional ``"largest"`` names the continuing child explicitly.
    """
    out = ContinuityMap()
    for entry in spec:
        kind = entry.get("kind", "split")
        wave = _effective_wave(entry, years)
        if kind == "split":
            parent = entry["parent"]
            children = dict(entry["children"])
            if "largest" in entry:
                largest = entry["largest"]
                if largest not in children:
                    raise TradePrepError(f"{largest!r} is not a child of {parent!r}")
            else:
                top = max(children.values())
                tied = sorted(c for c, v in children.items() if v == top)
                if len(tied) > 1:
                    raise TradePrepError(
                        f"children {tied} of {parent!r} tie in population; name one with 'largest'")
                largest = tied[0]
            out.rename[largest] = parent
            for c in sorted(children):
                if c != largest and wave is not None and wave > 0:
                    out.events.append(CompositionEvent(c, "birth", wave))
        elif kind == "unification":
            continuing = entry["continuing"]
            out.rename[entry.get("unified", continuing)] = continuing
            for c in entry.get("absorbed", []):
                if wave is not None:
                    out.events.append(CompositionEvent(c, "death", wave))
        else:
            raise TradePrepError(f"unknown continuity entry kind {kind!r}")
    return out


# -- dichotomization ------------------------------------------------------------

def aggregate_net_flows(records: Iterable[FlowRecord], rename: Mapping[str, str] | None = None,
                        log_: Provenance | None = None) -> dict[int, dict[tuple[str, str], float]]:
    """Net export value per year and ordered (reporter, partner) pair."""
    rename = rename or {}
    out: dict[int, dict[tuple[str, str], float]] = defaultdict(lambda: defaultdict(float))
    for r in records:
        if r.flow != "export":
            continue
        a, b = rename.get(r.reporter, r.reporter), rename.get(r.partner, r.partner)
        if a == b:
            if log_ is not None:
                log_.record("drop_self_flow", reporter=r.reporter, partner=r.partner, year=r.year)
            continue
        out[r.year][(a, b)] += net_exports(r, log_)
    return {y: dict(v) for y, v in out.items()}


def relative_ties(flows: Mapping[tuple[str, str], float], market: Mapping[str, float],
                  percent: float) -> set[tuple[str, str]]:
    """Pairs whose flow strictly exceeds ``percent``% of the importer's market."""
    if not 0 < percent < 100:
        raise TradePrepError(f"relative threshold must be in (0, 100), got {percent}")
    return {(a, b) for (a, b), v in flows.items() if b in market and v > percent / 100 * market[b]}


def absolute_ties(flows: Mapping[tuple[str, str], float], coverage: float = 0.95) -> set[tuple[str, str]]:
    """Largest flows covering ``coverage`` of the total value.

    Flows are taken in descending order until the running sum first reaches
    ``coverage * total`` (the crossing flow is included); any further flow
    equal in value to the crossing flow is included too.
    """
    if not 0 < coverage <= 1:
        raise TradePrepError(f"coverage must be in (0, 1], got {coverage}")
    items = sorted(((v, k) for k, v in flows.items() if v > 0), key=lambda t: (-t[0], t[1]))
    if not items:
        return set()
    values = np.array([v for v, _ in items])
    target = coverage * values.sum()
    cum = np.cumsum(values)
    # relative slack absorbs summation rounding at exact coverage
    k = int(np.searchsorted(cum, target * (1 - 1e-12), side="left"))
    k = min(k, len(items) - 1)
    cutoff = values[k]
    return {key for v, key in items if v >= cutoff}


def _assemble(ties_by_year: Mapping[int, set], years: Sequence[int],
              events: Sequence[CompositionEvent], log_: Provenance) -> NetworkPanel:
    universe = sorted({c for y in years for pair in ties_by_year.get(y, ()) for c in pair})
    idx = {c: k for k, c in enumerate(universe)}
    kept_events = []
    for e in events:
        if e.country in idx:
            kept_events.append(e)
        else:
            log_.record("drop_event", country=e.country, kind=e.kind, reason="country not in panel")
    mats = []
    for y in years:
        m = np.zeros((len(universe), len(universe)), dtype=np.int8)
        for a, b in ties_by_year.get(y, ()):
            m[idx[a], idx[b]] = 1
        mats.append((y, m))
    panel = build_panel(mats, kept_events, universe)
    for t, (y, m) in enumerate(mats):
        lost = int(m.sum() - panel.adjacency[t].sum())
        if lost:
            log_.record("zero_masked_ties", year=y, count=lost)
    return panel


def dichotomize_relative(flows_by_year: Mapping[int, Mapping[tuple[str, str], float]],
                         market_by_year: Mapping[int, Mapping[str, float]], percent: float,
                         years: Sequence[int] | None = None,
                         events: Sequence[CompositionEvent] = (),
                         log_: Provenance | None = None) -> NetworkPanel:
    """Relative scheme: tie iff flow > ``percent``% of the importer's predicted market.

    Importers without a predicted market are excluded from the panel.
    """
    prov = log_ if log_ is not None else Provenance()
    years = sorted(flows_by_year) if years is None else list(years)
    missing = set()
    for y in years:
        mk = market_by_year.get(y, {})
        for a, b in flows_by_year.get(y, {}):
            if b not in mk:
                missing.add(b)
    for c in sorted(missing):
        prov.record("exclude_country", country=c, reason="no GDP/population for predicted market")
    ties = {}
    for y in years:
        mk = {c: v for c, v in market_by_year.get(y, {}).items() if c not in missing}
        fl = {k: v for k, v in flows_by_year.get(y, {}).items() if k[0] not in missing and k[1] not in missing}
        ties[y] = relative_ties(fl, mk, percent)
    return _assemble(ties, years, events, prov)


def dichotomize_absolute(flows_by_year: Mapping[int, Mapping[tuple[str, str], float]],
                         coverage: float = 0.95, years: Sequence[int] | None = None,
                         events: Sequence[CompositionEvent] = (),
                         log_: Provenance | None = None) -> NetworkPanel:
    prov = log_ if log_ is not None else Provenance()
    years = sorted(flows_by_year) if years is None else list(years)
    ties = {y: absolute_ties(flows_by_year.get(y, {}), coverage) for y in years}
    return _assemble(ties, years, events, prov)


def market_sizes(macro: Mapping[tuple[str, int], tuple[float, float]], model: MarketSizeModel,
                 rename: Mapping[str, str] | None = None) -> dict[int, dict[str, float]]:
    """Predicted market per year and (renamed) country from (GDP per capita, population)."""
    rename = rename or {}
    out: dict[int, dict[str, float]] = defaultdict(dict)
    for (c, y), (g, p) in sorted(macro.items()):
        target = rename.get(c, c)
        # a country's own row wins over a renamed child's
        if target in out[y] and target != c:
            continue
        out[y][target] = predict_market_size(model, g, p)
    return dict(out)


def build_covariates(panel: NetworkPanel, dyadic_rows: Mapping[tuple[str, str], Mapping[str, float]],
                     market_by_year: Mapping[int, Mapping[str, float]],
                     log_columns: Iterable[str] = ("distance",),
                     market_name: str = "ln_market", log_: Provenance | None = None) -> CovariateSet:
    """Dyadic gravity covariates and the ln predicted market by wave.

    Columns in ``log_columns`` are log-transformed and stored as
    ``ln_<name>``.  Missing dyads get 0 for indicators and the column mean
    otherwise; a missing market gets the wave mean.  Both are logged.
    """
    prov = log_ if log_ is not None else Provenance()
    n = panel.n
    idx = {c: k for k, c in enumerate(panel.countries)}
    names = sorted({k for row in dyadic_rows.values() for k in row})
    log_columns = set(log_columns)
    dyadic, indicators = {}, set()
    for name in names:
        m = np.full((n, n), np.nan)
        for (a, b), row in dyadic_rows.items():
            if a in idx and b in idx and name in row and a != b:
                v = float(row[name])
                m[idx[a], idx[b]] = math.log(v) if name in log_columns else v
        np.fill_diagonal(m, 0.0)
        vals = m[~np.isnan(m)]
        off = ~np.eye(n, dtype=bool)
        is_ind = name not in log_columns and np.isin(vals[off[~np.isnan(m)]], (0, 1)).all()
        holes = int(np.isnan(m).sum())
        if holes:
            fill = 0.0 if is_ind else float(np.nanmean(m[off])) if np.isfinite(m[off]).any() else 0.0
            prov.record("fill_missing_covariate", covariate=name, cells=holes, value=fill)
            m[np.isnan(m)] = fill
        key = f"ln_{name}" if name in log_columns else name
        dyadic[key] = m
        if is_ind:
            indicators.add(key)
    actor = np.full((n, panel.n_waves), np.nan)
    for t, y in enumerate(panel.labels):
        for c, v in market_by_year.get(y, {}).items():
            if c in idx:
                actor[idx[c], t] = math.log(v)
        col = actor[:, t]
        if np.isnan(col).any():
            fill = float(np.nanmean(col)) if np.isfinite(col).any() else 0.0
            for k in np.flatnonzero(np.isnan(col)):
                prov.record("fill_missing_market", country=panel.countries[k], year=y, value=fill)
            col[np.isnan(col)] = fill
    return CovariateSet(dyadic, {market_name: actor}, frozenset(indicators)).validate(panel)


# -- file readers ---------------------------------------------------------------

DEFAULT_FLOW_COLUMNS = {
    "reporter": "reporter", "partner": "partner", "year": "year",
    "gross_exports": "gross_exports", "re_exports": "re_exports",
}


def read_flows(path, columns: Mapping[str, str] | None = None,
               commodity: str | None = None) -> list[FlowRecord]:
    """Delimited flow file with a declared column map.

    Optional mapped columns: ``re_exports``, ``flow`` (export/import) and
    ``commodity``; rows of other commodities are skipped when ``commodity``
    is given.
    """
    cols = {**DEFAULT_FLOW_COLUMNS, **(columns or {})}
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = set(reader.fieldnames or ())
        for need in ("reporter", "partner", "year", "gross_exports"):
            if cols[need] not in header:
                raise TradePrepError(f"{path}: missing column {cols[need]!r} for {need}")
        for row in reader:
            if commodity is not None and "commodity" in cols and row.get(cols["commodity"]) != commodity:
                continue
            re_v = row.get(cols["re_exports"], "") if cols["re_exports"] in header else ""
            flow = row.get(cols["flow"], "export").strip().lower() if "flow" in cols else "export"
            out.append(FlowRecord(row[cols["reporter"]], row[cols["partner"]], int(row[cols["year"]]),
                                  float(row[cols["gross_exports"]]), float(re_v) if re_v else 0.0,
                                  flow))
    return out


def read_macro(path) -> dict[tuple[str, int], tuple[float, float]]:
    """``country,year,gdp_per_capita,population`` rows."""
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out[(row["country"], int(row["year"]))] = (float(row["gdp_per_capita"]),
                                                       float(row["population"]))
    return out


def read_calibration(path) -> list[tuple[float, float, float]]:
    """``market,gdp_per_capita,population`` rows for fitting the market model."""
    with open(path, newline="") as f:
        return [(float(r["market"]), float(r["gdp_per_capita"]), float(r["population"]))
                for r in csv.DictReader(f)]


def read_dyadic(path) -> dict[tuple[str, str], dict[str, float]]:
    """``origin,destination,<covariate columns...>`` rows."""
    out = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        names = [c for c in reader.fieldnames if c not in ("origin", "destination")]
        for row in reader:
            out[(row["origin"], row["destination"])] = {
                k: float(row[k]) for k in names if row[k] not in ("", None)}
    return out


def read_continuity(path) -> list[dict]:
    with open(path) as f:
        return json.load(f)


def prepare_panel(records: Sequence[FlowRecord], scheme: str, parameter: float,
                  macro: Mapping[tuple[str, int], tuple[float, float]] | None = None,
                  model: MarketSizeModel = REFERENCE_MARKET_MODEL,
                  years: Sequence[int] | None = None, continuity: Sequence[Mapping] = (),
                  dyadic_rows: Mapping | None = None, log_columns: Iterable[str] = ("distance",),
                  log_: Provenance | None = None) -> tuple[NetworkPanel, CovariateSet | None]:
    """Full preparation: partners, continuity, net flows, ties, covariates."""
    prov = log_ if log_ is not None else Provenance()
    flows = resolve_partners(records, prov)
    if years is None:
        years = sorted({r.year for r in flows})
    years = list(years)
    cmap = continuity_map(continuity, years)
    by_year = aggregate_net_flows([r for r in flows if r.year in set(years)], cmap.rename, prov)
    markets = market_sizes(macro, model, cmap.rename) if macro else {}
    if scheme == "relative":
        if not macro:
            raise TradePrepError("the relative scheme needs GDP per capita and population data")
        panel = dichotomize_relative(by_year, markets, parameter, years, cmap.events, prov)
    elif scheme == "absolute":
        panel = dichotomize_absolute(by_year, parameter, years, cmap.events, prov)
    else:
        raise TradePrepError(f"unknown dichotomization scheme {scheme!r}")
    covs = None
    if dyadic_rows or markets:
        renamed = {}
        for (a, b), row in (dyadic_rows or {}).items():
            renamed.setdefault((cmap.apply(a), cmap.apply(b)), row)
        covs = build_covariates(panel, renamed, markets, log_columns, log_=prov)
    return panel, covs
