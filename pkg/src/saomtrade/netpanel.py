"""Longitudinal directed-network panels with structural zeros and covariates.

A panel is an ordered sequence of binary adjacency matrices over a fixed,
ordered set of countries.  Cells that are absent for exogenous reasons
(a country that does not exist yet, or no longer exists) are flagged in a
per-wave structural-zero mask and always hold 0.

Country identifiers are opaque strings; index ``k`` is the position of the
country in the order it was supplied.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PANEL_FORMAT = "saomtrade-panel"
PANEL_FORMAT_VERSION = 1

EVENT_KINDS = ("birth", "death", "merge-into")


class PanelValidationError(ValueError):
    """Raised when panel or covariate input violates the panel invariants."""


@dataclass(frozen=True)
class CompositionEvent:
    """Entry or exit of a country from the study population.

    ``birth`` masks the country's row and column in every wave before
    ``effective_wave``; ``death`` and ``merge-into`` mask it from
    ``effective_wave`` on.  Pre-event waves of a dying country stay observed.
    """

    country: str
    kind: str
    effective_wave: int
    parent: str | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise PanelValidationError(f"unknown composition event kind {self.kind!r}")
        if self.kind == "merge-into" and not self.parent:
            raise PanelValidationError(f"merge-into event for {self.country!r} needs a parent")

    def to_dict(self) -> dict:
        d = {"country": self.country, "kind": self.kind, "effective_wave": self.effective_wave}
        if self.parent is not None:
            d["parent"] = self.parent
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CompositionEvent":
        return cls(d["country"], d["kind"], int(d["effective_wave"]), d.get("parent"))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkPanel:
    countries: tuple[str, ...]
    labels: tuple[int, ...]
    adjacency: np.ndarray  # (waves, n, n) int8
    masks: np.ndarray  # (waves, n, n) bool, True = structural zero
    events: tuple[CompositionEvent, ...] = ()

    @property
    def n(self) -> int:
        return len(self.countries)

    @property
    def n_waves(self) -> int:
        return len(self.labels)

    @property
    def n_periods(self) -> int:
        return self.n_waves - 1

    def index(self, country: str) -> int:
        try:
            return self.countries.index(country)
        except ValueError:
            raise KeyError(f"unknown country {country!r}") from None

    def wave(self, t: int) -> np.ndarray:
        return self.adjacency[t]

    def period_mask(self, t: int) -> np.ndarray:
        """Dyads frozen at 0 during period ``t -> t+1``.

        A dyad is frozen if it is a structural zero in either endpoint wave.
        """
        return self.masks[t] | self.masks[t + 1]

    def period_endpoints(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Start and end networks of period ``t`` with frozen dyads zeroed."""
        frozen = self.period_mask(t)
        x0 = np.where(frozen, 0, self.adjacency[t]).astype(np.int8)
        x1 = np.where(frozen, 0, self.adjacency[t + 1]).astype(np.int8)
        return x0, x1

    def gaps(self) -> np.ndarray:
        return np.diff(np.asarray(self.labels, dtype=float))

    def permuted(self, perm: Sequence[int]) -> "NetworkPanel":
        """Relabel actors so that new actor ``k`` is old actor ``perm[k]``."""
        perm = np.asarray(perm)
        adj = self.adjacency[:, perm][:, :, perm].copy()
        masks = self.masks[:, perm][:, :, perm].copy()
        return NetworkPanel(
            tuple(self.countries[p] for p in perm), self.labels,
            _readonly(adj), _readonly(masks), self.events,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkPanel):
            return NotImplemented
        return (
            self.countries == other.countries
            and self.labels == other.labels
            and self.events == other.events
            and np.array_equal(self.adjacency, other.adjacency)
            and np.array_equal(self.masks, other.masks)
        )


@dataclass
class CovariateSet:
    """Dyadic constants and actor-by-wave covariates, indexed like the panel.

    ``dyadic[name]`` is ``n x n``; ``actor_by_wave[name]`` is ``n x waves``.
    Names listed in ``indicators`` must hold only 0 and 1.
    """

    dyadic: dict[str, np.ndarray] = field(default_factory=dict)
    actor_by_wave: dict[str, np.ndarray] = field(default_factory=dict)
    indicators: frozenset[str] = frozenset()

    def validate(self, panel: NetworkPanel) -> "CovariateSet":
        n, w = panel.n, panel.n_waves
        for name, m in self.dyadic.items():
            if np.shape(m) != (n, n):
                raise PanelValidationError(
                    f"dyadic covariate {name!r} has shape {np.shape(m)}, expected {(n, n)}")
        for name, m in self.actor_by_wave.items():
            if np.shape(m) != (n, w):
                raise PanelValidationError(
                    f"actor covariate {name!r} has shape {np.shape(m)}, expected {(n, w)}")
        for name in self.indicators:
            m = self.dyadic.get(name, self.actor_by_wave.get(name))
            if m is None:
                raise PanelValidationError(f"indicator {name!r} is not a covariate")
            if not np.isin(m, (0, 1)).all():
                raise PanelValidationError(f"indicator covariate {name!r} has values outside {{0,1}}")
        for name, m in {**self.dyadic, **self.actor_by_wave}.items():
            if not np.isfinite(m).all():
                raise PanelValidationError(f"covariate {name!r} has non-finite values")
        return self

    def permuted(self, perm: Sequence[int]) -> "CovariateSet":
        perm = np.asarray(perm)
        return CovariateSet(
            {k: v[perm][:, perm] for k, v in self.dyadic.items()},
            {k: v[perm] for k, v in self.actor_by_wave.items()},
            self.indicators,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, CovariateSet):
            return NotImplemented
        same = lambda a, b: a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
        return (same(self.dyadic, other.dyadic) and same(self.actor_by_wave, other.actor_by_wave)
                and self.indicators == other.indicators)


def masks_from_events(n_waves: int, countries: Sequence[str],
                      events: Iterable[CompositionEvent]) -> np.ndarray:
    n = len(countries)
    masks = np.zeros((n_waves, n, n), dtype=bool)
    idx = {c: k for k, c in enumerate(countries)}
    for ev in events:
        if ev.country not in idx:
            raise PanelValidationError(f"event for unknown country {ev.country!r}")
        if not 0 <= ev.effective_wave < n_waves:
            raise PanelValidationError(
                f"event wave {ev.effective_wave} for {ev.country!r} out of range 0..{n_waves - 1}")
        k = idx[ev.country]
        waves = range(ev.effective_wave) if ev.kind == "birth" else range(ev.effective_wave, n_waves)
        for t in waves:
            masks[t, k, :] = True
            masks[t, :, k] = True
    return masks


def build_panel(matrices: Sequence[tuple[int, np.ndarray]],
                events: Sequence[CompositionEvent] = (),
                countries: Sequence[str] | None = None) -> NetworkPanel:
    """Validate labelled binary matrices and attach composition masks.

    Cells covered by a structural zero are set to 0.  Raises
    :class:`PanelValidationError` naming the first offending cell on
    non-square or mismatched matrices, entries outside {0,1}, or a nonzero
    diagonal.
    """
    if len(matrices) == 0:
        raise PanelValidationError("a panel needs at least one wave")
    labels = tuple(int(lab) for lab, _ in matrices)
    if any(b <= a for a, b in zip(labels, labels[1:])):
        raise PanelValidationError(f"wave labels must be strictly increasing, got {labels}")
    mats = [np.asarray(m) for _, m in matrices]
    n = mats[0].shape[0] if mats[0].ndim == 2 else -1
    if countries is None:
        countries = tuple(str(k) for k in range(max(n, 0)))
    countries = tuple(countries)
    if len(set(countries)) != len(countries):
        raise PanelValidationError("duplicate country identifiers")
    for t, m in enumerate(mats):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise PanelValidationError(f"wave {labels[t]}: matrix is not square (shape {m.shape})")
        if m.shape[0] != len(countries):
            raise PanelValidationError(
                f"wave {labels[t]}: dimension {m.shape[0]} does not match {len(countries)} countries")
        bad = np.argwhere(~np.isin(m, (0, 1)))
        if len(bad):
            i, j = bad[0]
            raise PanelValidationError(
                f"wave {labels[t]}: cell ({countries[i]}, {countries[j]}) = {m[i, j]!r} is not binary")
        diag = np.flatnonzero(np.diagonal(m))
        if len(diag):
            i = diag[0]
            raise PanelValidationError(
                f"wave {labels[t]}: diagonal cell ({countries[i]}, {countries[i]}) is nonzero")
    masks = masks_from_events(len(mats), countries, events)
    adj = np.stack([m.astype(np.int8) for m in mats])
    adj[masks] = 0
    return NetworkPanel(countries, labels, _readonly(adj), _readonly(masks), tuple(events))


@dataclass(frozen=True)
class WaveSummary:
    label: int
    ties: int
    max_outdegree: int
    n_outdegree_one: int
    n_outdegree_zero: int


def describe(panel: NetworkPanel) -> list[WaveSummary]:
    """Per-wave tie count and out-degree summary.

    Actors whose whole row is a structural zero in a wave (not yet born, or
    gone) are not counted in that wave's out-degree tallies.
    """
    out = []
    for t, label in enumerate(panel.labels):
        x = panel.adjacency[t]
        active = ~panel.masks[t].all(axis=1)
        od = x.sum(axis=1)[active]
        out.append(WaveSummary(
            label=label,
            ties=int(x.sum()),
            max_outdegree=int(od.max()) if od.size else 0,
            n_outdegree_one=int((od == 1).sum()),
            n_outdegree_zero=int((od == 0).sum()),
        ))
    return out


# -- serialization -----------------------------------------------------------

def _write_matrix(path: Path, countries: Sequence[str], m: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["", *countries])
        for c, row in zip(countries, m):
            w.writerow([c, *(repr(float(v)) for v in row)])


def _read_matrix(path: Path, countries: Sequence[str]) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if tuple(rows[0][1:]) != tuple(countries) or tuple(r[0] for r in rows[1:]) != tuple(countries):
        raise PanelValidationError(f"{path}: country labels do not match manifest")
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)


def _write_actor_matrix(path: Path, countries: Sequence[str], labels: Sequence[int],
                        m: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["", *labels])
        for c, row in zip(countries, m):
            w.writerow([c, *(repr(float(v)) for v in row)])


def _read_actor_matrix(path: Path, countries: Sequence[str], labels: Sequence[int]) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if [int(v) for v in rows[0][1:]] != list(labels) or tuple(r[0] for r in rows[1:]) != tuple(countries):
        raise PanelValidationError(f"{path}: labels do not match manifest")
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def save_panel(panel: NetworkPanel, directory: str | os.PathLike,
               covariates: CovariateSet | None = None) -> Path:
    """Write the panel as per-wave edge lists plus a JSON manifest.

    Edge files list only present ties (``source,target,1``); masks are
    reconstructed from the composition events on load.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    waves = []
    for t, label in enumerate(panel.labels):
        fname = f"wave_{t:03d}_{label}.csv"
        with open(d / fname, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["source", "target", "value"])
            for i, j in np.argwhere(panel.adjacency[t]):
                w.writerow([panel.countries[i], panel.countries[j], 1])
        waves.append({"label": label, "edges": fname})
    manifest = {
        "format": PANEL_FORMAT,
        "version": PANEL_FORMAT_VERSION,
        "countries": list(panel.countries),
        "waves": waves,
        "events": [e.to_dict() for e in panel.events],
    }
    if covariates is not None:
        covariates.validate(panel)
        (d / "covariates").mkdir(exist_ok=True)
        dy, ac = {}, {}
        for name in sorted(covariates.dyadic):
            fname = f"covariates/dyadic_{_safe_name(name)}.csv"
            _write_matrix(d / fname, panel.countries, covariates.dyadic[name])
            dy[name] = fname
        for name in sorted(covariates.actor_by_wave):
            fname = f"covariates/actor_{_safe_name(name)}.csv"
            _write_actor_matrix(d / fname, panel.countries, panel.labels, covariates.actor_by_wave[name])
            ac[name] = fname
        manifest["covariates"] = {"dyadic": dy, "actor_by_wave": ac,
                                  "indicators": sorted(covariates.indicators)}
    with open(d / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return d


def load_panel(directory: str | os.PathLike) -> tuple[NetworkPanel, CovariateSet | None]:
    d = Path(directory)
    try:
        with open(d / "manifest.json") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise PanelValidationError(f"{d} has no manifest.json") from None
    if manifest.get("format") != PANEL_FORMAT:
        raise PanelValidationError(f"{d}: not a {PANEL_FORMAT} directory")
    countries = tuple(manifest["countries"])
    idx = {c: k for k, c in enumerate(countries)}
    n = len(countries)
    mats = []
    for wv in manifest["waves"]:
        m = np.zeros((n, n), dtype=np.int64)
        with open(d / wv["edges"], newline="") as f:
            for row in csv.DictReader(f):
                try:
                    i, j = idx[row["source"]], idx[row["target"]]
                except KeyError as e:
                    raise PanelValidationError(f"{wv['edges']}: unknown country {e.args[0]!r}") from None
                m[i, j] = int(row["value"])
        mats.append((int(wv["label"]), m))
    events = [CompositionEvent.from_dict(e) for e in manifest.get("events", [])]
    panel = build_panel(mats, events, countries)
    covs = None
    if "covariates" in manifest:
        c = manifest["covariates"]
        covs = CovariateSet(
            {k: _read_matrix(d / v, countries) for k, v in c.get("dyadic", {}).items()},
            {k: _read_actor_matrix(d / v, countries, panel.labels)
             for k, v in c.get("actor_by_wave", {}).items()},
            frozenset(c.get("indicators", [])),
        ).validate(panel)
    return panel, covs
