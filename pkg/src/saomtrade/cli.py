"""Command-line entry point: ``saomtrade <subcommand> --config run.yaml``.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 non-convergence.
``SAOMTRADE_OUTPUT_DIR`` overrides the configured output directory; the
``--output-dir`` flag overrides both.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, from_dict, load_config
from .estimate import (EstimationError, effect_magnitude, estimate, magnitude_grid, score_test)
from .netpanel import PanelValidationError, describe, load_panel, save_panel
from .nonparam import NonparamError, influence_table
from .reports import (describe_table, estimate_table, influence_tables, magnitude_table,
                      score_table, simulation_table, sweep_table)
from .simulate import RNG_ALGORITHM, PanelModel, simulate_panel
from .tradeprep import (REFERENCE_MARKET_MODEL, MarketSizeModel, Provenance, TradePrepError, fit_market_model,
                        prepare_panel, read_calibration, read_continuity, read_dyadic, read_flows,
                        read_macro)

log = logging.getLogger("saomtrade")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3
OUTPUT_ENV = "SAOMTRADE_OUTPUT_DIR"
DATA_ERRORS = (PanelValidationError, TradePrepError, NonparamError, EstimationError, OSError)


def metadata(cfg: RunConfig, command: str, **extra) -> dict:
    return {"tool": "saomtrade", "version": __version__, "command": command,
            "config_hash": cfg.digest, "seed": cfg.seed, "rng": RNG_ALGORITHM,
            "config": cfg.raw, **extra}


def write_metadata(directory: Path, meta: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _prep(cfg: RunConfig, scheme: str | None = None, parameter: float | None = None):
    inp = cfg.input
    if cfg.dichotomization is None and scheme is None:
        raise ConfigError("dichotomization: required when preparing from flows")
    scheme = scheme or cfg.dichotomization.scheme
    parameter = cfg.dichotomization.parameter if parameter is None else parameter
    if inp.flows is None:
        raise ConfigError("input.flows: required when no prebuilt panel is given")
    records = read_flows(cfg.path(inp.flows), inp.flow_columns, inp.commodity)
    macro = read_macro(cfg.path(inp.macro)) if inp.macro else None
    if inp.calibration and inp.market_model:
        raise ConfigError("input: give either 'calibration' or 'market_model', not both")
    if inp.calibration:
        model = fit_market_model(read_calibration(cfg.path(inp.calibration)))
    elif inp.market_model:
        model = MarketSizeModel(**inp.market_model)
    else:
        model = REFERENCE_MARKET_MODEL
    continuity = read_continuity(cfg.path(inp.continuity)) if inp.continuity else []
    dyadic = read_dyadic(cfg.path(inp.dyadic)) if inp.dyadic else None
    prov = Provenance()
    panel, covs = prepare_panel(records, scheme, parameter, macro, model, inp.years, continuity,
                                dyadic, inp.log_covariates, prov)
    return panel, covs, prov, model


def _input(cfg: RunConfig, scheme=None, parameter=None):
    if cfg.input.panel is not None and scheme is None:
        panel, covs = load_panel(cfg.path(cfg.input.panel))
        return panel, covs
    panel, covs, _, _ = _prep(cfg, scheme, parameter)
    return panel, covs


def cmd_prep(cfg: RunConfig, out: Path, args) -> int:
    panel, covs, prov, model = _prep(cfg)
    d = out / "prep"
    save_panel(panel, d / "panel", covs)
    prov.write_jsonl(d / "provenance.jsonl")
    describe_table(describe(panel)).write(d, "describe")
    write_metadata(d, metadata(cfg, "prep", market_model={
        "intercept": model.intercept, "coef_ln_gdp_per_capita": model.coef_ln_gdp_per_capita,
        "coef_ln_population": model.coef_ln_population, "adj_r_squared": model.adj_r_squared},
        countries=len(panel.countries), waves=list(panel.labels)))
    print(f"panel with {panel.n} countries and {panel.n_waves} waves written to {d / 'panel'}")
    return EXIT_OK


def cmd_describe(cfg: RunConfig, out: Path, args) -> int:
    panel, _ = _input(cfg)
    t = describe_table(describe(panel))
    d = out / "describe"
    t.write(d, "describe")
    write_metadata(d, metadata(cfg, "describe"))
    print(t.to_text(), end="")
    return EXIT_OK


def cmd_nonparam(cfg: RunConfig, out: Path, args) -> int:
    panel, _ = _input(cfg)
    res = influence_table(panel, cfg.nonparam.p_method, cfg.nonparam.resamples, cfg.seed)
    cats, comps = influence_tables(res)
    d = out / "nonparam"
    cats.write(d, "categories")
    comps.write(d, "comparisons")
    write_metadata(d, metadata(cfg, "nonparam"))
    print(cats.to_text() + "\n" + comps.to_text(), end="")
    return EXIT_OK


def _require_effects(cfg: RunConfig):
    if not cfg.effects:
        raise ConfigError("effects: at least one effect is required")


def cmd_estimate(cfg: RunConfig, out: Path, args) -> int:
    _require_effects(cfg)
    panel, covs = _input(cfg)
    fit = estimate(panel, covs, cfg.effects, cfg.seed, cfg.estimation, cfg.initial_rates)
    d = out / "estimate"
    d.mkdir(parents=True, exist_ok=True)
    t = estimate_table(fit)
    t.write(d, "estimates")
    (d / "fit.json").write_text(json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n")
    text = t.to_text()
    if cfg.score_test is not None:
        if fit.converged:
            s = score_test(panel, covs, fit, cfg.score_test.effect, cfg.seed, cfg.score_test.chains,
                           cfg.estimation.perturbation)
            st = score_table(s)
            st.write(d, "score_test")
            text += "\n" + st.to_text()
        else:
            log.warning("score test skipped: restricted fit did not converge")
    write_metadata(d, metadata(cfg, "estimate", converged=fit.converged))
    print(text, end="")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def cmd_simulate(cfg: RunConfig, out: Path, args) -> int:
    _require_effects(cfg)
    if cfg.simulation is None:
        raise ConfigError("simulation: section with 'rates' is required")
    panel, covs = _input(cfg)
    chains = args.chains or cfg.simulation.chains
    sim = simulate_panel(panel, covs, cfg.effects, cfg.simulation.rates, chains, cfg.seed)
    observed = PanelModel(panel, covs, cfg.effects).observed_statistics
    sd = sim.per_chain.std(axis=0, ddof=1) if chains > 1 else np.zeros_like(sim.mean)
    t = simulation_table([e.name for e in cfg.effects], sim.mean, sd, observed)
    d = out / "simulate"
    t.write(d, "statistics")
    write_metadata(d, metadata(cfg, "simulate", chains=chains))
    print(t.to_text(), end="")
    return EXIT_OK


def cmd_magnitude(cfg: RunConfig | None, out: Path | None, args) -> int:
    if args.beta is not None or args.delta is not None:
        if args.beta is None or args.delta is None:
            raise ConfigError("magnitude: --beta and --delta go together")
        print(f"{effect_magnitude(args.beta, args.delta):.2f}")
        return EXIT_OK
    if cfg is None or cfg.magnitude is None:
        raise ConfigError("magnitude: give --beta/--delta or a config with a 'magnitude' section")
    m = cfg.magnitude
    t = magnitude_table(magnitude_grid(m.influence_beta, m.distance_beta, m.distance_mean,
                                       m.distance_sd, m.distance_min, m.distance_max,
                                       m.max_influences))
    d = out / "magnitude"
    t.write(d, "magnitude")
    write_metadata(d, metadata(cfg, "magnitude"))
    print(t.to_text(), end="")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, args) -> int:
    _require_effects(cfg)
    thresholds = args.thresholds if args.thresholds is not None else cfg.sweep_thresholds
    if not thresholds:
        raise ConfigError("sweep.thresholds: at least one threshold is required")
    if cfg.dichotomization is None or cfg.dichotomization.scheme != "relative":
        raise ConfigError("dichotomization.scheme: the sweep needs the relative scheme")
    target = next((k for k, e in enumerate(cfg.effects)
                   if e.name == cfg.sweep_effect or e.kind == cfg.sweep_effect), None)
    if target is None:
        raise ConfigError(f"sweep.effect: {cfg.sweep_effect!r} is not among the configured effects")
    rows = []
    for a in thresholds:
        row = {"threshold": float(a)}
        try:
            panel, covs = _input(cfg, "relative", float(a))
            fit = estimate(panel, covs, cfg.effects, cfg.seed, cfg.estimation, cfg.initial_rates)
            row.update(estimate=float(fit.beta_hat[target]), se=float(fit.standard_errors[target]),
                       converged=fit.converged, max_abs_t=fit.max_abs_t,
                       note="" if fit.converged else "not converged")
        except DATA_ERRORS as exc:
            row.update(converged=False, note=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    t = sweep_table(rows, cfg.effects[target].name)
    d = out / "sweep"
    t.write(d, "sweep")
    write_metadata(d, metadata(cfg, "sweep", thresholds=[float(a) for a in thresholds]))
    print(t.to_text(), end="")
    return EXIT_OK


COMMANDS = {"prep": cmd_prep, "describe": cmd_describe, "nonparam": cmd_nonparam,
            "estimate": cmd_estimate, "simulate": cmd_simulate, "magnitude": cmd_magnitude,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saomtrade", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"saomtrade {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", "-c", help="YAML run configuration")
        s.add_argument("--output-dir", "-o", help="artifact directory (overrides config and environment)")
        s.add_argument("--seed", type=int, help="master seed (overrides config)")
        s.add_argument("--panel", help="prebuilt panel directory (overrides config input)")
        s.add_argument("--threshold", type=float, help="relative threshold a%% (overrides config)")
        s.add_argument("--coverage", type=float, help="absolute-scheme coverage (overrides config)")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            s.add_argument("--chains", type=int)
        if name == "magnitude":
            s.add_argument("--beta", type=float, help="effect parameter")
            s.add_argument("--delta", type=float, help="difference in the effect's statistic")
        if name == "sweep":
            s.add_argument("--thresholds", type=float, nargs="*", help="relative thresholds a%%")
    return p


def _config(args) -> RunConfig | None:
    raw, base = None, None
    if args.config:
        cfg = load_config(args.config)
        raw, base = dict(cfg.raw), cfg.base_dir
    elif args.command == "magnitude":
        return None
    else:
        raw, base = {}, Path.cwd()
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.panel is not None:
        raw["input"] = {**raw.get("input", {}), "panel": str(Path(args.panel).resolve())}
    if args.threshold is not None:
        raw["dichotomization"] = {"scheme": "relative", "threshold": args.threshold}
    elif args.coverage is not None:
        raw["dichotomization"] = {"scheme": "absolute", "coverage": args.coverage}
    if "seed" not in raw:
        raise ConfigError("seed: a master seed is required (config 'seed' or --seed)")
    return from_dict(raw, base)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.output_dir or os.environ.get(OUTPUT_ENV):
            out = Path(args.output_dir or os.environ[OUTPUT_ENV])
        elif cfg is not None:
            # relative to the config file, so a config is portable with its data
            out = cfg.path(cfg.output_dir)
        else:
            out = Path("out")
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
