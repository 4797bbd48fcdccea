import csv
import json

import numpy as np
import pytest
import yaml

from saomtrade.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED, EXIT_OK, main
from saomtrade.effects import EffectSpec
from saomtrade.netpanel import build_panel, load_panel, save_panel
from saomtrade.simulate import generate_panel
from saomtrade.synthetic import SAFE_THRESHOLDS, write_trade_files

QUICK = {"subphases": 2, "phase1_chains": 10, "phase3_chains": 60, "subphase_extra": 20, "max_runs": 1}
EFFECTS = [{"kind": "density"}, {"kind": "reciprocity"}]


@pytest.fixture(scope="module")
def panel_dir(tmp_path_factory):
    p = generate_panel(12, 3, [EffectSpec("density", beta=-1.0), EffectSpec("reciprocity", beta=1.0)],
                       [3.0, 3.0], seed=3, initial_density=0.2, burn_in_rate=5)
    d = tmp_path_factory.mktemp("panel")
    save_panel(p, d)
    return d


@pytest.fixture(scope="module")
def trade_dir(tmp_path_factory):
    p = generate_panel(12, 3, [EffectSpec("density", beta=-1.0), EffectSpec("reciprocity", beta=1.0)],
                       [3.0, 3.0], seed=3, initial_density=0.2, burn_in_rate=5)
    d = tmp_path_factory.mktemp("trade")
    write_trade_files(p, d, seed=1)
    return d


def write_config(path, **sections):
    path.write_text(yaml.safe_dump({"seed": 11, **sections}, sort_keys=False))
    return str(path)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_describe_hand_counted_fixture(tmp_path, capsys):
    x0 = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]])
    x1 = np.zeros((3, 3), dtype=int)
    save_panel(build_panel([(1990, x0), (1995, x1)], countries=["A", "B", "C"]), tmp_path / "p")
    code = main(["describe", "--panel", str(tmp_path / "p"), "--seed", "0", "-o", str(tmp_path / "out")])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "out" / "describe" / "describe.csv")
    assert rows[0] == {"wave": "1990", "ties": "3", "max_outdegree": "2", "outdegree_1": "1", "outdegree_0": "1"}
    assert rows[1] == {"wave": "1995", "ties": "0", "max_outdegree": "0", "outdegree_1": "0", "outdegree_0": "3"}
    meta = json.loads((tmp_path / "out" / "describe" / "metadata.json").read_text())
    assert meta["seed"] == 0 and meta["command"] == "describe" and len(meta["config_hash"]) == 64
    assert "1990" in capsys.readouterr().out


def test_magnitude_flags(capsys):
    assert main(["magnitude", "--beta", "0.33", "--delta", "3"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "2.69"
    assert main(["magnitude", "--beta", "0.33"]) == EXIT_CONFIG


def test_magnitude_grid_from_config(tmp_path):
    cfg = write_config(tmp_path / "m.yaml", magnitude={
        "influence_beta": 0.33, "distance_beta": -0.31, "distance_mean": 8.77, "distance_sd": 0.804,
        "distance_min": 4.09, "distance_max": 9.9})
    assert main(["magnitude", "-c", cfg]) == EXIT_OK
    rows = {r["distance"]: r for r in read_csv(tmp_path / "out" / "magnitude" / "magnitude.csv")}
    assert round(float(rows["mean"]["2"]), 2) == 1.93
    assert round(float(rows["min"]["0"]), 2) == 4.27


@pytest.mark.parametrize("raw, field", [
    ({"effects": EFFECTS}, "seed"),
    ({"seed": 1, "estmation": {}}, "estmation"),
    ({"seed": 1, "dichotomization": {"scheme": "relative", "threshold": 1, "coverage": 0.9}}, "dichotomization"),
    ({"seed": 1, "dichotomization": {"scheme": "absolute", "threshold": 1}}, "dichotomization"),
    ({"seed": 1, "effects": [{"kind": "density", "parametrisation": "creation"}]}, "effects.0"),
    ({"seed": 1, "effects": [{"kind": "transitivity"}]}, "effects.0.kind"),
    ({"seed": 1, "sweep": {"thresholds": []}}, "sweep.thresholds"),
    ({"seed": 1, "effects": [{"kind": "density"}, {"kind": "density"}]}, "effects"),
])
def test_invalid_configs_exit_one_with_field(tmp_path, capsys, raw, field):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(raw))
    assert main(["estimate", "-c", str(p), "-o", str(tmp_path)]) == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_not_yaml_and_missing_file(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text("seed: [1,\n")
    assert main(["describe", "-c", str(p)]) == EXIT_CONFIG
    assert main(["describe", "-c", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG
    assert main(["describe", "--seed", "1", "--panel", str(tmp_path / "nopanel"), "-o", str(tmp_path)]) == EXIT_DATA


def test_empty_threshold_flag_is_rejected(tmp_path, trade_dir):
    cfg = write_config(tmp_path / "s.yaml", input={"flows": str(trade_dir / "flows.csv"),
                                                   "macro": str(trade_dir / "macro.csv")},
                       dichotomization={"scheme": "relative", "threshold": 1.0}, effects=EFFECTS)
    assert main(["sweep", "-c", cfg, "--thresholds"]) == EXIT_CONFIG


def _all_outputs(directory):
    return {p.relative_to(directory): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_reruns_are_byte_identical(tmp_path, panel_dir):
    cfg = write_config(tmp_path / "run.yaml", input={"panel": str(panel_dir)}, effects=EFFECTS,
                       estimation=QUICK, nonparam={"resamples": 200}, simulation={"rates": [3.0, 3.0], "chains": 5})
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        for cmd in ("describe", "nonparam", "estimate", "simulate"):
            assert main([cmd, "-c", cfg, "-o", str(out)]) in (EXIT_OK, EXIT_NONCONVERGED)
        outs.append(_all_outputs(out))
    assert outs[0].keys() == outs[1].keys() and len(outs[0]) > 10
    assert outs[0] == outs[1]


def test_non_convergence_exit_code(tmp_path, panel_dir):
    cfg = write_config(tmp_path / "run.yaml", input={"panel": str(panel_dir)}, effects=EFFECTS,
                       estimation={**QUICK, "convergence_bound": 1e-9})
    assert main(["estimate", "-c", cfg, "-o", str(tmp_path / "o")]) == EXIT_NONCONVERGED
    meta = json.loads((tmp_path / "o" / "estimate" / "metadata.json").read_text())
    assert meta["converged"] is False


def test_output_dir_precedence(tmp_path, panel_dir, monkeypatch):
    sub = tmp_path / "cfgdir"
    sub.mkdir()
    cfg = write_config(sub / "run.yaml", input={"panel": str(panel_dir)}, output_dir="results")
    assert main(["describe", "-c", cfg]) == EXIT_OK
    assert (sub / "results" / "describe" / "describe.csv").exists()
    monkeypatch.setenv("SAOMTRADE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["describe", "-c", cfg]) == EXIT_OK
    assert (tmp_path / "env" / "describe" / "describe.csv").exists()
    assert main(["describe", "-c", cfg, "-o", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "describe" / "describe.csv").exists()


def _trade_config(tmp_path, trade_dir, **extra):
    return write_config(tmp_path / "trade.yaml",
                        input={"flows": str(trade_dir / "flows.csv"), "macro": str(trade_dir / "macro.csv"),
                               "dyadic": str(trade_dir / "dyadic.csv")},
                        dichotomization={"scheme": "relative", "threshold": 1.0},
                        effects=EFFECTS, estimation=QUICK, **extra)


def test_prep_output_feeds_estimate(tmp_path, trade_dir, panel_dir):
    cfg = _trade_config(tmp_path, trade_dir)
    out = tmp_path / "o"
    assert main(["prep", "-c", cfg, "-o", str(out)]) == EXIT_OK
    prepped, covs = load_panel(out / "prep" / "panel")
    original, _ = load_panel(panel_dir)
    idx = [original.countries.index(c) for c in prepped.countries]
    assert np.array_equal(prepped.adjacency, original.adjacency[:, idx][:, :, idx])
    assert "ln_distance" in covs.dyadic and "ln_market" in covs.actor_by_wave
    events = [json.loads(line)["event"] for line in (out / "prep" / "provenance.jsonl").read_text().splitlines()]
    assert "drop_indefinite" in events
    code = main(["estimate", "-c", cfg, "--panel", str(out / "prep" / "panel"), "-o", str(out)])
    assert code in (EXIT_OK, EXIT_NONCONVERGED)
    assert (out / "estimate" / "estimates.csv").exists()


def test_sweep_rows_match_single_runs(tmp_path, trade_dir):
    lo, hi = SAFE_THRESHOLDS
    a, b = lo + 0.1, hi - 0.1
    cfg = _trade_config(tmp_path, trade_dir, sweep={"thresholds": [a, b], "effect": "reciprocity"})
    assert main(["sweep", "-c", cfg, "-o", str(tmp_path / "s")]) == EXIT_OK
    rows = read_csv(tmp_path / "s" / "sweep" / "sweep.csv")
    assert [float(r["threshold"]) for r in rows] == [a, b]
    # the generating process does not depend on the threshold, so both panels coincide
    assert rows[0]["estimate"] == rows[1]["estimate"] and rows[0]["se"] == rows[1]["se"]
    assert main(["estimate", "-c", cfg, "--threshold", str(a), "-o", str(tmp_path / "e")]) in (EXIT_OK, EXIT_NONCONVERGED)
    est = {r["effect"]: r for r in read_csv(tmp_path / "e" / "estimate" / "estimates.csv")}
    assert float(est["reciprocity"]["estimate"]) == float(rows[0]["estimate"])


def test_sweep_records_failing_threshold_and_continues(tmp_path, trade_dir):
    # at 99% no flow is a tie, so that row fails while the other completes
    cfg = _trade_config(tmp_path, trade_dir, sweep={"thresholds": [1.0, 99.0], "effect": "density"})
    assert main(["sweep", "-c", cfg, "-o", str(tmp_path / "s")]) == EXIT_OK
    rows = read_csv(tmp_path / "s" / "sweep" / "sweep.csv")
    assert rows[0]["estimate"] != "" and rows[1]["estimate"] == ""
    assert rows[1]["note"]
