import json

import pytest

from framedisc import cli
from framedisc.cli import ConfigError, config_from_dict, main


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"epsilon": 0.2, "colour": "red"})
    with pytest.raises(ConfigError):
        config_from_dict({"bench": {"delta": 0.1, "pairz": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"frame": {"generator": "gabor", "params": {"windw": "gaussian"}}})


@pytest.mark.parametrize("bad", [
    {"epsilon": 1.5}, {"epsilon": 0}, {"mode": "fast"}, {"strategy": "magic"}, {"seed": -1},
    {"workers": 0}, {"r": -0.1}, {"frame": {"generator": "sinc", "params": {"n": 0}}},
    {"frame": {"generator": "chirp"}},
])
def test_out_of_range_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_config_roundtrip_builds_frame():
    cfg = config_from_dict({"frame": {"generator": "exponential", "params": {"n": 8, "S": [[0, 1]]}},
                            "space": {"kind": "euclidean", "dim": 1}})
    frame = cfg.build_frame()
    assert frame.dim == 8
    with pytest.raises(ConfigError):
        config_from_dict({"space": {"kind": "hyperbolic", "dim": 2}}).build_frame()


def test_config_file_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["discretize", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    p.write_text(json.dumps({"epsilon": 1.5}))
    assert main(["discretize", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert main(["discretize", "--epsilon", "1.5", "--out", str(tmp_path / "o")]) == 2


def test_demo_exponential_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["demo", "exponential", "--out", str(out)]) == 0
    for name in ("report.json", "points.csv", "certificates.csv", "constants.csv", "summary.txt"):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdict"] is True and rep["rng"] == cli.RNG_NAME
    printed = capsys.readouterr().out
    # summary numbers are the JSON numbers
    for key in ("deviation", "separation", "A_out", "B_out", "r"):
        assert f"  {json.dumps(rep['result'][key])}" in printed
    lines = (out / "points.csv").read_text().splitlines()
    assert len(lines) == len(rep["result"]["points"]) + 1


def test_same_seed_same_bytes(tmp_path):
    args = ["discretize", "--config", "", "--seed", "7"]
    cfgp = tmp_path / "cfg.json"
    cfgp.write_text(json.dumps({"frame": {"generator": "exponential", "params": {"n": 16}}, "epsilon": 0.3}))
    args[2] = str(cfgp)
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a/report.json").read_bytes() == (tmp_path / "b/report.json").read_bytes()


def test_cli_flags_override_config(tmp_path):
    cfgp = tmp_path / "cfg.json"
    cfgp.write_text(json.dumps({"frame": {"generator": "exponential", "params": {"n": 8}},
                                "epsilon": 0.3, "seed": 1}))
    out = tmp_path / "o"
    main(["discretize", "--config", str(cfgp), "--seed", "5", "--epsilon", "0.35", "--r", "0.25",
          "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert rep["seed"] == 5 and rep["result"]["epsilon"] == 0.35 and rep["result"]["r"] == 0.25


def test_theory_mode_cli(tmp_path):
    out = tmp_path / "t"
    code = main(["discretize", "--mode", "theory", "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert code == 0 and rep["result"]["mode"] == "theory"


def test_selector_bench(tmp_path):
    cfgp = tmp_path / "b.json"
    cfgp.write_text(json.dumps({"bench": {"delta": 0.05, "pairs": 8, "trials": 12}}))
    out = tmp_path / "b"
    assert main(["selector-bench", "--config", str(cfgp), "--workers", "3", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["satisfied_rate"]["exhaustive"] == 1.0
    assert rep["exhaustive_dominates"]


def test_selector_bench_outside_hypothesis():
    cfg = config_from_dict({"bench": {"delta": 0.6, "pairs": 3, "trials": 2}})
    art = cli.run_selector_bench(cfg)
    assert all(row["applicable"] is False for row in art.certificates)
    assert art.report["guarantee_applicable"] is False


def test_selector_bench_workers_do_not_change_results():
    a = cli.run_selector_bench(config_from_dict({"bench": {"trials": 6, "pairs": 5}, "workers": 1}))
    b = cli.run_selector_bench(config_from_dict({"bench": {"trials": 6, "pairs": 5}, "workers": 4}))
    assert a.certificates == b.certificates


def test_constants_table(tmp_path):
    cfg = config_from_dict({"space": {"kind": "euclidean", "dim": 2}, "epsilon": 0.1})
    art = cli.emit_constants(cfg)
    table = {r["name"]: r["value"] for r in art.constants}
    assert table["B_1"] == pytest.approx(1.42)
    assert table["doubling_exponent_term"] == 4096.0
    assert art.verdict
