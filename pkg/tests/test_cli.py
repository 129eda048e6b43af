import json
import subprocess
import sys

import pytest

from leaklab.cli import COMMANDS, ConfigError, build_parser, load_config, main, resolve_config


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out), err


def test_every_subcommand_registered():
    assert set(COMMANDS) == {
        "verify-bisection",
        "verify-regularity",
        "verify-buckets",
        "verify-fldspread",
        "verify-loginv",
        "online-game",
        "ore-stress",
        "attack",
        "advantage-id",
        "jump-core",
        "dp-calc",
        "report",
    }


def test_bisection_holds(capsys):
    code, out, _ = run_json(capsys, "verify-bisection", "--kind", "floorlog", "--d", "8", "--mode", "exhaustive")
    assert code == 0 and out["verdict"] == "Holds"
    assert out["config"]["d"] == 8 and out["config"]["experiment"] == "verify-bisection"


def test_online_game_csv(capsys):
    code, out, err = run(capsys, "online-game", "--learner", "lencthr", "--adversary", "adaptive", "--d", "16", "--rounds", "10000", "--seed", "7", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "round,plaintext,prediction,label,mistake,potential"
    summary = json.loads(err)
    assert summary["mistakes"] <= 20 and summary["bound"] == 20


def test_online_game_json_and_transcript(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, out, _ = run_json(capsys, "online-game", "--d", "8", "--rounds", "300", "--seed", "1", "--adversary", "random", "--transcript", str(path))
    assert code == 0 and out["mistakes"] <= 12
    assert len(path.read_text().splitlines()) == 301


def test_dp_calc_subsample(capsys):
    code, out, _ = run_json(capsys, "dp-calc", "subsample", "--epsilon", "1", "--delta", "1e-5", "--m", "100", "--n", "1000")
    assert code == 0
    assert out["epsilon"] == pytest.approx(0.171828, abs=5e-7)
    assert out["delta"] == pytest.approx(1e-6, rel=1e-12)


def test_dp_calc_group_and_compose(capsys):
    _, out, _ = run_json(capsys, "dp-calc", "group", "--epsilon", "0.1", "--delta", "1e-6", "--k", "3")
    assert out["epsilon"] == pytest.approx(0.3)
    _, out, _ = run_json(capsys, "dp-calc", "compose", "--epsilon", "1", "--delta", "0", "--epsilon2", "1", "--delta2", "0")
    assert out["epsilon"] == 2


def test_dp_calc_missing_argument(capsys):
    code, out, err = run(capsys, "dp-calc", "group", "--epsilon", "0.1", "--delta", "0")
    assert code == 1 and out == "" and len(err.strip().splitlines()) == 1


def test_lemma_exit_codes(capsys):
    code, out, _ = run_json(capsys, "verify-buckets", "--n", "64", "--d", "30", "--trials", "50", "--seed", "1")
    assert code == 0 and out["verdict"] == "Consistent"
    code, out, _ = run_json(capsys, "verify-regularity", "--n", "64", "--d", "30", "--trials", "50", "--seed", "1", "--claimed", "1.01")
    assert code == 2 and out["verdict"] == "Violated"
    code, out, _ = run_json(capsys, "verify-fldspread", "--n", "64", "--d", "30", "--trials", "30", "--seed", "1", "--guard", "0")
    assert code == 2 and "first_failure" in out["diagnostics"]


def test_small_commands(capsys):
    code, out, _ = run_json(capsys, "advantage-id", "--trials", "100000", "--seed", "2", "--p-i", "1", "--p-next", "0")
    assert code == 0 and out["cells"][0]["analytic"] == 1
    code, out, _ = run_json(capsys, "jump-core", "--n", "4", "--trials", "1000", "--seed", "3")
    assert code == 0 and out["counterexamples"] == 0
    code, out, _ = run_json(capsys, "attack", "--learner", "constant", "--trials", "100", "--seed", "4", "--jobs", "1")
    assert code == 0 and out["invalid"] == 0
    code, out, _ = run_json(capsys, "ore-stress", "--d", "16", "--rounds", "200", "--trials", "4", "--seed", "5", "--jobs", "1", "--fraction", "0")
    assert code == 0 and out["projection_equal"]


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "no-such-command")[0] == 1
    code, _, err = run(capsys, "online-game", "--kind", "bogus", "--seed", "1")
    assert code == 1 and "bogus" in err
    code, _, err = run(capsys, "verify-buckets", "--trials", "5")
    assert code == 1 and "seed" in err


def test_report_collects_verdicts(capsys, tmp_path):
    good, bad = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["verify-buckets", "--n", "32", "--d", "30", "--trials", "20", "--seed", "1", "--output", str(good)]) == 0
    assert main(["verify-regularity", "--n", "32", "--d", "30", "--trials", "20", "--seed", "1", "--claimed", "1.01", "--output", str(bad)]) == 2
    capsys.readouterr()
    code, out, _ = run_json(capsys, "report", str(good))
    assert code == 0 and out["all_consistent"]
    code, out, _ = run_json(capsys, "report", str(good), str(bad))
    assert code == 2 and [r["verdict"] for r in out["reports"]] == ["Consistent", "Violated"]


# config


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(p)


def test_load_valid_config(tmp_path):
    cfg = load_config(write(tmp_path, {"seed": 3, "n": 32, "d": 30, "trials": 10}))
    assert (cfg.seed, cfg.n, cfg.d, cfg.trials) == (3, 32, 30, 10)


def test_unknown_key_named(tmp_path):
    with pytest.raises(ConfigError, match="epsilonn"):
        load_config(write(tmp_path, {"seed": 1, "epsilonn": 0.5}))


def test_missing_seed(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_config(write(tmp_path, {"n": 4}))


def test_bad_json(tmp_path, capsys):
    path = write(tmp_path, "{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    code, out, err = run(capsys, "verify-buckets", "--config", path)
    assert code == 1 and out == "" and len(err.strip().splitlines()) == 1


def test_flag_overrides_file(tmp_path):
    path = write(tmp_path, {"seed": 3, "n": 32})
    args = build_parser().parse_args(["verify-buckets", "--config", path, "--seed", "9"])
    cfg = resolve_config(args)
    assert cfg.seed == 9 and cfg.n == 32 and cfg.d == 40


def test_config_drives_run(tmp_path, capsys):
    path = write(tmp_path, {"seed": 3, "n": 32, "d": 30, "trials": 20})
    code, out, _ = run_json(capsys, "verify-buckets", "--config", path)
    assert code == 0 and out["config"]["seed"] == 3 and out["trials"] == 20


# outputs


def test_byte_identical_outputs_and_sidecar(tmp_path):
    path = tmp_path / "a.json"
    runs = []
    for _ in range(2):
        assert main(["verify-fldspread", "--n", "64", "--d", "30", "--trials", "20", "--seed", "8", "--jobs", "1", "--output", str(path)]) == 0
        runs.append(path.read_bytes())
    assert runs[0] == runs[1]
    meta = json.loads((tmp_path / "a.json.meta.json").read_text())
    assert {"created", "argv", "version"} <= set(meta)
    assert "created" not in json.loads(runs[0])


def test_results_independent_of_jobs(tmp_path):
    outs = []
    for jobs in ("1", "2"):
        p = tmp_path / f"j{jobs}.json"
        main(["verify-regularity", "--n", "32", "--d", "30", "--trials", "40", "--seed", "8", "--jobs", jobs, "--output", str(p)])
        outs.append(json.loads(p.read_text()))
    assert outs[0]["success"] == outs[1]["success"] and outs[0]["diagnostics"] == outs[1]["diagnostics"]


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "leaklab.cli", "dp-calc", "compose", "--epsilon", "0.5", "--delta", "0", "--epsilon2", "0.5", "--delta2", "0"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["epsilon"] == 1
