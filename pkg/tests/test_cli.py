import json

import pytest

from randcover.cli import (EXIT_CAP, EXIT_FAIL, EXIT_OK, EXIT_USAGE, ConfigError, Scenario,
                           builtin_names, load_builtin, main)

REQUIRED = {"shrinking-balls", "rectangles", "two-cubes", "fat-cantor", "packing-saturation",
            "gauge-ball", "gamma-suite"}


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_list_contains_required_scenarios(capsys):
    assert main(["list"]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(["list"]) == EXIT_OK
    assert capsys.readouterr().out == first
    names = {line.split()[0] for line in first.splitlines()}
    assert REQUIRED <= names and len(names) >= 7


def test_list_json_is_array(capsys):
    assert main(["list", "--json"]) == EXIT_OK
    items = json.loads(capsys.readouterr().out)
    assert isinstance(items, list)
    assert {i["name"] for i in items} == set(builtin_names())
    assert all(i["description"] for i in items)


def test_unknown_scenario_exit_2(capsys, tmp_path):
    assert main(["reproduce", "no-such-thing", "--out", str(tmp_path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "shrinking-balls" in err


def test_bad_flags_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["reproduce"])
    assert info.value.code == 2


@pytest.mark.parametrize("doc,field", [
    ({"runner": "shrinking_balls", "params": {}, "thresholds": {}, "seeds": {"master": 1, "count": 1}}, "name"),
    ({"name": "x", "runner": "nope", "params": {}, "thresholds": {}, "seeds": {"master": 1, "count": 1}}, "runner"),
    ({"name": "x", "runner": "shrinking_balls", "params": [], "thresholds": {}, "seeds": {"master": 1, "count": 1}}, "params"),
    ({"name": "x", "runner": "shrinking_balls", "params": {}, "thresholds": {}, "seeds": {"master": "a", "count": 1}}, "seeds.master"),
    ({"name": "x", "runner": "shrinking_balls", "params": {}, "thresholds": {}, "seeds": {"master": 1, "count": 0}}, "seeds.count"),
])
def test_invalid_config_exit_2_with_field(tmp_path, capsys, doc, field):
    assert main(["run", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_USAGE
    assert field in capsys.readouterr().err
    with pytest.raises(ConfigError):
        Scenario.from_dict(doc)


def test_unreadable_config_exit_2(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["run", "--config", str(p)]) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE


def test_override_errors(tmp_path):
    out = ["--out", str(tmp_path)]
    assert main(["reproduce", "gauge-ball", "--alpha", "2"] + out) == EXIT_USAGE
    assert main(["reproduce", "two-cubes", "--ratio", "6"] + out) == EXIT_USAGE
    assert main(["reproduce", "shrinking-balls", "--seeds", "0"] + out) == EXIT_USAGE
    assert main(["reproduce", "critical-exponent", "--jobs", "0"] + out) == EXIT_USAGE


def test_resource_cap_exit_3(tmp_path):
    doc = load_builtin("shrinking-balls").to_dict()
    doc["params"]["level_cap"] = 30
    doc["seeds"]["count"] = 1
    assert main(["run", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_CAP


def test_failed_check_exit_1(tmp_path):
    doc = load_builtin("critical-exponent").to_dict()
    doc["thresholds"]["abs_error"] = 1e-9
    assert main(["run", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_FAIL


def test_reproduce_shrinking_balls_alpha_2(tmp_path, capsys):
    code = main(["reproduce", "shrinking-balls", "--alpha", "2", "--seeds", "20",
                 "--out", str(tmp_path), "--json"])
    summary = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK and summary["passed"]
    est = summary["estimates"]["alpha=2.0"]["median"]
    assert est == pytest.approx(0.5, abs=0.15)


def test_reproduce_two_cubes_ratio_table_monotone(tmp_path):
    assert main(["reproduce", "two-cubes", "--ratio", "8", "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "two-cubes" / "two_cubes.csv").read_text().splitlines()
    header = rows[0].split(",")
    col = header.index("ratio")
    vals = [float(r.split(",")[col]) for r in rows[1:]]
    assert len(vals) == 3 and all(a < b for a, b in zip(vals, vals[1:]))


def test_manifest_verify_and_tamper(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RANDCOVER_OUT", str(tmp_path))
    assert main(["reproduce", "critical-exponent"]) == EXIT_OK
    run = tmp_path / "critical-exponent"
    man = json.loads((run / "manifest.json").read_text())
    assert man["config_sha256"] == load_builtin("critical-exponent").config_hash()
    assert set(man["files"]) >= {"config.json", "summary.json"}
    assert "run.log" not in man["files"]
    assert main(["verify", str(run)]) == EXIT_OK
    csv = next(run.glob("*.csv"))
    csv.write_text(csv.read_text() + "0,0\n")
    capsys.readouterr()
    assert main(["verify", str(run)]) == EXIT_FAIL
    assert "checksum mismatch" in capsys.readouterr().out
    # rewriting the manifest accepts the new contents
    assert main(["manifest", str(run)]) == EXIT_OK
    assert main(["verify", str(run)]) == EXIT_OK


def test_rerun_same_config_hash(tmp_path):
    for sub in ("a", "b"):
        assert main(["reproduce", "critical-exponent", "--out", str(tmp_path / sub)]) == EXIT_OK
    ha = json.loads((tmp_path / "a" / "critical-exponent" / "manifest.json").read_text())
    hb = json.loads((tmp_path / "b" / "critical-exponent" / "manifest.json").read_text())
    assert ha["config_sha256"] == hb["config_sha256"]
    assert ha["files"] == hb["files"]


def test_empty_run_dir_is_an_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["manifest", str(tmp_path / "empty")]) == EXIT_USAGE
    assert main(["verify", str(tmp_path / "empty")]) == EXIT_USAGE
    assert main(["manifest", str(tmp_path / "absent")]) == EXIT_USAGE


def test_timestamps_confined_to_log(tmp_path):
    for sub in ("a", "b"):
        assert main(["reproduce", "critical-exponent", "--out", str(tmp_path / sub)]) == EXIT_OK
    a, b = tmp_path / "a" / "critical-exponent", tmp_path / "b" / "critical-exponent"
    assert "seconds=" in (a / "run.log").read_text()
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name != "run.log":
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_parallel_jobs_match_serial(tmp_path):
    for sub, jobs in (("serial", "1"), ("pool", "2")):
        assert main(["reproduce", "shrinking-balls", "--alpha", "3", "--seeds", "4", "--jobs", jobs,
                     "--out", str(tmp_path / sub)]) == EXIT_OK
    a = sorted((tmp_path / "serial" / "shrinking-balls").glob("*.csv"))
    b = sorted((tmp_path / "pool" / "shrinking-balls").glob("*.csv"))
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
