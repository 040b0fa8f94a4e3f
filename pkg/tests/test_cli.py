"""Command line runner: outputs, exit codes, determinism and configs."""
import json

import pytest

from toricfun import cli, reporting
from toricfun.errors import SpecError
from toricfun.reporting import ExperimentConfig, oracle_dump, parse_m, run_suite, write_outputs


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.main([*args, "--out", str(out)])
    return code, out


def test_cm_suite_writes_all_outputs(tmp_path):
    code, out = run(tmp_path, "cm", "--n", "1", "--m", "1-2")
    assert code == 0
    assert {p.name for p in out.iterdir()} == {"report.json", "summary.csv", "margins.dat", "margins.png"}
    rep = json.loads((out / "report.json").read_text())
    assert rep["rows"][1]["value"] == pytest.approx(3.306853, abs=1e-6)
    assert (out / "summary.csv").read_text().splitlines()[0].startswith("index,seed,n,m,metric,value")
    assert (out / "margins.dat").read_text().startswith("# suite cm")


def test_main_bound_suite_is_green_and_reproducible(tmp_path):
    code, out = run(tmp_path, "main-bound", "--n", "1", "--m", "3", "--seeds", "4", "--no-plot")
    assert code == 0
    first = (out / "report.json").read_bytes()
    out2 = tmp_path / "again"
    assert cli.main(["main-bound", "--n", "1", "--m", "3", "--seeds", "4", "--jobs", "2",
                     "--no-plot", "--out", str(out2)]) == 0
    assert (out2 / "report.json").read_bytes() == first
    assert (out2 / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()


def test_config_file_mirrors_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 1, "m": [1, 2], "volume": "fs"}))
    code, out = run(tmp_path, "cm", "--config", str(cfg), "--no-plot")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["m"] == [1, 2]
    assert rep["config"]["volume"] == "fubini_study"


def test_spec_file(tmp_path):
    spec = tmp_path / "h.json"
    spec.write_text(json.dumps({"kind": "canonical", "n": 1}))
    code, out = run(tmp_path, "vfun", "--spec", str(spec), "--m", "1", "--no-plot")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["rows"]) == 1
    assert rep["rows"][0]["value"] == pytest.approx(0.8109302162163288, abs=1e-10)


def test_bad_config_exit_code(tmp_path):
    assert run(tmp_path, "cm", "--tol", "-1")[0] == 2
    assert run(tmp_path, "cm", "--resolution", "1")[0] == 2


def test_negative_margin_gives_nonzero_exit(tmp_path, monkeypatch):
    def fake(cfg, source, m):
        return reporting._row(None, 0, m, 1.0, bound=0.5)

    monkeypatch.setitem(reporting._TASKS, "vfun", fake)
    result = run_suite(ExperimentConfig("vfun", m=[1]))
    assert result.exit_code == reporting.EXIT_MARGIN
    paths = write_outputs(result, tmp_path / "o", plot=False)
    assert "-0.5" in (tmp_path / "o" / "margins.dat").read_text()
    assert len(paths) == 3


def test_every_suite_runs(tmp_path):
    for suite in reporting.SUITES:
        cfg = ExperimentConfig(suite, n=1, m=[3], seeds=1)
        result = run_suite(cfg)
        assert result.exit_code == 0, suite
        assert result.rows


def test_torsion_suite_reports_certificate():
    result = run_suite(ExperimentConfig("torsion", n=1, seeds=1))
    assert result.extra["m0"] == 2
    assert result.extra["todd"]["b_4"] == "-1/720"
    assert [r["m"] for r in result.rows] == [2, 3, 4, 5]


def test_oracle_dump():
    table = oracle_dump(1, 2)
    assert {k: str(v) for k, v in table.items()} == {(0,): "4/3", (1,): "1", (2,): "4/3"}


def test_parse_m_and_validation():
    assert parse_m("2-4,7") == [2, 3, 4, 7]
    assert parse_m(3) == [3]
    with pytest.raises(SpecError):
        ExperimentConfig("nope")
    with pytest.raises(SpecError):
        ExperimentConfig.from_dict({"suite": "cm", "bogus": 1})
