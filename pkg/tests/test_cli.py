import csv
import json
import math
import shutil
import subprocess
import sys

import pytest
import yaml

from phasesketch import cli
from phasesketch.config import ConfigError, config_from_dict, config_to_dict, load_config
from phasesketch.store import FORMAT_VERSION, RecordStore, StoreError
from phasesketch.vqe_engine import run_sweep

BASE = {
    "model": {"kind": "tfim-1d", "size": 4},
    "g_grid": {"min": 0.5, "max": 1.5, "count": 3},
    "p_grid": [1, 2, 3, 4],
    "n_restarts": 1,
    "seed": 4,
    "compute_exact": True,
}


def write_config(tmp_path, raw, name="sweep.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw) if name.endswith(".yaml") else json.dumps(raw))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp, {**BASE, "output_dir": str(tmp / "out")})
    assert cli.main(["run", "--config", str(cfg)]) == 0
    return tmp, cfg, tmp / "out"


def test_run_writes_store(finished):
    _, _, out = finished
    recs = RecordStore(out).records()
    # 3 g x 4 p x (1 random + depth + cross-g)
    assert len(recs) == 36
    assert sum(r.best for r in recs) == 12
    assert all(r.exact_ref for r in recs)


def test_resume_adds_nothing(finished, capsys):
    _, cfg, out = finished
    assert cli.main(["run", "--config", str(cfg), "--resume"]) == 0
    assert capsys.readouterr().out.startswith("0 new records")


def test_rerun_without_resume_refused(finished, capsys):
    _, cfg, _ = finished
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert "--resume" in capsys.readouterr().err


def test_different_config_refused(finished, tmp_path):
    _, _, out = finished
    cfg = write_config(tmp_path, {**BASE, "seed": 5, "output_dir": str(out)})
    assert cli.main(["run", "--config", str(cfg), "--resume"]) == 1


def test_analyze_columns(finished):
    _, _, out = finished
    assert cli.main(["analyze", "--records", str(out), "--normalize"]) == 0
    rows = read_csv(out / "analysis.csv")
    assert rows[0] == ["p", "h_x", "energy", "dE_dp", "dE_dp_norm", "m_z", "dmz_dhx"]
    assert len(rows) == 1 + 12
    # first depth has no difference
    assert rows[1][3] == "" and rows[-1][3] != ""
    norms = [abs(float(r[4])) for r in rows[4:]]
    assert max(norms) == pytest.approx(1.0)


def test_analyze_energy_is_best_record(finished):
    _, _, out = finished
    recs = RecordStore(out).records()
    rows = read_csv(out / "analysis.csv")[1:]
    for r in rows:
        best = min(x.energy for x in recs if x.p == int(r[0]) and math.isclose(x.g, float(r[1])))
        assert float(r[2]) == pytest.approx(best, abs=1e-12)


def test_report(finished, capsys):
    _, _, out = finished
    assert cli.main(["report", "--records", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == "p,argmin_dE_dp_hx,argmax_abs_dmz_dhx,median_guard"
    rows = read_csv(out / "report.csv")
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]
    assert rows[1][1] == ""
    assert all(float(r[1]) in (0.5, 1.0, 1.5) for r in rows[2:])


def test_fit(finished):
    _, _, out = finished
    assert cli.main(["fit", "--records", str(out)]) == 0
    rows = read_csv(out / "fit.csv")
    assert rows[0] == ["h_x", "a", "gamma", "e0_fit", "residual"]
    assert len(rows) == 4
    for r in rows[1:]:
        assert float(r[4]) >= 0


def test_exact_writes_table(tmp_path):
    cfg = write_config(tmp_path, {**BASE, "g_grid": [0.0, 1.0]})
    assert cli.main(["exact", "--config", str(cfg), "--output", str(tmp_path / "ex")]) == 0
    rows = read_csv(tmp_path / "ex" / "exact.csv")
    assert rows[0] == ["h_x", "E0", "degeneracy", "gap", "m_z"]
    assert float(rows[1][1]) == pytest.approx(-3.25)
    assert float(rows[1][4]) == pytest.approx(-1.0)


def test_exact_attaches_to_existing_store(tmp_path):
    raw = {**BASE, "compute_exact": False, "p_grid": [1, 2], "output_dir": str(tmp_path / "s")}
    cfg = write_config(tmp_path, raw)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert all(r.exact_ref is None for r in RecordStore(tmp_path / "s").records())
    assert cli.main(["exact", "--config", str(cfg)]) == 0
    recs = RecordStore(tmp_path / "s").records()
    assert all(r.exact_ref and r.energy >= r.exact_ref["E0"] - 1e-9 for r in recs)


@pytest.mark.parametrize("patch,path", [
    ({"p_grid": [0]}, "p_grid/0"),
    ({"model": {"kind": "potts", "size": 4}}, "model/kind"),
    ({"optimizer": {"tol_g": -1}}, "optimizer/tol_g"),
    ({"g_grid": {"min": 0, "max": 1}}, "g_grid"),
    ({"colour": "red"}, "<root>"),
])
def test_schema_errors_name_the_field(tmp_path, capsys, patch, path):
    cfg = write_config(tmp_path, {**BASE, **patch, "output_dir": str(tmp_path / "o")})
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert path in capsys.readouterr().err
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_semantic_config_error(tmp_path):
    cfg = write_config(tmp_path, {**BASE, "p_grid": [2, 1], "output_dir": str(tmp_path / "o")})
    assert cli.main(["run", "--config", str(cfg)]) == 2


def test_missing_output_dir(tmp_path):
    assert cli.main(["run", "--config", str(write_config(tmp_path, BASE))]) == 2


def test_json_config_round_trip(tmp_path):
    cfg = load_config(write_config(tmp_path, BASE, "sweep.json"))
    assert cfg.g_grid == [0.5, 1.0, 1.5]
    again = config_from_dict(config_to_dict(cfg))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_store_round_trip(tmp_path):
    cfg = config_from_dict({**BASE, "p_grid": [1], "g_grid": [0.7]})
    store = RecordStore(tmp_path / "s").open(config_to_dict(cfg))
    recs = run_sweep(cfg, store)
    store.rewrite(recs)
    back = {r.key: r.to_dict() for r in RecordStore(tmp_path / "s").records()}
    assert back == {r.key: r.to_dict() for r in recs}


def test_version_rejected(tmp_path):
    cfg = config_from_dict({**BASE, "p_grid": [1], "g_grid": [0.7]})
    store = RecordStore(tmp_path / "s").open(config_to_dict(cfg))
    run_sweep(cfg, store)
    m = json.loads(store.manifest_path.read_text())
    m["format_version"] = "2.0"
    store.manifest_path.write_text(json.dumps(m))
    with pytest.raises(StoreError):
        store.manifest()
    m["format_version"] = FORMAT_VERSION
    store.manifest_path.write_text(json.dumps(m))
    lines = store.records_path.read_text().splitlines()
    bad = json.loads(lines[0])
    bad["format_version"] = "9.1"
    store.records_path.write_text(json.dumps(bad) + "\n")
    with pytest.raises(StoreError):
        store.records()


def test_interrupted_run_compacts(tmp_path):
    cfg = config_from_dict({**BASE, "p_grid": [1, 2], "g_grid": [0.7]})
    store = RecordStore(tmp_path / "s").open(config_to_dict(cfg))
    recs = run_sweep(cfg, store)
    # a duplicated line and a torn trailing record, as after a kill
    with open(store.records_path, "a") as fh:
        fh.write(store.records_path.read_text().splitlines()[0] + "\n")
        fh.write('{"format_version": "1.0", "model": "tf')
    assert len(store.records()) == len(recs)
    store.open(config_to_dict(cfg), resume=True)
    assert len(store.records_path.read_text().splitlines()) == len(recs)
    assert len(run_sweep(cfg, store)) == len(recs)


def test_workers_from_environment(tmp_path, monkeypatch):
    seen = {}

    def fake_run(cfg, store, workers=None, progress=None):
        seen["workers"] = workers
        return []

    monkeypatch.setattr(cli, "run_sweep", fake_run)
    monkeypatch.setenv("PHASESKETCH_WORKERS", "3")
    cfg = write_config(tmp_path, {**BASE, "output_dir": str(tmp_path / "o")})
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert seen["workers"] == 3
    assert cli.main(["run", "--config", str(cfg), "--resume", "--workers", "2"]) == 0
    assert seen["workers"] == 2


def test_missing_store(tmp_path, capsys):
    assert cli.main(["analyze", "--records", str(tmp_path / "nope")]) == 1
    assert "no record store" in capsys.readouterr().err


def test_partial_grid_warns(finished, tmp_path):
    _, _, out = finished
    copy = tmp_path / "partial"
    shutil.copytree(out, copy)
    store = RecordStore(copy)
    store.rewrite([r for r in store.records() if not (r.p == 4 and r.g == 1.0)])
    with pytest.warns(UserWarning, match="1 missing"):
        assert cli.main(["analyze", "--records", str(copy)]) == 0
    row = [r for r in read_csv(copy / "analysis.csv") if r[0] == "4" and float(r[1]) == 1.0][0]
    assert row[2] == ""


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "phasesketch.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("run", "analyze", "fit", "exact", "report"):
        assert cmd in out.stdout
