import json
import subprocess
import sys

import pytest

from causalbias import __version__
from causalbias.cli import main, parse_axes
from causalbias.errors import InputError

REFERENCE = "alpha=0.9,beta=0.1,gamma=0.8,delta=0.2,epsilon=0.4,tau=0.3,lam=0.5"

CONF_GRAPH = """\
node Z role=covariate
node A role=sensitive
node Y role=outcome
edge Z -> A
edge Z -> Y
edge A -> Y
"""

NO_CONF_GRAPH = """\
node A role=sensitive
node Y role=outcome
edge A -> Y
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def conf_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "conf.csv"
    assert main(["simulate", "--structure", "binary_confounding", "--param", REFERENCE,
                 "--n", "200000", "--seed", "42", "--out", str(path)]) == 0
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- audit -------------------------------------------------------------------


def test_audit_csv_with_graph(conf_csv, tmp_path, capsys):
    graph = write(tmp_path, "g.txt", CONF_GRAPH)
    out = tmp_path / "report.json"
    code, stdout, _ = run(["audit", "--data", conf_csv, "--graph", graph, "--out", str(out)], capsys)
    assert code == 0 and stdout == ""
    report = json.loads(out.read_text())
    (entry,) = report["biases"]
    assert entry["kind"] == "conf" and entry["agrees"]
    assert entry["closed_form_value"] == pytest.approx(0.42, abs=0.01)
    assert report["format_version"] == "1" and report["ok"]


def test_audit_report_is_byte_stable(conf_csv, tmp_path, capsys):
    graph = write(tmp_path, "g.txt", CONF_GRAPH)
    texts = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert main(["audit", "--data", conf_csv, "--graph", graph, "--out", str(out)]) == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]


def test_audit_column_map(conf_csv, tmp_path, capsys):
    graph = write(tmp_path, "g.txt", CONF_GRAPH.replace("Z", "Q"))
    code, stdout, _ = run(["audit", "--data", conf_csv, "--graph", graph, "--map", "Z=Q"], capsys)
    assert code == 0
    assert json.loads(stdout)["biases"][0]["label"] == "conf[Q]"


def test_audit_structural_mismatch(conf_csv, tmp_path, capsys):
    graph = write(tmp_path, "g.txt", NO_CONF_GRAPH)
    code, _, err = run(["audit", "--data", conf_csv, "--graph", graph, "--bias", "conf"], capsys)
    assert code == 3 and "confounder" in err
    code, _, err = run(["audit", "--data", conf_csv, "--graph", write(tmp_path, "c.txt", CONF_GRAPH),
                        "--bias", "sel"], capsys)
    assert code == 3 and "collider" in err


def test_audit_positivity(tmp_path, capsys):
    rows = "Z,A,Y\n" + "0,0,0\n0,1,1\n1,0,1\n1,0,0\n0,0,1\n"
    csv = write(tmp_path, "p.csv", rows)
    code, _, err = run(["audit", "--data", csv, "--graph", write(tmp_path, "g.txt", CONF_GRAPH)], capsys)
    assert code == 4 and "positivity" in err and "Z=1" in err


def test_audit_input_errors(tmp_path, capsys):
    graph = write(tmp_path, "g.txt", CONF_GRAPH)
    bad = write(tmp_path, "bad.csv", "Z,A,Y\n0,1,2\n")
    assert run(["audit", "--data", bad, "--graph", graph], capsys)[0] == 2
    assert run(["audit", "--data", str(tmp_path / "missing.csv"), "--graph", graph], capsys)[0] == 2
    broken = write(tmp_path, "broken.txt", "node A role=sensitive\nedge A => Y\n")
    code, _, err = run(["audit", "--data", bad, "--graph", broken], capsys)
    assert code == 2 and "line 2" in err
    assert run(["audit", "--bias", "conf"], capsys)[0] == 2
    assert run(["audit", "--scm", "linear_confounding", "--param", "beta=x"], capsys)[0] == 2


def test_audit_linear_colliding(capsys):
    code, out, _ = run(["audit", "--scm", "linear_colliding", "--param", "alpha=0.5,eta=0.3,epsilon=0.6",
                        "--n", "1000000", "--seed", "42"], capsys)
    assert code == 0
    entry = next(e for e in json.loads(out)["biases"] if e["kind"] == "sel")
    assert entry["closed_form_value"] == pytest.approx(-0.2647, abs=0.01)
    assert entry["agrees"]


def test_audit_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("CAUSALBIAS_SEED", "17")
    code, out, _ = run(["audit", "--scm", "binary_confounding", "--param", REFERENCE, "--n", "1000"], capsys)
    assert code == 0 and json.loads(out)["run"]["seed"] == 17
    monkeypatch.setenv("CAUSALBIAS_SEED", "x")
    assert run(["audit", "--scm", "binary_confounding", "--param", REFERENCE], capsys)[0] == 2


# -- sweep -------------------------------------------------------------------


def test_sweep_grid_and_slices(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, stdout, _ = run(["sweep", "--bias", "conf", "--axes", "beta=-1:1:0.1,gamma=-1:1:0.1",
                           "--std", "--out", str(out)], capsys)
    assert code == 0 and stdout == ""
    lines = out.read_bytes().split(b"\n")
    assert lines[0] == b"beta,gamma,bias" and lines[-1] == b""
    rows = [line.split(b",") for line in lines[1:-1]]
    assert len(rows) == 441
    assert all(r[2] == b"0" for r in rows if r[0] == b"0")
    assert [b"1", b"1", b"1"] in rows
    assert (tmp_path / "grid.slice_hold0.5.csv").exists()
    assert (tmp_path / "grid.slice_hold-1.csv").exists()


def test_sweep_is_byte_stable_across_threads(tmp_path):
    paths = []
    for threads in ("1", "4"):
        out = tmp_path / f"g{threads}.csv"
        assert main(["sweep", "--bias", "meas", "--axes", "beta=-1:1:0.1,lam=-1:1:0.1",
                     "--threads", threads, "--no-slices", "--out", str(out)]) == 0
        paths.append(out.read_bytes())
    assert paths[0] == paths[1]


def test_sweep_reports_singular_cells(capsys):
    code, out, err = run(["sweep", "--bias", "meas", "--axes", "beta=1:1:1,lam=1:1:1", "--std"], capsys)
    assert code == 0 and "nan" in out and "singular cell" in err


def test_sweep_bad_axes(capsys):
    assert run(["sweep", "--bias", "conf", "--axes", "beta=-1:1"], capsys)[0] == 2
    assert run(["sweep", "--bias", "conf", "--axes", "eta=-1:1:0.5"], capsys)[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--bias", "nope", "--axes", "beta=-1:1:0.5"])
    assert exc.value.code == 2
    with pytest.raises(InputError):
        parse_axes("beta=a:b:c")
    assert parse_axes("beta=-1:1:0.5") == {"beta": (-1.0, 1.0, 0.5)}


# -- simulate, selftest, version ---------------------------------------------


def test_simulate_is_deterministic(tmp_path, capsys):
    argv = ["simulate", "--structure", "linear_confounding", "--param", "beta=0.5", "--n", "5", "--seed", "3"]
    first = run(argv, capsys)[1]
    second = run(argv, capsys)[1]
    assert first == second and first.splitlines()[0] == "Z,A,Y" and len(first.splitlines()) == 6
    assert run(argv[:-2] + ["--n", "0"], capsys)[0] == 2


def test_selftest_passes_and_detects_injected_error(capsys):
    code, out, _ = run(["selftest", "--no-mc"], capsys)
    statuses = [line.split()[0] for line in out.splitlines()[:-1]]
    assert code == 0 and "FAIL" not in statuses and "XFAIL" in statuses
    code, out, _ = run(["selftest", "--no-mc", "--inject", "conf.binary"], capsys)
    assert code == 1 and "FAIL  conf.binary " in out
    assert run(["selftest", "--no-mc"], capsys)[1] == run(["selftest", "--no-mc"], capsys)[1]


def test_version_and_console_script():
    proc = subprocess.run([sys.executable, "-m", "causalbias.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == f"causalbias {__version__} (report format 1, sweep format 1)"
    proc = subprocess.run([sys.executable, "-m", "causalbias.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
