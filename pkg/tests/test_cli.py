import csv
import io
import json
import math
import shutil
import subprocess

import pytest

from relichoice.cli import ExitCode, demo_path, main

SERIES = "comp A(lambda=0.1, t0=0) comp B(lambda=0.2, t0=0) comp C(lambda=0.3, t0=0)\nsystem: A; B; C\n"
PARALLEL = "comp A(lambda=1, t0=0) comp B(lambda=2, t0=0) comp C(lambda=4, t0=0)\nsystem: [0.2: A, 0.3: B, 0.5: C]\n"
LATE = "comp A(lambda=1, t0=2) comp B(lambda=1, t0=4)\nsystem: [0.5: A, 0.5: B]\n"
NESTED = "comp A(lambda=1, t0=0) comp B(lambda=2, t0=1)\nsystem: A; [0.5: A, _: B]\n"
LEAF = "comp A(lambda=1, t0=0)\nsystem: A\n"


@pytest.fixture
def write(tmp_path):
    def _write(text, name="s.rc"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_exit_code_values():
    assert [int(c) for c in ExitCode] == [0, 1, 2, 3]


def test_validate_ok(capsys):
    assert run(capsys, "validate", "@datacenter") == (0, "", "")
    assert run(capsys, "validate", "@datacenter.rc")[0] == 0


def test_validate_weight_error(capsys, write):
    path = write("comp A(lambda=1, t0=0) comp B(lambda=1, t0=0)\nsystem: [0.7: A, 0.7: B]\n")
    code, out, _ = run(capsys, "validate", path)
    assert code == ExitCode.INVALID
    lines = out.strip().splitlines()
    assert len(lines) == 1
    assert "weights sum 1.4" in lines[0] and ":2:" in lines[0]


def test_validate_missing_file(capsys, tmp_path):
    assert run(capsys, "validate", tmp_path / "absent.rc")[0] == ExitCode.IO


def test_validate_schema_error(capsys, write):
    path = write(json.dumps({"components": [{"id": "A", "lambda": 1, "t0": 0}], "system": {"leaf": "Z"}}), "s.json")
    code, out, _ = run(capsys, "validate", path)
    assert code == ExitCode.INVALID
    assert "system.leaf" in out


def test_analyze_demo_paper(capsys):
    code, out, _ = run(capsys, "analyze", "@datacenter", "--mode", "paper", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert list(doc) == ["shape", "mode", "mttf", "mtbf", "mttr", "sfr", "rte", "pdf"]
    assert doc["mode"] == "paper" and doc["shape"] == "flat-parallel"
    with open(demo_path()) as fh:
        raw = json.load(fh)
    comps = raw["components"]
    ws = [b["weight"] for b in raw["system"]["choice"]]
    ws = [w if w != "residual" else 1 - sum(x for x in ws if x != "residual") for w in ws]
    want_mtbf = sum(w * (c["t0"] + 1 / c["lambda"]) for w, c in zip(ws, comps))
    want_mttr = sum(w * c["t0"] for w, c in zip(ws, comps))
    assert doc["mtbf"] == pytest.approx(want_mtbf, rel=1e-12)
    assert doc["mttr"] == pytest.approx(want_mttr, rel=1e-12)
    assert set(doc["rte"]) <= {"rho", "reliable_until", "method", "quadratic"}


def test_analyze_series_rte(capsys, write):
    code, out, _ = run(capsys, "analyze", write(SERIES), "--rho", repr(math.exp(-0.6)), "--format", "json")
    assert code == 0
    assert json.loads(out)["rte"]["reliable_until"] == pytest.approx(1.0, abs=1e-12)


def test_analyze_nested_paper_falls_back(capsys, write):
    code, out, err = run(capsys, "analyze", write(NESTED), "--mode", "paper", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["shape"] == "nested"
    assert "note:" in err


def test_analyze_text_format(capsys, write):
    code, out, _ = run(capsys, "analyze", write(PARALLEL), "--sfr-at", "0,1")
    assert code == 0
    assert "MTTF" in out and "numeric" in out


@pytest.mark.parametrize("rho", ["0", "1.5", "-0.2"])
def test_analyze_bad_rho(capsys, write, rho):
    assert run(capsys, "analyze", write(LEAF), "--rho", rho)[0] == ExitCode.DOMAIN


def test_curve_leaf(capsys, write):
    code, out, _ = run(capsys, "curve", write(LEAF), "--from", 0, "--to", 1, "--steps", 2)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["T", "value"]
    assert float(rows[1][0]) == 0 and float(rows[1][1]) == 1
    assert float(rows[2][0]) == 1 and float(rows[2][1]) == pytest.approx(math.exp(-1), abs=1e-15)


def test_curve_survival_non_increasing(capsys, write):
    code, out, _ = run(capsys, "curve", write(NESTED), "--from", 0, "--to", 5, "--steps", 200)
    vals = [float(r[1]) for r in list(csv.reader(io.StringIO(out)))[1:]]
    assert code == 0 and len(vals) == 200
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_curve_pdf_integrates_to_one(capsys, write):
    code, out, _ = run(capsys, "curve", write(PARALLEL), "--from", 0, "--to", 20, "--steps", 20001, "--quantity", "pdf")
    rows = [(float(t), float(v)) for t, v in list(csv.reader(io.StringIO(out)))[1:]]
    area = sum((t1 - t0) * (v0 + v1) / 2 for (t0, v0), (t1, v1) in zip(rows, rows[1:]))
    assert code == 0
    assert area == pytest.approx(1.0, abs=1e-4)


def test_curve_errors(capsys, write):
    assert run(capsys, "curve", write(LEAF), "--from", 0, "--to", 1, "--steps", 1)[0] == ExitCode.DOMAIN
    assert run(capsys, "curve", write(LATE), "--from", 1, "--to", 5, "--steps", 3, "--quantity", "sfr")[0] == ExitCode.DOMAIN
    assert run(capsys, "curve", write(LATE), "--from", 4, "--to", 5, "--steps", 3, "--quantity", "sfr")[0] == 0


def test_simulate_json(capsys, write):
    code, out, _ = run(capsys, "simulate", write(LEAF), "--trials", 100000, "--seed", 5, "--at", "1")
    doc = json.loads(out)
    assert code == 0
    assert doc["trials"] == 100000 and doc["seed"] == 5
    row = doc["survival"][0]
    assert abs(row["value"] - math.exp(-1)) <= 3 * row["std_error"]


def test_compare_flat_parallel_passes(capsys, write):
    code, out, _ = run(capsys, "compare", write(PARALLEL), "--trials", 100000, "--seed", 1, "--tolerance-sigmas", 4)
    assert code == 0
    assert out.rstrip().endswith("result: PASS")
    assert sum(1 for line in out.splitlines() if line.startswith("survival(")) == 5


def test_compare_documented_divergence(capsys, write):
    code, out, _ = run(capsys, "compare", write(LATE), "--trials", 100000, "--seed", 3, "--mode", "paper")
    assert code == 0
    mttf_row = next(line for line in out.splitlines() if line.startswith("MTTF"))
    assert "documented-divergence" in mttf_row
    mtbf_row = next(line for line in out.splitlines() if line.startswith("MTBF"))
    assert mtbf_row.endswith("ok")


def test_compare_detects_mismatch(capsys, write):
    # a zero tolerance cannot be met by a noisy estimate
    code, out, _ = run(capsys, "compare", write(PARALLEL), "--trials", 5000, "--tolerance-sigmas", 0)
    assert code == ExitCode.INVALID
    assert "FAIL" in out


def test_compare_trials_floor(capsys, write):
    assert run(capsys, "compare", write(LEAF), "--trials", 999)[0] == ExitCode.DOMAIN


def test_compare_is_deterministic_across_runs_and_lanes(capsys, write):
    path = write(NESTED)
    outs = [run(capsys, "compare", path, "--trials", 200000, "--seed", 42, "--lanes", n)[1] for n in (1, 1, 4)]
    assert outs[0] == outs[1] == outs[2]


def test_usage_error_exit_code(capsys):
    assert run(capsys, "analyze")[0] == 2
    assert run(capsys, "nope")[0] == 2


@pytest.mark.skipif(shutil.which("relichoice") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["relichoice", "validate", "@datacenter"], capture_output=True, text=True)
    assert proc.returncode == 0
