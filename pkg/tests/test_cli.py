import json

import numpy as np
import pytest

from fnx.cli import main
from fnx.gridcore import read_grid, sample, write_grid


@pytest.fixture
def config_file(tmp_path):
    def write(text=""):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return str(path)
    return write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bad_config_exits_with_2(capsys, config_file):
    code, _, err = run(capsys, "verify", "--suite", "luxemburg", "--config", config_file("[grid]\ncells = 100\n"))
    assert code == 2 and "cells" in err


def test_missing_input_exits_with_2(capsys, tmp_path):
    code, _, err = run(capsys, "norm", "--in", str(tmp_path / "absent.fnxg"))
    assert code == 2 and err.startswith("error:")


def test_refused_hypothesis_exits_with_3_and_prints_the_minimum(capsys, config_file):
    code, _, err = run(capsys, "norm", "--config", config_file("[analysis]\na = 1\n"))
    assert code == 3
    assert "required a > 1" in err


def test_verify_report_is_deterministic(capsys, tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        code, _, err = run(capsys, "verify", "--suite", "luxemburg", "--out", str(p), "--csv", str(tmp_path / "c.csv"))
        assert code == 0 and "[PASS] luxemburg" in err
    docs = [json.loads(p.read_text()) for p in paths]
    for d in docs:
        d.pop("timestamp")
    assert docs[0] == docs[1]
    assert docs[0]["schema"] == "fnx-report/1" and docs[0]["passed"] is True
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0].startswith("suite,check,value") and len(rows) == 1 + len(docs[0]["suites"]["luxemburg"]["checks"])
    code, out, _ = run(capsys, "report", "--in", str(paths[0]))
    assert code == 0 and "variable_p_ramp" in out


def test_norm_and_extend_round_trip(capsys, tmp_path):
    f = sample(lambda x, y: np.exp(-10 * (x**2 + (y - 0.15) ** 2)), [(-1.5, 1.5)] * 2, 256)
    write_grid(tmp_path / "f.fnxg", f)
    code, out, _ = run(capsys, "norm", "--in", str(tmp_path / "f.fnxg"), "--csv", str(tmp_path / "n.csv"))
    report = json.loads(out)
    assert code == 0 and report["norm"]["value"] > 0 and report["norm"]["jmax"] == 8
    code, out, _ = run(capsys, "extend", "--in", str(tmp_path / "f.fnxg"), "--out", str(tmp_path / "ef.fnxg"))
    assert code == 0 and "restriction residual" in out
    assert read_grid(tmp_path / "ef.fnxg").same_grid(f)


def test_extend_requires_an_output(capsys):
    code, _, err = run(capsys, "extend")
    assert code == 2 and "--out" in err


def test_kernel_bundle_build_and_check(capsys, tmp_path):
    code, out, _ = run(capsys, "kernels", "build", "--out", str(tmp_path / "bundle"))
    assert code == 0 and "hash" in out
    code, _, _ = run(capsys, "kernels", "check", "--bundle", str(tmp_path / "bundle"), "--out", str(tmp_path / "k.json"))
    assert code == 0
    assert json.loads((tmp_path / "k.json").read_text())["suites"]["moments"]["passed"]
