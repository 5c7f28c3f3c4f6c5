import re

import pytest

from fraclk import __version__
from fraclk.cli import EXIT_ASSERT, EXIT_GATE, EXIT_MODEL, EXIT_USAGE, main


def run(args, capsys=None):
    try:
        return main(args)
    except SystemExit as exc:
        return exc.code


def test_dimension_prints_cantor_D(capsys):
    assert run(["dimension", "cantor"]) == 0
    assert "D = 0.6309297536" in capsys.readouterr().out
    assert run(["dimension", "--model", "sierpinski"]) == 0
    assert "D = 1.5849625007" in capsys.readouterr().out


def test_missing_seed_is_usage_error(tmp_path):
    assert run(["curve", "--model", "cantor", "--out", str(tmp_path)]) == EXIT_USAGE
    assert run(["curve", "--model", "cantor", "--seed", "1", "--k", "7"]) == EXIT_USAGE
    assert run(["frobnicate"]) == EXIT_USAGE


def test_invalid_model_exit_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: bad\ndimension: 3\n")
    assert run(["dimension", str(bad)]) == EXIT_MODEL
    assert run(["dimension", str(tmp_path / "missing.yaml")]) == EXIT_MODEL


def test_gate_exit_3(tmp_path):
    args = ["curve", "dust4", "--seed", "1", "--h", "0.01", "--eps-min", "0.02",
            "--out", str(tmp_path)]
    assert run(args) == EXIT_GATE


def test_hard_assertion_exit_4(tmp_path, monkeypatch):
    from fraclk import appendix
    orig = appendix.curvatures_2d
    monkeypatch.setattr(appendix, "curvatures_2d", lambda f, r: orig(f, r)._replace(chi=3))
    args = ["appendix-check", "--clouds", "1", "--seed", "1", "--out", str(tmp_path)]
    assert run(args) == EXIT_ASSERT


def test_csv_comment_and_header(tmp_path):
    assert run(["curve", "random-cantor", "--seed", "4", "--eps-min", "1e-2",
                "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert re.match(rf"# fraclk {re.escape(__version__)} model=[0-9a-f]{{16}} seed=4 R=1.5 ", lines[0])
    assert "eps_min=0.01" in lines[0] and "q=" in lines[0]
    assert lines[1] == "replicate,k,epsilon,C_k,rescaled"


@pytest.mark.parametrize("cmd", [
    ["curve", "random-cantor", "--eps-min", "1e-3", "--replicates", "3"],
    ["sample", "random-dust", "--replicates", "3", "--depth", "4"],
    ["fractal-curvature", "random-cantor", "--delta", "1e-3", "--replicates", "4"],
    ["renewal-check", "cantor", "--eps-max", "0.5", "--n-max", "6"],
    ["renewal-check", "random-cantor", "--eps-min", "1e-2", "--replicates", "3"],
    ["curve", "dust4", "--h", "0.00390625", "--eps-max", "0.5"],
    ["appendix-check", "--clouds", "2"],
])
def test_byte_identical_reruns_and_workers(tmp_path, cmd):
    outs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 8)):
        d = tmp_path / tag
        assert run(cmd + ["--seed", "12", "--workers", str(workers), "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
    assert outs[0] and outs[0] == outs[1] == outs[2]
