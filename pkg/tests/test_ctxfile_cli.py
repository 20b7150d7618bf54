import numpy as np
import pytest

from ctxvalues import cli, scenarios
from ctxvalues.ctxfile import ContextFile, ContextFileError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# ---- file format -----------------------------------------------------------

@pytest.mark.parametrize("name", sorted(scenarios.SCENARIOS))
def test_dumps_round_trip(name):
    text = scenarios.get(name).dumps()
    again = ContextFile.loads(text)
    assert again.dumps() == text
    assert again == scenarios.get(name)


def test_parse_error_location():
    text = "DIM 1\nOUTCOME 1\n  1 + * g\nOBSERVABLE\n1\n"
    with pytest.raises(ContextFileError) as info:
        ContextFile.loads(text).operators()
    assert info.value.line == 3
    assert info.value.column == 7


@pytest.mark.parametrize("text, line", [
    ("OUTCOME 1\n1\n", 1),
    ("DIM 2\nOUTCOME 1\n1, 0\n0\nOBSERVABLE\n1, 0\n0, 1\n", 4),
    ("DIM 1\nBOGUS\n", 2),
    ("DIM 1\nOUTCOME 1\n1\n", 3),
    ("DIM 1\nGRANGE 1 0\n", 2),
])
def test_structural_errors(text, line):
    with pytest.raises(ContextFileError) as info:
        ContextFile.loads(text)
    assert info.value.line == line


def test_constant_sections_reject_g():
    cf = ContextFile.loads("DIM 1\nOUTCOME 1\n1\nOBSERVABLE\ng\n")
    with pytest.raises(ContextFileError):
        cf.get_observable()


def test_to_context_ce1():
    ctx = scenarios.ce1().to_context()
    assert ctx.validity == (0.0, 0.5) and len(ctx) == 3


# ---- commands --------------------------------------------------------------

def test_validate_ce1(capsys):
    code, out, _ = run(capsys, "validate", "ce1")
    assert code == 0 and "result: PASS" in out


def test_validate_typo(capsys):
    code, out, _ = run(capsys, "validate", "ce2_typo")
    assert code == 1
    assert "completeness: FAIL" in out


def test_validate_domain_error(tmp_path, capsys):
    text = scenarios.ce1().dumps().replace("GRANGE 0 0.5", "GRANGE 0 0.9")
    path = tmp_path / "wide.ctx"
    path.write_text(text)
    code, out, _ = run(capsys, "validate", path)
    assert code == 1
    assert "negative argument" in out and "sqrt" in out


def test_validate_parse_error(tmp_path, capsys):
    path = tmp_path / "bad.ctx"
    path.write_text("DIM 1\nOUTCOME 1\n1 + \nOBSERVABLE\n1\n")
    code, out, _ = run(capsys, "validate", path)
    assert code == 1 and "line 3" in out


def test_scenario_then_validate(tmp_path, capsys):
    path = tmp_path / "ce2.ctx"
    assert run(capsys, "scenario", "ce2", "--out", path)[0] == 0
    assert path.read_text() == scenarios.ce2().dumps()
    code, out, _ = run(capsys, "validate", path)
    assert code == 0
    code, out, _ = run(capsys, "scenario", "ce2")
    assert out == path.read_text()


def test_scenario_unknown(capsys):
    code, _, err = run(capsys, "scenario", "nope")
    assert code == 2 and "ce1" in err


def test_projective_scenario_with_obs(capsys):
    code, out, _ = run(capsys, "scenario", "projective", "--obs", "1,2,2")
    assert code == 0
    cf = ContextFile.loads(out)
    assert len(cf.outcomes) == 2 and cf.dim == 3


def _values(out):
    return {k.strip(): v.strip() for k, v in (line.split(":", 1) for line in out.splitlines())}


def test_solve_pinv(capsys):
    code, out, _ = run(capsys, "solve", "ce1", "--g", 0.1)
    vals = _values(out)
    assert code == 0 and vals["method"] == "pseudoinverse"
    assert float(vals["alpha_1"]) == pytest.approx(5)
    assert float(vals["alpha_2"]) == pytest.approx(-5)
    assert abs(float(vals["alpha_3"])) < 1e-12
    assert float(vals["norm_sq"]) == pytest.approx(50)


def test_solve_fixed(capsys):
    code, out, _ = run(capsys, "solve", "ce1", "--g", 0.1, "--method", "fixed", "--pin", "1=1/g^2", "--obs", "1,1")
    assert code == 0
    assert float(_values(out)["alpha_3"]) == pytest.approx(-106.25, rel=1e-12)


def test_solve_exact_ce2(capsys):
    code, out, _ = run(capsys, "solve", "ce2", "--g", 0.1, "--method", "exact")
    vals = _values(out)
    assert code == 0
    assert float(vals["alpha_1"]) == pytest.approx(20 / 3, rel=1e-10)
    assert float(vals["alpha_3"]) == pytest.approx(-280 / 3, rel=1e-10)


def test_solve_inconsistent_pins(capsys):
    code, out, _ = run(capsys, "solve", "projective", "--g", 0, "--method", "fixed", "--pin", "1=3")
    assert code == 1 and "residual" in out


@pytest.mark.parametrize("argv", [
    ["solve", "ce1", "--g", "0.1", "--method", "fixed"],
    ["solve", "ce1", "--g", "0.1", "--method", "fixed", "--pin", "9=1"],
    ["solve", "ce1", "--g", "0.1", "--method", "fixed", "--pin", "1=x"],
    ["solve", "ce1", "--g", "0.1", "--obs", "1,2,3"],
    ["solve", "missing.ctx", "--g", "0.1"],
    ["sweep", "ce1", "--gmin", "0.1", "--gmax", "0.01"],
])
def test_usage_errors(capsys, argv):
    assert cli.main(argv) == 2


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "ce1"])
    assert info.value.code == 2


def _summary(out):
    line = out.strip().splitlines()[-1]
    assert line.startswith("# summary:")
    return dict(kv.split("=", 1) for kv in line[len("# summary: "):].split(" ", 5)[:5]), line


def test_sweep_ce1_pinv(capsys):
    code, out, _ = run(capsys, "sweep", "ce1")
    assert code == 0
    rows = [r for r in out.splitlines() if not r.startswith("#")]
    header = rows[0].split(",")
    assert header[:4] == ["g", "alpha_1", "alpha_2", "alpha_3"] and header[-1] == "status"
    data = np.array([[float(x) for x in r.split(",")[:-1]] for r in rows[1:]])
    assert len(data) == 21 and np.all(np.diff(data[:, 0]) > 0)
    assert np.all(np.isfinite(data))
    fields, line = _summary(out)
    assert float(fields["discrepancy"]) <= 1e-6
    assert "weak value recovered" in line


def test_sweep_pinned_flags_context_dependence(capsys):
    code, out, _ = run(capsys, "sweep", "ce1", "--method", "fixed", "--pin", "1=1/g^2")
    fields, line = _summary(out)
    assert float(fields["discrepancy"]) > 0.01
    assert "context-dependent" in line or "divergent" in line


def test_sweep_ce2_flags_deviation(capsys):
    code, out, _ = run(capsys, "sweep", "ce2", "--method", "exact")
    fields, line = _summary(out)
    assert float(fields["discrepancy"]) > 0.01 and "context-dependent" in line


def test_sweep_deterministic_and_parallel(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "sweep", "ce1", "--out", a)
    run(capsys, "sweep", "ce1", "--out", b, "--jobs", 4)
    assert a.read_text() == b.read_text()
    run(capsys, "sweep", "ce1", "--out", b)
    assert a.read_text() == b.read_text()


def test_sweep_records_point_failures(capsys):
    code, out, _ = run(capsys, "sweep", "ce1", "--method", "exact", "--points", 8)
    rows = out.strip().splitlines()
    assert all("error" in r.split(",")[-1] for r in rows[1:-1])
    assert code == 1


def test_audit_commands(capsys):
    code, out, _ = run(capsys, "audit", "ce1")
    assert code == 0 and "n=1" in out
    code, out, _ = run(capsys, "audit", "ce2")
    assert code == 1
    assert "(iv) order" in out and "FAIL" in out and "(0.5, " in out


def test_audit_without_state(tmp_path, capsys):
    cf = scenarios.ce1()
    cf.state = None
    path = tmp_path / "nostate.ctx"
    path.write_text(cf.dumps())
    code, out, _ = run(capsys, "audit", path)
    assert code == 0 and "maximally mixed" in out
