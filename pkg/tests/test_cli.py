import subprocess
import sys

import pytest

from eqforge import __version__
from eqforge.cli import main
from eqforge.cocycle import TGeometric, TrigPoly, Zero
from eqforge.config import RunConfig, parse_config, parse_potential
from eqforge.errors import ParseError, RangeError, UnknownKey

SMALL = """\
delta = 0.2
n_max = 8
max_spacing = 0.001
ns = 4,8
grid_n = 32
samples_per_cell = 16
span_n_max = 6
n_cap = 12
potential = trig:1,0,0.1
"""


def _run(tmp_path, args, config=SMALL, name="run"):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(config)
    out = tmp_path / name
    code = main(["--config", str(cfg), "--out", str(out), *args])
    return code, out


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.system == "cat" and cfg.delta == 0.3 and cfg.n_max == 25
    assert cfg.system_spec().matrix == (2, 1, 1, 1)
    assert cfg.n_list == [10, 20, 30]
    assert cfg.back_steps_or_none is None


def test_comments_and_whitespace():
    cfg = parse_config("# header\n\n  system = katok   # trailing\npotential=tgeo:2\n")
    assert cfg.system == "katok"
    assert cfg.potential_spec() == TGeometric(2.0)


def test_potential_parsing():
    assert parse_config("potential = tgeo:1.0").potential_spec() == TGeometric(1.0)
    assert parse_potential("zero") == Zero()
    p = parse_potential("trig:1,0,0.1;0,2,-0.05")
    assert isinstance(p, TrigPoly) and dict(p.coeffs) == {(1, 0): 0.1, (0, 2): -0.05}
    c = parse_potential("constant:2.5")
    assert c.constant == 2.5
    for bad in ("tgeo", "trig:1,0", "tgeo:nan", "exotic:1", "zero:1"):
        with pytest.raises(RangeError):
            parse_potential(bad)


def test_range_errors():
    with pytest.raises(RangeError):
        parse_config("matrix = 1,1,1,1")
    for text in ("delta = 0.6", "x0 = 1.0,0.2", "samples_per_cell = 10", "grid_n = 16",
                 "system = henon", "epsilon = 0.3", "pairs = 10"):
        with pytest.raises(RangeError):
            parse_config(text)


def test_parse_errors():
    with pytest.raises(UnknownKey):
        parse_config("delta = 0.2\nfoo = 1\n")
    with pytest.raises(ParseError) as e:
        parse_config("delta = 0.2\n\nn_max 25\n")
    assert e.value.line == 3
    with pytest.raises(ParseError) as e:
        parse_config("delta = 0.2\ndelta = 0.1\n")
    assert e.value.line == 2
    with pytest.raises(ParseError) as e:
        parse_config("n_max = twelve\n")
    assert e.value.line == 1


def test_echo():
    cfg = parse_config("delta = 0.25\nworkers = 4\n")
    lines = cfg.echo().splitlines()
    assert lines[0] == f"# eqforge v{__version__}"
    assert "# delta = 0.25" in lines and "# system = cat" in lines
    assert not any(ln.startswith("# out") or ln.startswith("# workers") for ln in lines)


def test_exit_code_config(tmp_path, capsys):
    code, _ = _run(tmp_path, ["pressure", "--method", "integral"], "matrix = 1,1,1,1\n")
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("RangeError:")
    code, _ = _run(tmp_path, ["construct"], "foo = 1\n")
    assert code == 2
    assert main(["--config", str(tmp_path / "missing.txt"), "construct"]) == 2


def test_exit_code_numeric(tmp_path, capsys):
    code, out = _run(tmp_path, ["pressure", "--method", "ulam"], SMALL + "iters = 1\n")
    assert code == 3
    assert capsys.readouterr().err.startswith("NoConvergence:")
    assert not (out / "pressure_ulam.csv").exists()


def _header_ok(text):
    lines = text.splitlines()
    assert lines[0] == f"# eqforge v{__version__}"
    body = [ln for ln in lines if not ln.startswith("# ") or ln.startswith("# pass=")]
    return body


@pytest.mark.parametrize("args,files,header", [
    (["construct"], ["measure_n4.csv", "measure_n8.csv"], "x,y,weight"),
    (["construct"], ["fourier.csv"], "kx,ky,re,im,abs"),
    (["construct"], ["mass_ball.csv"], "n,mass"),
    (["pressure", "--method", "integral"], ["pressure_integral.csv"],
     "n,log_partition,running,extrapolated"),
    (["pressure", "--method", "spanning"], ["pressure_spanning.csv"],
     "n,log_partition,running,extrapolated"),
    (["pressure", "--method", "separated"], ["pressure_separated.csv"],
     "n,log_partition,running,extrapolated"),
    (["pressure", "--method", "ulam"], ["pressure_ulam.csv"],
     "n,log_partition,running,extrapolated"),
    (["compare", "--reference", "haar"], ["compare.csv"],
     "n,discrepancy,mass_in_ball,alpha,residual"),
    (["conditions", "--check", "c2"], ["c2.csv"], "n,g_min"),
    (["conditions", "--check", "c3"], ["c3.csv"], "n,h"),
])
def test_outputs_and_headers(tmp_path, args, files, header):
    code, out = _run(tmp_path, args)
    assert code == 0
    for f in files:
        body = _header_ok((out / f).read_text())
        assert body[0] == header


def test_c_checks_summary_line(tmp_path):
    _, out = _run(tmp_path, ["conditions", "--check", "c2"])
    assert (out / "c2.csv").read_text().splitlines()[-1] == "# pass=true slope=0.0"


def test_determinism_and_flag_position(tmp_path):
    args = ["compare", "--reference", "dirac"]
    _, a = _run(tmp_path, args, name="a")
    cfg = tmp_path / "cfg.txt"
    b = tmp_path / "b"
    assert main(["compare", "--reference", "dirac", "--config", str(cfg), "--out", str(b),
                 "--workers", "4"]) == 0
    assert (a / "compare.csv").read_bytes() == (b / "compare.csv").read_bytes()


def test_console_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "eqforge.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "construct" in r.stdout
    r = subprocess.run([sys.executable, "-m", "eqforge.cli", "bogus"], capture_output=True)
    assert r.returncode == 2
