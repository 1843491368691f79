import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tbgmag import __version__
from tbgmag.cli import (
    COMMANDS,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    ConfigError,
    Table,
    build_test_function,
    main,
    render_csv,
    resolve_config,
)
from tbgmag.lattice import MoireLattice
from tbgmag.spectra import multiset_distance

FAST = {
    "magic": {"task": {"N": 12, "convergence_check": False}},
    "bands": {"task": {"N": 6, "grid_n": 2}},
    "squeeze": {"task": {"N": 12}},
    "zeromode": {},
    "dos": {},
    "sdh": {"task": {"points": 9}},
    "dhva": {"task": {"points": 6}},
    "qhe": {"task": {"points": 9}},
}


def run(tmp_path, command, cfg, *extra):
    cfg_path = tmp_path / f"{command}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / f"{command}.out"
    code = main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    return code, (out.read_text() if out.exists() else None)


def parse_csv(text):
    lines = text.splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    header = body[0].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])
    return meta, header, rows


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_runs(tmp_path, command):
    code, text = run(tmp_path, command, FAST[command])
    assert code == EXIT_OK
    meta, header, rows = parse_csv(text)
    assert meta[0] == f"# tbgmag {__version__}"
    assert meta[1] == f"# command: {command}"
    assert meta[2].startswith("# config: ")
    assert rows.shape[1] == len(header) and rows.shape[0] >= 1
    assert text.endswith("\n") and "\r" not in text


def test_config_is_embedded_in_full(tmp_path):
    code, text = run(tmp_path, "sdh", FAST["sdh"])
    cfg = json.loads(text.splitlines()[2][len("# config: ") :])
    assert cfg == resolve_config("sdh", FAST["sdh"])
    assert cfg["numeric"]["grid_m"] == 64
    assert cfg["task"]["beta"] == 1.5


def test_magic_header_and_real_row(tmp_path):
    code, text = run(tmp_path, "magic", {"task": {"N": 16, "convergence_check": True}})
    assert code == EXIT_OK
    _, header, rows = parse_csv(text)
    assert header == ["re_eig", "im_eig", "alpha", "convergence_gap"]
    assert np.any(np.abs(rows[:, 1]) < 1e-8)
    assert abs(rows[0, 2]) == pytest.approx(0.5856635583895577, abs=1e-7)


def test_magic_independent_of_periodic_field(tmp_path):
    base = {"task": {"N": 16, "convergence_check": False}}
    with_A = {"task": base["task"], "field": {"A": [[1, 1, 0.5], [-1, -1, 0.5]]}}
    _, a = run(tmp_path, "magic", base)
    (tmp_path / "magic.out").unlink()
    _, b = run(tmp_path, "magic", with_A)
    ra, rb = parse_csv(a)[2], parse_csv(b)[2]
    # rows of equal |alpha| may be listed in either order, so compare as multisets
    ea, eb = ra[:, 0] + 1j * ra[:, 1], rb[:, 0] + 1j * rb[:, 1]
    assert multiset_distance(ea, eb, 1.0) < 1e-6


@pytest.mark.parametrize("k", [[0.0, 0.0], "eta1"])
def test_dual_lattice_momentum_is_numeric_error(tmp_path, capsys, k):
    if k == "eta1":
        e = MoireLattice().eta1
        k = [e.real, e.imag]
    code, text = run(tmp_path, "magic", {"field": {"k": k}, "task": {"N": 12}})
    assert code == EXIT_NUMERIC
    assert text is None
    assert "k in dual lattice" in capsys.readouterr().err


@pytest.mark.parametrize(
    "cfg",
    [
        {"model": {"alpha2": 1.0}},
        {"extra": {}},
        {"model": {"alpha1": "one"}},
        {"model": {"kind": "nonchiral"}},
        {"field": {"B": -1.0}},
        {"numeric": {"grid_m": 8}},
        {"output": {"format": "xml"}},
        {"task": {"beta": 0}},
        {"task": {"models": ["free", "magic"]}},
        {"model": {"beta": {"2": 1.0}}},
        [1, 2],
    ],
)
def test_config_errors(tmp_path, cfg):
    code, text = run(tmp_path, "sdh", cfg)
    assert code == EXIT_CONFIG
    assert text is None


def test_bad_json_and_unknown_command(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["sdh", "--config", str(p)]) == EXIT_CONFIG
    assert main(["nonsense"]) == EXIT_CONFIG
    assert main(["sdh", "--threads", "0"]) == EXIT_CONFIG


def test_missing_config_is_io_error(tmp_path):
    assert main(["sdh", "--config", str(tmp_path / "missing.json")]) == EXIT_IO


def test_unwritable_output_is_io_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(FAST["dos"]))
    assert main(["dos", "--config", str(cfg), "--out", str(tmp_path / "no" / "such" / "dir" / "x.csv")]) == EXIT_IO


def test_failed_run_leaves_existing_file(tmp_path):
    out = tmp_path / "magic.out"
    out.write_text("previous")
    code, text = run(tmp_path, "magic", {"field": {"k": [0.0, 0.0]}})
    assert code == EXIT_NUMERIC
    assert text == "previous"
    assert not [f for f in os.listdir(tmp_path) if f.endswith(".tmp")]


def test_json_output_schema(tmp_path):
    code, text = run(tmp_path, "qhe", FAST["qhe"], "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(text)
    assert set(doc) >= {"meta", "sweep", "values", "columns"}
    assert len(doc["sweep"]) == 9
    assert len(doc["values"]) == 9
    assert doc["meta"]["version"] == __version__
    assert doc["meta"]["config"]["output"]["format"] == "json"


def test_threads_do_not_change_output(tmp_path):
    _, a = run(tmp_path, "sdh", FAST["sdh"], "--threads", "1")
    _, b = run(tmp_path, "sdh", FAST["sdh"], "--threads", "3")
    assert a == b


def test_gap_closed_is_numeric_error(tmp_path):
    code, _ = run(tmp_path, "sdh", {"numeric": {"strict": True}, "field": {"B": 2.0}, "task": {"points": 3}})
    assert code == EXIT_NUMERIC


def test_dos_with_plateau_test_function(tmp_path):
    cfg = {"task": {"test_function": {"type": "plateau", "lo": -5, "inner_lo": -1, "inner_hi": 1, "hi": 5}, "B_values": [50.0]}}
    code, text = run(tmp_path, "dos", cfg)
    assert code == EXIT_OK


def test_build_test_function():
    f = build_test_function({"type": "gaussian", "mu": 1.0, "sigma": 2.0})
    assert f(1.0) == pytest.approx(1 / (2 * np.sqrt(2 * np.pi)))
    with pytest.raises(ConfigError):
        build_test_function({"type": "wavelet"})
    with pytest.raises(ConfigError):
        build_test_function({"type": "gaussian", "mu": 0.0, "sigma": -1.0})


def test_render_csv_precision():
    t = Table(["x", "y"], [[0.1, 1 / 3], [0.0, -2.5e-300]], {})
    text = render_csv("dos", resolve_config("dos", None), t)
    last = text.splitlines()[-2:]
    assert last[0] == "0.10000000000000001,0.33333333333333331"
    assert last[1] == "0,-2.5e-300"
    assert render_csv("dos", resolve_config("dos", None), Table(["x"], [[-0.0]], {})).endswith("\n0\n")


def test_module_entry_point(tmp_path):
    out = tmp_path / "z.csv"
    proc = subprocess.run([sys.executable, "-m", "tbgmag", "zeromode", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("# tbgmag")
