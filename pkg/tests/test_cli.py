import csv
import io
import json
import math
from pathlib import Path

import pytest

from fbinsim import TABLE1, BellConfig, EomSetting, ch_value, fig1a_spectrum
from fbinsim.cli import build_run_config, main, parse_grid
from fbinsim.spectrum import ConfigError

ROOT = Path(__file__).resolve().parents[1]

ZERO_BELL = {s: {"mod_index": 0.0, "phase_deg": 0.0} for s in ("x0", "x1", "y0", "y1")}


def write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def meta(text):
    return dict(ln[2:].split(": ", 1) for ln in text.splitlines() if ln.startswith("# ") and ": " in ln)


def report(text):
    return {r["quantity"]: r["value"] for r in table(text)}


def test_parse_grid_inclusive():
    assert parse_grid("0:360:90") == [0, 90, 180, 270, 360]
    assert parse_grid("-1:1:0.5") == [-1, -0.5, 0, 0.5, 1]
    for bad in ("0:1", "0:1:0", "5:1:1", "a:b:c"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_validate_fixture(capsys):
    code, out, _ = run(capsys, "validate", "--config", str(ROOT / "configs" / "fringe_row.json"))
    assert code == 0
    rep = report(out)
    assert float(rep["spectrum.sum_f2"]) == pytest.approx(1.0, abs=1e-9)
    assert abs(float(rep["table1_k.fringe"]) - 1.01) <= 0.03
    assert abs(float(rep["table1_k.bell_points"]) - 0.97) <= 0.03
    assert int(rep["truncation_order.high_c.idler"]) >= 1
    m = meta(out)
    assert m["tool"].startswith("fbinsim ") and m["seed"] == "42" and len(m["config_sha256"]) == 64


def test_validate_json_format(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "table1": ["fringe"]})
    code, out, _ = run(capsys, "validate", "--config", cfg, "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["report"]["spectrum"]["sum_f2"] == pytest.approx(1.0)
    assert set(doc["report"]["table1_k"]) == {"fringe"}


def test_spectrum_path_relative_to_config(capsys, tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps({"fsr_mhz": 400, "linewidth_mhz": 3, "modes": [{"n": 0, "weight": 4}]}))
    cfg = write(tmp_path, {"spectrum": "spec.json"})
    code, out, _ = run(capsys, "validate", "--config", cfg)
    assert code == 0 and report(out)["spectrum.modes.0"] == "1"


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"spectrum": {"modes": [{"n": 0, "weight": -1}]}}, "spectrum.modes[0].weight"),
        ({"spectrum": "builtin:fig1a", "bell": "nonsense"}, "bell"),
        ({"spectrum": "builtin:fig1a", "bell": {"x0": {"mod_index": 9}, "x1": {"mod_index": 0},
                                               "y0": {"mod_index": 0}, "y1": {"mod_index": 0}}}, "bell.x0"),
        ({"spectrum": "builtin:fig1a", "fringes": [{"signal": {"mod_index": 1}}]}, "fringes[0]"),
        ({"spectrum": "builtin:fig1a", "scheme": "half"}, "scheme"),
        ({"spectrum": "builtin:fig1a", "seed": -3}, "seed"),
        ({"spectrum": "builtin:fig1a", "colour": 1}, "unknown top-level"),
        ({"spectrum": "builtin:fig1a", "smap": {"beta0": "0:1"}}, "smap.beta0"),
    ],
)
def test_config_errors_exit_2_with_field(capsys, tmp_path, doc, field):
    code, out, err = run(capsys, "validate", "--config", write(tmp_path, doc))
    assert code == 2
    assert field in err
    assert out == ""


def test_malformed_json_reports_line(capsys, tmp_path):
    code, _, err = run(capsys, "validate", "--config", write(tmp_path, '{\n"spectrum": "builtin:fig1a",\n}'))
    assert code == 2 and "line 3" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "validate", "--config", str(tmp_path / "absent.json"))
    assert code == 2 and "not found" in err


def test_computation_error_exit_1(capsys, tmp_path):
    # no population reaches the central idler mode, so k is undefined
    cfg = write(tmp_path, {"spectrum": {"modes": [{"n": 3, "weight": 1}]}, "bell": ZERO_BELL})
    code, _, err = run(capsys, "belltest", "--config", cfg)
    assert code == 1 and "computation error" in err


def fringe_cfg(tmp_path, spectrum="builtin:fig1a", **extra):
    doc = {
        "spectrum": spectrum,
        "fringes": [
            {"label": "d0", "signal": {"mod_index": 1.30}, "idler": {"mod_index": 1.36, "phase_deg": 51}},
            {"label": "d1", "signal": {"mod_index": 1.30}, "idler": {"mod_index": 1.36, "phase_deg": 51}, "a": 0, "b": 1},
        ],
        "grid": "0:360:30",
    }
    doc.update(extra)
    return write(tmp_path, doc)


def test_fringe_columns_and_rows(capsys, tmp_path):
    code, out, _ = run(capsys, "fringe", "--config", fringe_cfg(tmp_path))
    assert code == 0
    header = [ln for ln in out.splitlines() if not ln.startswith("#")][0]
    assert header == "beta_deg,p,scheme,a,b,label"
    rows = table(out)
    assert len(rows) == 2 * 13
    assert {r["label"] for r in rows} == {"d0", "d1"}
    assert all(r["b"] == "1" for r in rows if r["label"] == "d1")


def test_fringe_dual_scheme_emission(capsys, tmp_path):
    code, out, _ = run(capsys, "fringe", "--config", fringe_cfg(tmp_path, scheme=["full", "exp3"]))
    assert code == 0
    rows = table(out)
    full = {(r["label"], r["beta_deg"]): float(r["p"]) for r in rows if r["scheme"] == "full"}
    exp3 = {(r["label"], r["beta_deg"]): float(r["p"]) for r in rows if r["scheme"] == "exp3"}
    assert full.keys() == exp3.keys()
    # the restricted normalization only ever inflates
    assert all(exp3[k] >= full[k] for k in full)
    assert meta(out)["scheme"] == "full,exp3"


def test_scheme_flag_overrides(capsys, tmp_path):
    code, out, _ = run(capsys, "fringe", "--config", fringe_cfg(tmp_path), "--scheme", "exp3", "--grid", "0:90:45")
    assert code == 0
    rows = table(out)
    assert {r["scheme"] for r in rows} == {"exp3"}
    assert [r["beta_deg"] for r in rows if r["label"] == "d0"] == ["0", "45", "90"]


def test_single_mode_fringe_flat(capsys, tmp_path):
    cfg = fringe_cfg(tmp_path, spectrum={"modes": [{"n": 0, "weight": 1}]})
    code, out, _ = run(capsys, "fringe", "--config", cfg)
    vals = [float(r["p"]) for r in table(out) if r["label"] == "d0"]
    assert code == 0 and max(vals) - min(vals) < 1e-12


def test_smap_zero_modulation(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "bell": ZERO_BELL, "smap": {"beta0": "0:20:10", "beta1": "0:20:10"}})
    code, out, _ = run(capsys, "smap", "--config", cfg)
    rows = table(out)
    assert code == 0 and len(rows) == 9
    assert all(float(r["S"]) == pytest.approx(2.0, abs=1e-12) for r in rows)


def test_smap_argmax_line_matches_model(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "bell": "fringe", "smap": {"beta0": "-40:40:20", "beta1": "-40:40:20"}})
    code, out, _ = run(capsys, "smap", "--config", cfg)
    assert code == 0
    summary = [ln for ln in out.splitlines() if ln.startswith("# argmax")][0]
    fields = dict(kv.split("=") for kv in summary[2:].split())
    b0, b1, smax = (float(fields[k]) for k in ("argmax_beta0_deg", "argmax_beta1_deg", "S_max"))
    want = ch_value(fig1a_spectrum(), TABLE1["fringe"].with_signal_offsets(b0, b1)).s_value
    assert smax == pytest.approx(want, rel=1e-8)
    assert smax == max(float(r["S"]) for r in table(out))


def test_smap_threads_env(capsys, tmp_path, monkeypatch):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "bell": "bell_points", "smap": {"beta0": "-20:20:10", "beta1": "-20:20:10"}})
    _, serial, _ = run(capsys, "smap", "--config", cfg)
    monkeypatch.setenv("FBINSIM_THREADS", "4")
    _, threaded, _ = run(capsys, "smap", "--config", cfg)
    assert serial == threaded


def test_optimize_small_grid(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "optimize": {"grid_points": 4}})
    code, out, _ = run(capsys, "optimize", "--config", cfg, "--format", "json")
    assert code == 0
    doc = json.loads(out)["report"]
    spec = fig1a_spectrum()
    for kind in ("constant", "alternating"):
        c = doc[kind]["config"]
        bc = BellConfig(*(EomSetting(c[s]["mod_index"], c[s]["phase_deg"]) for s in ("x0", "x1", "y0", "y1")))
        assert ch_value(spec, bc).s_value == pytest.approx(doc[kind]["S"], rel=1e-8)
    assert doc["summary"]["S_constant"] <= 2 + 1e-9
    assert doc["summary"]["S_alternating"] > doc["summary"]["S_constant"]


def test_optimize_csv_side_by_side(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": {"modes": [{"n": 0, "weight": 1}]}, "optimize": {"grid_points": 3}})
    code, out, _ = run(capsys, "optimize", "--config", cfg)
    rows = table(out)
    assert code == 0 and [r["constraint"] for r in rows] == ["constant", "alternating"]
    assert all(float(r["S"]) == pytest.approx(2.0, abs=1e-9) for r in rows)


def test_belltest_zero_modulation(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "bell": ZERO_BELL, "belltest": {"trials": 50}})
    code, out, _ = run(capsys, "belltest", "--config", cfg)
    rep = report(out)
    assert code == 0 and float(rep["model.S"]) == pytest.approx(2.0, abs=1e-12)
    assert meta(out)["rng"].startswith("numpy.PCG64")


def test_belltest_bell_points_and_counts_file(capsys, tmp_path):
    cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "bell": "bell_points", "belltest": {"trials": 20, "pairs_per_trial": 500}})
    counts = tmp_path / "counts.csv"
    code, out, _ = run(capsys, "belltest", "--config", cfg, "--counts-out", str(counts), "--seed", "5")
    rep = report(out)
    assert code == 0
    assert abs(float(rep["model.S"]) - 2.24) <= 0.10
    rows = table(counts.read_text())
    assert list(rows[0]) == ["label", "trial", "count", "seed"]
    assert len(rows) == 5 * 20 and {r["seed"] for r in rows} == {"5"}
    assert meta(counts.read_text())["seed"] == "5"


def test_belltest_sigma_scales_with_trials(capsys, tmp_path):
    def sigma(trials):
        cfg = write(tmp_path, {"spectrum": "builtin:fig1a", "bell": "fringe", "belltest": {"trials": trials}}, f"t{trials}.json")
        _, out, _ = run(capsys, "belltest", "--config", cfg)
        return float(report(out)["monte_carlo.sigma_S"])

    assert sigma(100) / sigma(1600) == pytest.approx(4.0, rel=0.05)


def test_output_file_and_determinism(capsys, tmp_path):
    cfg = fringe_cfg(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["fringe", "--config", cfg, "--out", str(a)]) == 0
    assert main(["fringe", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_digest_tracks_overrides(capsys, tmp_path):
    cfg = fringe_cfg(tmp_path)
    _, x, _ = run(capsys, "fringe", "--config", cfg, "--grid", "0:90:90")
    _, y, _ = run(capsys, "fringe", "--config", cfg, "--grid", "0:90:90", "--seed", "9")
    assert meta(x)["config_sha256"] != meta(y)["config_sha256"]
    assert meta(y)["seed"] == "9"


def test_nine_significant_digits(capsys, tmp_path):
    _, out, _ = run(capsys, "fringe", "--config", fringe_cfg(tmp_path), "--grid", "17:17:1")
    for r in table(out):
        mantissa = r["p"].split("e")[0].replace(".", "").lstrip("0-")
        assert len(mantissa) <= 9


def test_build_run_config_defaults():
    rc = build_run_config({"spectrum": "builtin:fig1a"})
    assert rc.seed == 0 and rc.grid[0] == 0 and rc.grid[-1] == 360
    assert math.isclose(rc.tol, 1e-9)
