"""Command-line front end.

Every command reads a JSON run config (``--config``) and writes a dataset
whose first lines are ``#`` metadata: tool version, seed, config digest and
normalization scheme.  Exit codes: 0 ok, 1 computation error, 2 config error.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .belltest import (
    JOINT_LABELS,
    TABLE1,
    BellConfig,
    Constraint,
    SearchSpec,
    ch_value,
    estimate_k,
    normalization_bias,
    optimize_settings,
    s_from_counts,
    s_map,
)
from .interference import FilterSelection, Scheme, fringe_scan
from .modulator import DEFAULT_TOL, EomSetting, truncation_order
from .spectrum import ConfigError, ModeSpectrum, load_spectrum
from .stats import RNG_ALGORITHM, propagate_s_error, sample_counts

TOOL = "fbinsim"
DEFAULT_SEED = 0


def fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0.0:
            return "0"
        return f"{v:.9g}"
    return str(v)


def parse_grid(text: str, path: str = "grid") -> list[float]:
    """``start:stop:step`` in degrees, both endpoints included."""
    try:
        start, stop, step = (float(t) for t in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"grid must be 'start:stop:step', got {text!r}", path) from None
    if step <= 0 or stop < start:
        raise ConfigError(f"grid needs step > 0 and stop >= start, got {text!r}", path)
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def _setting(doc: Any, path: str) -> EomSetting:
    if not isinstance(doc, Mapping):
        raise ConfigError("setting must be an object with mod_index and phase_deg", path)
    unknown = set(doc) - {"mod_index", "phase_deg"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path)
    if "mod_index" not in doc:
        raise ConfigError("missing mod_index", path)
    try:
        return EomSetting(_num(doc["mod_index"], f"{path}.mod_index"), _num(doc.get("phase_deg", 0.0), f"{path}.phase_deg"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None


def _num(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", path)
    return float(v)


def _int(v: Any, path: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", path)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}", path)
    return v


def _bell(doc: Any, path: str = "bell") -> tuple[str, BellConfig]:
    if isinstance(doc, str):
        if doc not in TABLE1:
            raise ConfigError(f"unknown settings row {doc!r}; choose from {sorted(TABLE1)}", path)
        return doc, TABLE1[doc]
    if not isinstance(doc, Mapping):
        raise ConfigError("bell settings must be a row name or an object", path)
    unknown = set(doc) - {"x0", "x1", "y0", "y1", "k", "label"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path)
    missing = [s for s in ("x0", "x1", "y0", "y1") if s not in doc]
    if missing:
        raise ConfigError(f"missing settings {missing}", path)
    k = doc.get("k")
    if k is not None:
        k = _num(k, f"{path}.k")
        if k <= 0:
            raise ConfigError("k must be > 0", f"{path}.k")
    cfg = BellConfig(*(_setting(doc[s], f"{path}.{s}") for s in ("x0", "x1", "y0", "y1")), k=k)
    return str(doc.get("label", "custom")), cfg


@dataclass(frozen=True)
class FringeRequest:
    label: str
    signal: EomSetting
    idler: EomSetting
    sel: FilterSelection


@dataclass
class RunConfig:
    spectrum: ModeSpectrum
    raw: dict
    bell_label: str | None = None
    bell: BellConfig | None = None
    table1_rows: list[str] = field(default_factory=list)
    fringes: list[FringeRequest] = field(default_factory=list)
    schemes: list[Scheme] = field(default_factory=lambda: [Scheme.FULL])
    grid: list[float] = field(default_factory=lambda: parse_grid("0:360:5"))
    smap_beta0: list[float] = field(default_factory=lambda: parse_grid("-90:90:5"))
    smap_beta1: list[float] = field(default_factory=lambda: parse_grid("-90:90:5"))
    optimize: dict = field(default_factory=dict)
    trials: int = 1000
    pairs_per_trial: float = 1000.0
    seed: int = DEFAULT_SEED
    tol: float = DEFAULT_TOL

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


_TOP_KEYS = {
    "spectrum", "bell", "table1", "fringes", "grid", "scheme", "smap",
    "optimize", "belltest", "seed", "tol", "note",
}


def load_run_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val
    return build_run_config(raw, base_dir=p.parent)


def build_run_config(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "spectrum" not in raw:
        raise ConfigError("missing 'spectrum'")
    src = raw["spectrum"]
    if isinstance(src, str) and not src.startswith("builtin:"):
        src = str((base_dir / src))
    if not isinstance(src, (str, Mapping)):
        raise ConfigError("spectrum must be a path, 'builtin:<name>' or an object", "spectrum")
    try:
        spec = load_spectrum(src)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "spectrum") from None

    rc = RunConfig(spectrum=spec, raw=raw)
    if "bell" in raw:
        rc.bell_label, rc.bell = _bell(raw["bell"])
    t1 = raw.get("table1", [])
    if t1 is True:
        t1 = sorted(TABLE1)
    if not isinstance(t1, list) or any(r not in TABLE1 for r in t1):
        raise ConfigError(f"table1 must be true or a list drawn from {sorted(TABLE1)}", "table1")
    rc.table1_rows = list(t1)

    fr = raw.get("fringes", [])
    if not isinstance(fr, list):
        raise ConfigError("must be a list", "fringes")
    for i, item in enumerate(fr):
        where = f"fringes[{i}]"
        if not isinstance(item, Mapping):
            raise ConfigError("must be an object", where)
        unknown = set(item) - {"label", "signal", "idler", "a", "b"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", where)
        for key in ("signal", "idler"):
            if key not in item:
                raise ConfigError(f"missing {key!r}", where)
        rc.fringes.append(
            FringeRequest(
                label=str(item.get("label", f"fringe{i}")),
                signal=_setting(item["signal"], f"{where}.signal"),
                idler=_setting(item["idler"], f"{where}.idler"),
                sel=FilterSelection(_int(item.get("a", 0), f"{where}.a"), _int(item.get("b", 0), f"{where}.b")),
            )
        )

    sch = raw.get("scheme", "full")
    sch_list = sch if isinstance(sch, list) else [sch]
    try:
        rc.schemes = [Scheme.parse(s) for s in sch_list]
    except ValueError as exc:
        raise ConfigError(str(exc), "scheme") from None
    if not rc.schemes:
        raise ConfigError("at least one scheme required", "scheme")

    if "grid" in raw:
        rc.grid = parse_grid(raw["grid"], "grid")
    sm = raw.get("smap", {})
    if not isinstance(sm, Mapping):
        raise ConfigError("must be an object", "smap")
    if "beta0" in sm:
        rc.smap_beta0 = parse_grid(sm["beta0"], "smap.beta0")
    if "beta1" in sm:
        rc.smap_beta1 = parse_grid(sm["beta1"], "smap.beta1")

    opt = raw.get("optimize", {})
    if not isinstance(opt, Mapping):
        raise ConfigError("must be an object", "optimize")
    allowed = {"max_delta_c", "phase_shift_deg", "pin_phase_shift", "grid_points", "c_max", "max_grid_evals"}
    if set(opt) - allowed:
        raise ConfigError(f"unknown keys {sorted(set(opt) - allowed)}", "optimize")
    rc.optimize = dict(opt)

    bt = raw.get("belltest", {})
    if not isinstance(bt, Mapping):
        raise ConfigError("must be an object", "belltest")
    if set(bt) - {"trials", "pairs_per_trial"}:
        raise ConfigError(f"unknown keys {sorted(set(bt) - {'trials', 'pairs_per_trial'})}", "belltest")
    rc.trials = _int(bt.get("trials", rc.trials), "belltest.trials", minimum=1)
    rc.pairs_per_trial = _num(bt.get("pairs_per_trial", rc.pairs_per_trial), "belltest.pairs_per_trial")
    if rc.pairs_per_trial <= 0:
        raise ConfigError("must be > 0", "belltest.pairs_per_trial")

    rc.seed = _int(raw.get("seed", DEFAULT_SEED), "seed", minimum=0)
    rc.tol = _num(raw.get("tol", DEFAULT_TOL), "tol")
    if not 0 < rc.tol <= 1e-3:
        raise ConfigError("tol must lie in (0, 1e-3]", "tol")
    return rc


# ----------------------------------------------------------------------------
# output


def _metadata(rc: RunConfig, command: str, scheme: str | None = None, rng: bool = False) -> dict:
    meta = {
        "tool": f"{TOOL} {__version__}",
        "command": command,
        "seed": rc.seed,
        "config_sha256": rc.digest,
        "scheme": scheme if scheme is not None else ",".join(s.value for s in rc.schemes),
    }
    if rng:
        meta["rng"] = RNG_ALGORITHM
    return meta


def render_table(
    meta: Mapping[str, Any],
    columns: Sequence[str],
    rows: Sequence[Sequence[Any]],
    fmt_name: str,
    footer: Mapping[str, Any] | None = None,
) -> str:
    if fmt_name == "json":
        doc = {
            "metadata": dict(meta),
            "columns": list(columns),
            "rows": [[_jsonable(v) for v in r] for r in rows],
        }
        if footer:
            doc["summary"] = {k: _jsonable(v) for k, v in footer.items()}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {fmt(v)}\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(fmt(v) for v in r) + "\n")
    if footer:
        buf.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in footer.items()) + "\n")
    return buf.getvalue()


def render_report(meta: Mapping[str, Any], report: Mapping[str, Any], fmt_name: str) -> str:
    if fmt_name == "json":
        return json.dumps({"metadata": dict(meta), "report": _jsonable(report)}, indent=2, sort_keys=True) + "\n"
    rows = [(k, v) for k, v in _flatten(report)]
    return render_table(meta, ["quantity", "value"], rows, "csv")


def _flatten(d: Mapping[str, Any], prefix: str = ""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def _jsonable(v: Any) -> Any:
    if isinstance(v, Mapping):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (float, np.floating)):
        return float(fmt(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _config_doc(cfg: BellConfig) -> dict:
    doc = {
        name: {"mod_index": getattr(cfg, name).mod_index, "phase_deg": getattr(cfg, name).phase_deg}
        for name in ("x0", "x1", "y0", "y1")
    }
    doc["k"] = cfg.k
    return doc


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FBINSIM_THREADS", "1")))
    except ValueError:
        return 1


# ----------------------------------------------------------------------------
# commands


def cmd_validate(rc: RunConfig, fmt_name: str) -> str:
    spec = rc.spectrum
    norm2 = math.fsum(f * f for f in spec.values)
    settings: dict[str, EomSetting] = {}
    if rc.bell is not None:
        for s in ("x0", "x1", "y0", "y1"):
            settings[f"bell.{s}"] = getattr(rc.bell, s)
    for fr in rc.fringes:
        settings[f"{fr.label}.signal"] = fr.signal
        settings[f"{fr.label}.idler"] = fr.idler
    report: dict[str, Any] = {
        "spectrum": {
            "fsr_mhz": spec.fsr_mhz,
            "linewidth_mhz": spec.linewidth_mhz,
            "modes": {str(n): f for n, f in spec.amplitudes.items()},
            "sum_f2": norm2,
        },
        "truncation_order": {k: truncation_order(s.mod_index, rc.tol) for k, s in settings.items()},
    }
    if rc.bell is not None:
        report["k"] = {rc.bell_label: estimate_k(spec, rc.bell.x0, rc.bell.y0, rc.tol)}
    if rc.table1_rows:
        report["table1_k"] = {
            row: estimate_k(spec, TABLE1[row].x0, TABLE1[row].y0, rc.tol) for row in rc.table1_rows
        }
    return render_report(_metadata(rc, "validate"), report, fmt_name)


def cmd_fringe(rc: RunConfig, fmt_name: str) -> str:
    if not rc.fringes:
        raise ConfigError("no fringes requested", "fringes")
    rows = []
    for scheme in rc.schemes:
        for fr in rc.fringes:
            for beta, p in fringe_scan(rc.spectrum, fr.signal, fr.idler, fr.sel, rc.grid, scheme, rc.tol):
                rows.append((beta, p, scheme.value, fr.sel.signal_mode, fr.sel.idler_mode, fr.label))
    return render_table(_metadata(rc, "fringe"), ["beta_deg", "p", "scheme", "a", "b", "label"], rows, fmt_name)


def _need_bell(rc: RunConfig) -> BellConfig:
    if rc.bell is None:
        raise ConfigError("missing 'bell' settings", "bell")
    return rc.bell


def cmd_smap(rc: RunConfig, fmt_name: str) -> str:
    cfg = _need_bell(rc)
    grid = s_map(rc.spectrum, cfg, rc.smap_beta0, rc.smap_beta1, rc.tol, workers=_workers())
    rows = [
        (b0, b1, grid[i, j])
        for i, b0 in enumerate(rc.smap_beta0)
        for j, b1 in enumerate(rc.smap_beta1)
    ]
    i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
    footer = {"argmax_beta0_deg": rc.smap_beta0[i], "argmax_beta1_deg": rc.smap_beta1[j], "S_max": grid[i, j]}
    return render_table(
        _metadata(rc, "smap", scheme=Scheme.FULL.value), ["beta0_deg", "beta1_deg", "S"], rows, fmt_name, footer
    )


def _search(rc: RunConfig) -> tuple[SearchSpec, dict]:
    opt = rc.optimize
    search = SearchSpec(
        grid_points=int(opt.get("grid_points", 15)),
        c_bounds=(0.0, float(opt.get("c_max", 1.4))),
        max_grid_evals=int(opt.get("max_grid_evals", SearchSpec.max_grid_evals)),
        tol=rc.tol,
    )
    kw = {
        "max_delta_c": float(opt.get("max_delta_c", 0.5)),
        "phase_shift_deg": float(opt.get("phase_shift_deg", 180.0)),
        "pin_phase_shift": bool(opt.get("pin_phase_shift", True)),
    }
    return search, kw


def cmd_optimize(rc: RunConfig, fmt_name: str) -> str:
    search, kw = _search(rc)
    results = {}
    for kind in ("constant", "alternating"):
        cfg, s = optimize_settings(rc.spectrum, Constraint(kind=kind, **kw), search, rc.seed)
        results[kind] = (cfg, s)
    meta = _metadata(rc, "optimize", scheme=Scheme.FULL.value)
    meta.update({f"constraint_{k}": fmt(v) for k, v in kw.items()})
    if fmt_name == "json":
        report = {
            kind: {"S": s, "k": estimate_k(rc.spectrum, cfg.x0, cfg.y0, rc.tol), "config": _config_doc(cfg)}
            for kind, (cfg, s) in results.items()
        }
        report["summary"] = {"S_constant": results["constant"][1], "S_alternating": results["alternating"][1]}
        return render_report(meta, report, "json")
    cols = ["constraint", "S", "k"] + [f"{n}_{q}" for n in ("x0", "x1", "y0", "y1") for q in ("c", "phase_deg")]
    rows = []
    for kind, (cfg, s) in results.items():
        row = [kind, s, estimate_k(rc.spectrum, cfg.x0, cfg.y0, rc.tol)]
        for n in ("x0", "x1", "y0", "y1"):
            st = getattr(cfg, n)
            row += [st.mod_index, st.phase_deg]
        rows.append(row)
    footer = {"S_constant": results["constant"][1], "S_alternating": results["alternating"][1]}
    return render_table(meta, cols, rows, "csv", footer)


def run_belltest(rc: RunConfig) -> tuple[dict, list]:
    cfg = _need_bell(rc)
    model = ch_value(rc.spectrum, cfg, rc.tol)
    bias = normalization_bias(rc.spectrum, cfg, Scheme.EXP3, rc.tol)
    labels = list(JOINT_LABELS) + ["marginal_y0"]
    probs = [model.joints[lab] for lab in JOINT_LABELS] + [model.marginal_idler]
    records = sample_counts([p * rc.pairs_per_trial for p in probs], rc.trials, rc.seed, labels)
    totals = [r.count for r in records]
    if totals[4] == 0:
        raise ValueError("sampled marginal count is zero; raise trials or pairs_per_trial")
    mc = s_from_counts(totals[:4], totals[4], model.k_used)
    report = {
        "settings": {"label": rc.bell_label, **_config_doc(cfg)},
        "model": {
            "S": model.s_value,
            "k": model.k_used,
            "P00": dict(model.joints),
            "P0_signal_x0": model.marginal_signal,
            "P0_idler_y0": model.marginal_idler,
            "exp3_normalization_deviation": bias.deviations,
            "S_exp3_normalized": bias.s_restricted,
            "S_bias_exp3": bias.relative,
        },
        "monte_carlo": {
            "trials": rc.trials,
            "pairs_per_trial": rc.pairs_per_trial,
            "counts": dict(zip(labels, totals)),
            "S": mc.s_value,
            "sigma_S": mc.s_error,
            "k": mc.k_used,
        },
    }
    return report, records


def cmd_belltest(rc: RunConfig, fmt_name: str, counts_out: Path | None = None) -> str:
    report, records = run_belltest(rc)
    meta = _metadata(rc, "belltest", rng=True)
    if counts_out is not None:
        rows = [(r.label, t, c, r.seed) for r in records for t, c in enumerate(r.draws)]
        counts_out.write_text(render_table(meta, ["label", "trial", "count", "seed"], rows, "csv"))
    return render_report(meta, report, fmt_name)


COMMANDS = {
    "validate": cmd_validate,
    "fringe": cmd_fringe,
    "smap": cmd_smap,
    "optimize": cmd_optimize,
    "belltest": cmd_belltest,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog=TOOL, description="Frequency-bin interference and CH-test model")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "validate": "check a run config and print the normalized spectrum, truncation orders and k",
        "fringe": "coincidence probability versus signal phase",
        "smap": "S over signal-phase offsets of x0 and x1",
        "optimize": "best settings under constant and alternating modulation",
        "belltest": "model S plus a seeded Monte-Carlo count emulation",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="run config (JSON)")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, help="override config seed (u64)")
        p.add_argument("--scheme", choices=[s.value for s in Scheme], help="override normalization scheme")
        p.add_argument("--grid", help="phase grid start:stop:step in degrees")
        if name == "belltest":
            p.add_argument("--counts-out", help="write per-trial Monte-Carlo counts CSV here")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict[str, Any] = {"seed": args.seed, "scheme": args.scheme}
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "--seed")
        if args.grid is not None:
            parse_grid(args.grid, "--grid")
            if args.command == "smap":
                overrides["smap"] = {"beta0": args.grid, "beta1": args.grid}
            else:
                overrides["grid"] = args.grid
        rc = load_run_config(args.config, overrides)
        if args.command == "belltest":
            text = cmd_belltest(rc, args.format, Path(args.counts_out) if args.counts_out else None)
        else:
            text = COMMANDS[args.command](rc, args.format)
    except ConfigError as exc:
        print(f"{TOOL}: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"{TOOL}: computation error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
