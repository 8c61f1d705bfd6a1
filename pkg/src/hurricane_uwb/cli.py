"""Command-line batch runs: synth, analyze, fit, roundtrip.

Exit codes: 0 success, 1 validation failure (round trip out of tolerance),
2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    anchor_amplitude, cir_k_factor_db, compute_pdp, count_significant_mpcs, empirical_attenuation,
    identify_clusters, per_scan_attenuation,
)
from .channel import PulseTemplate
from .fitting import (
    DEFAULT_TOLERANCES, ScanStatistics, fit_large_scale, lognormal_m_statistics, roundtrip_report,
    scan_nakagami,
)
from .params import (
    BIN_WIDTH_NS, HURRICANE_WINDS_MPH, N_BINS, PARAMS_SCHEMA, Scenario, builtin_tables, load_params,
)
from .synthesis import MAX_SEED, ensemble_seed, render_waveform, synthesize_ensemble

log = logging.getLogger("hurricane_uwb")

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_winds(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hurricane-uwb", description="UWB hurricane channel model tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        p.add_argument("--config", help="JSON file; its keys override command-line flags")
        p.add_argument("--out", required=False, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--params", help="parameter-set JSON file (default: builtin tables)")
        if scenario:
            p.add_argument("--scenario", default="P1,S1", help="position,rain e.g. P1,S1")

    p = sub.add_parser("synth", help="synthesize reference and hurricane scan ensembles")
    common(p)
    p.add_argument("--scans", type=int, default=100)
    p.add_argument("--velocities", default=",".join(str(int(v)) for v in HURRICANE_WINDS_MPH))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--common-seed", action="store_true",
                   help="reuse the master seed for every velocity (paired scans)")
    p.add_argument("--waveforms", action="store_true", help="also write dense received-waveform CSVs")
    p.add_argument("--template", help="pulse template file for --waveforms (default: built-in pulse)")

    p = sub.add_parser("analyze", help="PDPs, attenuation, MPC counts and K factors of a synth output")
    p.add_argument("--config")
    p.add_argument("--input", required=False, default=None, help="synth output directory")
    p.add_argument("--out", default=None)
    p.add_argument("--threshold", type=float, default=0.15, help="significant-MPC amplitude fraction")
    p.add_argument("--no-pdp", action="store_true", help="skip per-scan PDP CSVs")

    p = sub.add_parser("fit", help="estimate model parameters from a synth output")
    p.add_argument("--config")
    p.add_argument("--input", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("roundtrip", help="synthesize, re-estimate and compare with the inputs")
    common(p)
    p.add_argument("--scans", type=int, default=10000)
    p.add_argument("--tolerance", type=float, default=None,
                   help="relative tolerance applied to every checked parameter")
    return parser


def _resolve(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(overrides) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(overrides)
    if cfg.get("out") is None:
        raise UsageError("--out is required")
    if "seed" in cfg and not 0 <= int(cfg["seed"]) < MAX_SEED:
        raise UsageError("seed must be a 64-bit unsigned integer")
    if "scans" in cfg and int(cfg["scans"]) < 1:
        raise UsageError("scan count must be at least 1")
    if "scenario" in cfg:
        try:
            Scenario.parse(cfg["scenario"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return cfg


def _tables(cfg):
    if cfg.get("params"):
        try:
            return load_params(cfg["params"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load parameters {cfg['params']}: {exc}") from None
    return builtin_tables()


# Settings that change where or how fast outputs are produced, not their content.
_EXECUTION_KEYS = ("out", "workers")


def _content_config(cfg) -> dict:
    return {k: v for k, v in cfg.items() if k not in _EXECUTION_KEYS}


def _tag(wind):
    return "ref" if wind is None else f"v{int(round(wind)):03d}"


# -- commands ----------------------------------------------------------------------

def cmd_synth(cfg) -> int:
    out = io.ensure_dir(cfg["out"])
    base = Scenario.parse(cfg["scenario"])
    params = _tables(cfg)[base.key]
    winds = _parse_winds(cfg["velocities"])
    for w in winds:
        base.with_wind(w)  # validates the wind speed
    echo = _content_config(cfg)
    h = io.config_hash(echo)
    template = None
    if cfg["waveforms"]:
        try:
            template = PulseTemplate.from_file(cfg["template"]) if cfg.get("template") else PulseTemplate.default()
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load template: {exc}") from None
    files = []
    # The reference ensemble uses the master seed and velocity i derives its
    # own, unless common seeds are requested: then scan k of every velocity
    # shares its multipath structure and level with reference scan k.
    for i, wind in enumerate([None] + winds):
        scenario = Scenario.reference(base.position, base.rain) if wind is None else base.with_wind(wind)
        seed = cfg["seed"] if (wind is None or cfg["common_seed"]) else ensemble_seed(cfg["seed"], i)
        cirs = synthesize_ensemble(scenario, params, cfg["scans"], seed, workers=cfg["workers"])
        name = f"scans_{_tag(wind)}.jsonl"
        io.write_scans(out / name, cirs, h)
        entry = {"path": name, "wind_mph": scenario.wind_mph, "n_scans": len(cirs), "reference": wind is None,
                 "seed": seed}
        if template is not None:
            entry["waveforms"] = f"waveforms_{_tag(wind)}.csv"
            io.write_csv(out / entry["waveforms"], io.WAVEFORM_SCHEMA, h, ("scan", "bin_ns", "amplitude"),
                         ((k, float(t), float(a)) for k, cir in enumerate(cirs)
                          for t, a in zip(np.arange(N_BINS) * BIN_WIDTH_NS,
                                          render_waveform(cir, template).samples)))
        files.append(entry)
        log.info("wrote %s", name)
    io.write_json(out / "manifest.json", {
        "schema": io.MANIFEST_SCHEMA,
        "command": "synth",
        "config": echo,
        "config_hash": h,
        "seed": cfg["seed"],
        "paired": bool(cfg["common_seed"]),
        "scenario": base.label,
        "path_kind": base.path_kind.value,
        "schemas": {"scans": io.SCANS_SCHEMA, "params": PARAMS_SCHEMA, "waveforms": io.WAVEFORM_SCHEMA},
        "files": files,
    })
    return EXIT_OK


def _load_manifest(directory):
    if directory is None:
        raise UsageError("--input is required")
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise UsageError(f"no manifest in {directory}")
    return io.read_json(path, io.MANIFEST_SCHEMA)


def _derived_hash(cfg, manifest) -> str:
    # The input is identified by its content hash rather than its location.
    echo = {k: v for k, v in _content_config(cfg).items() if k != "input"}
    echo["input_config_hash"] = manifest["config_hash"]
    return io.config_hash(echo)


def _load_ensembles(directory, manifest):
    ref, hurricane = None, []
    for entry in manifest["files"]:
        cirs = io.read_scans(Path(directory) / entry["path"])
        if entry["reference"]:
            ref = cirs
        else:
            hurricane.append((entry["wind_mph"], cirs))
    if ref is None:
        raise UsageError("manifest lists no reference ensemble")
    return ref, hurricane


def cmd_analyze(cfg) -> int:
    manifest = _load_manifest(cfg["input"])
    out = io.ensure_dir(cfg["out"])
    h = _derived_hash(cfg, manifest)
    ref, hurricane = _load_ensembles(cfg["input"], manifest)
    paired = bool(manifest.get("paired", False))
    ref_pdps = [compute_pdp(c) for c in ref]
    anchor = anchor_amplitude(ref)

    if not cfg["no_pdp"]:
        for tag, cirs, pdps in [("ref", ref, ref_pdps)] + [(_tag(w), c, None) for w, c in hurricane]:
            d = io.ensure_dir(out / "pdp" / tag)
            for k, cir in enumerate(cirs):
                pdp = pdps[k] if pdps is not None else compute_pdp(cir)
                io.write_pdp_csv(d / f"scan_{k:05d}.csv", pdp, h)

    att_rows, sample_rows, mpc_rows, k_rows, clusters = [], [], [], [], {}
    for tag, wind, cirs in [("ref", ref[0].scenario.wind_mph, ref)] + [(_tag(w), w, c) for w, c in hurricane]:
        pdps = ref_pdps if tag == "ref" else [compute_pdp(c) for c in cirs]
        if tag != "ref":
            att = empirical_attenuation(pdps, ref_pdps)
            att_rows.append((float(wind), att.attenuation_db, len(cirs)))
            for s in per_scan_attenuation(pdps, ref_pdps, paired=paired):
                sample_rows.append((s.wind_mph, s.attenuation_db))
        own = [count_significant_mpcs(c, cfg["threshold"]) for c in cirs]
        anchored = [count_significant_mpcs(c, cfg["threshold"], anchor) for c in cirs]
        mpc_rows.append((tag, float(wind), len(cirs), float(np.mean(own)), float(np.mean(anchored))))
        ks = [cir_k_factor_db(c) for c in cirs]
        if ks[0] is None:
            k_rows.append((tag, float(wind), len(cirs), None, None))
        else:
            kd = np.array(ks, dtype=float)
            k_rows.append((tag, float(wind), len(cirs), float(kd.mean()), float(kd.std(ddof=1)) if kd.size > 1 else 0.0))
        clusters[tag] = [[list(b) for b in identify_clusters(p).boundaries] for p in pdps]

    io.write_csv(out / "attenuation.csv", io.ATTENUATION_SCHEMA, h,
                 ("wind_mph", "attenuation_db", "n_scans"), att_rows)
    io.write_csv(out / "attenuation_samples.csv", io.ATTENUATION_SCHEMA, h,
                 ("wind_mph", "attenuation_db"), sample_rows)
    io.write_csv(out / "mpc_summary.csv", io.MPC_SCHEMA, h,
                 ("ensemble", "wind_mph", "n_scans", "mean_count_scan_peak", "mean_count_reference_peak"),
                 mpc_rows)
    io.write_csv(out / "k_factor.csv", io.KFACTOR_SCHEMA, h,
                 ("ensemble", "wind_mph", "n_scans", "mu_k_db", "sigma_k_db"), k_rows)
    io.write_json(out / "clusters.json", {"schema": io.CLUSTERS_SCHEMA, "config_hash": h,
                                          "columns": ["start_bin", "end_bin", "peak_power"],
                                          "ensembles": clusters})
    return EXIT_OK


def cmd_fit(cfg) -> int:
    manifest = _load_manifest(cfg["input"])
    out = io.ensure_dir(cfg["out"])
    h = _derived_hash(cfg, manifest)
    ref, hurricane = _load_ensembles(cfg["input"], manifest)
    paired = bool(manifest.get("paired", False))
    ref_pdps = [compute_pdp(c) for c in ref]
    result = {"schema": io.FIT_SCHEMA, "config_hash": h, "scenario": manifest["scenario"]}
    rows = []

    samples = []
    for _, cirs in hurricane:
        pdps = [compute_pdp(c) for c in cirs]
        samples += per_scan_attenuation(pdps, ref_pdps, paired=paired)
    if samples:
        try:
            ls = fit_large_scale(samples)
            result["large_scale"] = {"estimates": ls.estimates, "standard_errors": ls.standard_errors}
            rows += [("large_scale", k, v, ls.standard_errors.get(k), "") for k, v in ls.estimates.items()]
        except ValueError as exc:
            result["large_scale"] = {"error": str(exc)}
            rows.append(("large_scale", "*", None, None, str(exc)))

    stats = ScanStatistics()
    for cir in ref:
        stats.add(cir)
    mp = stats.estimate()
    result["multipath"] = {"estimates": mp.estimates, "standard_errors": mp.standard_errors, "errors": mp.errors}
    rows += [("multipath", k, v, mp.standard_errors.get(k), "") for k, v in mp.estimates.items()]
    rows += [("multipath", k, None, None, msg) for k, msg in mp.errors.items()]

    fits = [f for f in (scan_nakagami(c) for c in ref) if f is not None]
    try:
        ss = lognormal_m_statistics([f.m for f in fits], [f.omega for f in fits])
        result["small_scale"] = ss
        rows += [("small_scale", k, v, None, "") for k, v in ss.items()]
    except ValueError as exc:
        result["small_scale"] = {"error": str(exc)}
        rows.append(("small_scale", "*", None, None, str(exc)))

    io.write_json(out / "fit.json", io.json_safe(result))
    io.write_csv(out / "fit.csv", io.FIT_SCHEMA, h, ("group", "parameter", "estimate", "std_error", "note"), rows)
    return EXIT_OK


def cmd_roundtrip(cfg) -> int:
    out = io.ensure_dir(cfg["out"])
    echo = _content_config(cfg)
    h = io.config_hash(echo)
    scenario = Scenario.parse(cfg["scenario"])
    params = _tables(cfg)[scenario.key]
    tol = None
    if cfg.get("tolerance") is not None:
        if cfg["tolerance"] <= 0:
            raise UsageError("tolerance must be positive")
        tol = {k: float(cfg["tolerance"]) for k in DEFAULT_TOLERANCES}
    report = roundtrip_report(scenario.reference(scenario.position, scenario.rain), cfg["scans"],
                              cfg["seed"], params, tol)
    fields = ("parameter", "expected", "estimate", "rel_error", "tolerance", "checked", "passed", "note")
    rows = [tuple(getattr(r, f) for f in fields) for r in report.rows]
    io.write_csv(out / "roundtrip.csv", io.ROUNDTRIP_SCHEMA, h, fields, rows)
    io.write_json(out / "roundtrip.json", io.json_safe({
        "schema": io.ROUNDTRIP_SCHEMA, "config_hash": h, "config": echo,
        "scenario": scenario.label, "n_scans": report.n_scans, "seed": report.seed,
        "passed": report.passed, "rows": [dict(zip(fields, r)) for r in rows],
    }))
    for r in report.rows:
        if r.checked:
            log.info("%-11s expected %-8g estimate %-10s %s", r.parameter, r.expected,
                     "-" if r.estimate is None else f"{r.estimate:.4g}", "ok" if r.passed else "FAIL " + r.note)
    return EXIT_OK if report.passed else EXIT_VALIDATION


COMMANDS = {"synth": cmd_synth, "analyze": cmd_analyze, "fit": cmd_fit, "roundtrip": cmd_roundtrip}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
