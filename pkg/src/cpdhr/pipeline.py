"""Staged simulation pipeline: simulate, decompose, evaluate, export.

Each stage reads and writes only files, so chaining the stages by hand
produces exactly the artifacts of run_pipeline. All randomness is seeded
from the config seed with fixed offsets per purpose, making every file
byte-reproducible: sources use the seed itself, the noise draw uses
seed + NOISE_SEED_OFFSET, solver initialization uses seed + INIT_SEED_OFFSET.
"""

import json
import os
import shutil

import numpy as np

from . import charts, formats, metrics, scene as scene_mod
from .core import CpdModel
from .solvers import CpdOptions, cpd

NOISE_SEED_OFFSET = 1_000_003
INIT_SEED_OFFSET = 2_000_003


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def simulate(config_path, out_dir):
    """Build the scene tensor and its noisy / masked variants on disk."""
    cfg = formats.load_config(config_path)
    os.makedirs(out_dir, exist_ok=True)
    shutil.copyfile(config_path, os.path.join(out_dir, "config.json"))

    if cfg.signals == "synthetic":
        sources = scene_mod.synthetic_sources(cfg.scene.time_len, cfg.scene.rank, seed=cfg.seed)
    else:
        sources = formats.load_signals(cfg.signals)
    formats.save_signals(sources, os.path.join(out_dir, "sources.csv"))

    clean, truth = scene_mod.build_scene_tensor(cfg.scene, sources)
    formats.save_tensor(clean, os.path.join(out_dir, "clean.tns"))
    for n, factor in enumerate(truth.factors, start=1):
        formats.save_tensor(factor, os.path.join(out_dir, f"truth_mode{n}.tns"))

    if cfg.snr_db is None:
        noisy = clean
    else:
        noisy = scene_mod.add_noise(clean, cfg.snr_db, seed=cfg.seed + NOISE_SEED_OFFSET)
    formats.save_tensor(noisy, os.path.join(out_dir, "noisy.tns"))

    if cfg.masks:
        masked = scene_mod.apply_mask(noisy, cfg.masks)
        formats.save_tensor(masked, os.path.join(out_dir, "masked.tns"))
    return cfg


def decompose(tensor_path, rank, algorithm, seed, out_dir,
              missing_data_strategy="expectation_imputation"):
    """Run the CPD solver on a tensor file and write factors + diagnostics."""
    t = formats.load_tensor(tensor_path)
    opts = CpdOptions(rank=rank, algorithm=algorithm, init=seed,
                      missing_data_strategy=missing_data_strategy)
    model, diag = cpd(t, opts)
    os.makedirs(out_dir, exist_ok=True)
    for n, factor in enumerate(model.factors, start=1):
        formats.save_tensor(factor, os.path.join(out_dir, f"factor_mode{n}.tns"))
    doc = {
        "tensor": os.path.basename(str(tensor_path)),
        "rank": rank,
        "algorithm": algorithm,
        "seed": seed,
        "missing_data_strategy": missing_data_strategy,
        "iterations": diag.iterations,
        "converged": diag.converged,
        "final_relative_residual": diag.final_relative_residual,
        "objective_trace": list(diag.objective_trace),
    }
    formats.save_report(doc, os.path.join(out_dir, "diagnostics.json"))
    return model, diag


def _load_model(directory, prefix):
    factors = []
    n = 1
    while True:
        path = os.path.join(directory, f"{prefix}{n}.tns")
        if not os.path.exists(path):
            break
        factors.append(np.asarray(formats.load_tensor(path)))
        n += 1
    if not factors:
        raise ValueError(f"no {prefix}*.tns files in {directory}")
    return CpdModel(factors)


def evaluate(truth_dir, estimate_dir, out_path):
    """Compare an estimate directory against a truth directory.

    Writes the report to out_path and aligned_sources.csv into the
    estimate directory it was derived from.
    """
    cfg = formats.load_config(os.path.join(truth_dir, "config.json"))
    digest = formats.config_digest(os.path.join(truth_dir, "config.json"))
    truth = _load_model(truth_dir, "truth_mode")
    sources = formats.load_signals(os.path.join(truth_dir, "sources.csv"))
    estimate = _load_model(estimate_dir, "factor_mode")
    diagnostics = formats.load_report(os.path.join(estimate_dir, "diagnostics.json"))

    rep = metrics.cpderr(truth, estimate)
    aligned = metrics.align_sources(sources.signals, estimate.factors[-1], rep)
    aligned_set = scene_mod.SourceSet(aligned, [f"recovered {l}" for l in sources.labels])
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    formats.save_signals(aligned_set, os.path.join(estimate_dir, "aligned_sources.csv"))
    corr = metrics.correlate_sources(sources.signals, aligned)

    try:
        doa = scene_mod.estimate_doa(estimate, cfg.scene)
        doa_doc = {
            "azimuth_deg": doa.azimuth_deg,
            "elevation_deg": doa.elevation_deg,
            "azimuth_rel_err": doa.azimuth_rel_err,
            "elevation_rel_err": doa.elevation_rel_err,
        }
    except ValueError as exc:
        doa_doc = {"error": str(exc)}

    report = {
        "provenance": {
            "config_sha256": digest,
            "seed": cfg.seed,
            "rank": cfg.rank,
            "algorithm": cfg.algorithm,
            "tensor": diagnostics.get("tensor"),
            "solver_seed": diagnostics.get("seed"),
        },
        "diagnostics": {
            "iterations": diagnostics["iterations"],
            "converged": diagnostics["converged"],
            "final_relative_residual": diagnostics["final_relative_residual"],
        },
        "cpderr": {
            "per_mode_relative_error": rep.per_mode_relative_error,
            "permutation": [None if p is None else p + 1 for p in rep.permutation],
        },
        "correlation": {
            "per_source_r": corr.per_source_r,
            "per_source_p": corr.per_source_p,
        },
        "doa": doa_doc,
    }
    formats.save_report(report, out_path)
    return report


def plot_overlay(csv_paths, out_svg):
    """One panel per source column, one polyline per input CSV."""
    if not csv_paths:
        raise ValueError("no signal files to plot")
    sets = [(os.path.splitext(os.path.basename(str(p)))[0], formats.load_signals(p))
            for p in csv_paths]
    width = sets[0][1].signals.shape[1]
    for name, ss in sets:
        if ss.signals.shape[1] != width:
            raise ValueError(f"{name}: expected {width} columns, found {ss.signals.shape[1]}")
    panels = []
    for col in range(width):
        title = sets[0][1].labels[col]
        series = [(name, ss.signals[:, col]) for name, ss in sets]
        panels.append(charts.ChartPanel(title, series))
    charts.save_chart(panels, out_svg)


def _run_single(config_path, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    truth_dir = os.path.join(out_dir, "truth")
    cfg = simulate(config_path, truth_dir)
    solver_seed = cfg.seed + INIT_SEED_OFFSET

    jobs = [("noisy.tns", "estimate", "report.json")]
    if cfg.masks:
        jobs.append(("masked.tns", "estimate_masked", "report_masked.json"))

    all_converged = True
    reports = {}
    for tensor_name, est_name, report_name in jobs:
        est_dir = os.path.join(out_dir, est_name)
        _, diag = decompose(
            os.path.join(truth_dir, tensor_name), cfg.rank, cfg.algorithm,
            solver_seed, est_dir, missing_data_strategy=cfg.missing_data_strategy,
        )
        all_converged = all_converged and diag.converged
        report = evaluate(truth_dir, est_dir, os.path.join(out_dir, report_name))
        reports[report_name] = report

    slice_source = "masked.tns" if cfg.masks else "noisy.tns"
    slice_tensor = formats.load_tensor(os.path.join(truth_dir, slice_source))
    _write(os.path.join(out_dir, "slice_mode3_k1.csv"),
           formats.slice_csv(slice_tensor, mode=2, index=0))
    plot_overlay(
        [os.path.join(truth_dir, "sources.csv"),
         os.path.join(out_dir, "estimate", "aligned_sources.csv")],
        os.path.join(out_dir, "fig_sources.svg"),
    )
    return reports, all_converged


def _median(values):
    return float(np.median(np.asarray(values, dtype=np.float64)))


def run_pipeline(config_path, out_dir, seeds=None):
    """Full run for one seed, or a sweep over an iterable of seeds.

    Returns (reports, all_converged). A sweep writes per-seed directories
    seed_<s>/ plus a summary.json of medians across seeds.
    """
    if seeds is None:
        return _run_single(config_path, out_dir)

    with open(config_path, "r", encoding="utf-8") as fh:
        base_doc = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    all_converged = True
    for s in seeds:
        seed_dir = os.path.join(out_dir, f"seed_{s}")
        os.makedirs(seed_dir, exist_ok=True)
        derived = os.path.join(seed_dir, "config.json")
        _write(derived, formats.canonical_json(dict(base_doc, seed=s)))
        reports, converged = _run_single(derived, seed_dir)
        all_converged = all_converged and converged
        row = {"seed": s, "converged": reports["report.json"]["diagnostics"]["converged"]}
        for name, report in reports.items():
            key = "masked" if name == "report_masked.json" else "unmasked"
            row[key] = {
                "cpderr": report["cpderr"]["per_mode_relative_error"],
                "min_correlation": min(report["correlation"]["per_source_r"]),
                "doa": report["doa"],
            }
        rows.append(row)

    n_modes = len(rows[0]["unmasked"]["cpderr"])
    summary = {
        "seeds": [r["seed"] for r in rows],
        "n_converged": sum(1 for r in rows if r["converged"]),
        "median_cpderr": [
            _median([r["unmasked"]["cpderr"][n] for r in rows]) for n in range(n_modes)
        ],
        "median_min_correlation": _median([r["unmasked"]["min_correlation"] for r in rows]),
        "per_seed": rows,
    }
    doa_ok = [r for r in rows if "error" not in r["unmasked"]["doa"]]
    if doa_ok:
        n_src = len(doa_ok[0]["unmasked"]["doa"]["azimuth_rel_err"])
        summary["median_azimuth_rel_err"] = [
            _median([r["unmasked"]["doa"]["azimuth_rel_err"][k] for r in doa_ok])
            for k in range(n_src)
        ]
        summary["median_elevation_rel_err"] = [
            _median([r["unmasked"]["doa"]["elevation_rel_err"][k] for r in doa_ok])
            for k in range(n_src)
        ]
    if any("masked" in r for r in rows):
        masked_rows = [r for r in rows if "masked" in r]
        summary["median_cpderr_masked"] = [
            _median([r["masked"]["cpderr"][n] for r in masked_rows]) for n in range(n_modes)
        ]
    formats.save_report(summary, os.path.join(out_dir, "summary.json"))
    return summary, all_converged
