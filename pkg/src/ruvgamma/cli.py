"""Command-line interface.

Three subcommands:

``run``
    Two-stage analysis of a delimited expression matrix (or a dataset written
    by ``simulate``): factor estimation, per-gene tests, DE calls, adjusted
    matrix, RLE and eigenvalue-ratio diagnostics.
``simulate``
    Write a synthetic dataset together with its ground truth.
``replicates``
    Simulation study over repeated datasets comparing method combinations.

Flags mirror the pipeline configuration. A JSON config file may supply any
option; explicit flags override it. Gamma accepts a comma-separated grid, in
which case each value runs into its own subdirectory. Exit code is 2 for
input, parse, and rank errors; non-convergence is reported in the manifest
and on stdout but does not fail the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import io as rio
from .pipeline import (
    RUV_METHODS,
    TEST_METHODS,
    PipelineConfig,
    default_combos,
    env_workers,
    run_k_scan,
    run_pipeline,
    run_replicates,
    versions,
    write_study,
)
from .simulate import ScenarioSpec, generate

_SCENARIO_DEFAULTS = {
    "n": 100,
    "p": 1000,
    "n_de": 100,
    "pi_o": 0.0,
    "sigma_o": 1.0,
    "n_controls": 200,
}

_RUN_DEFAULTS = {
    "input": None,
    "covariate": None,
    "controls": None,
    "control_indices": None,
    "truth_w": None,
    "truth_ids": None,
    "out": None,
    "ruv_method": "gamma",
    "test_method": "gamma_lse",
    "gamma": 0.5,
    "scatter_gamma": 0.02,
    "k": None,
    "k_range": None,
    "fwer_alpha": 0.05,
    "seed": 0,
    "workers": None,
}

_SIM_DEFAULTS = {**_SCENARIO_DEFAULTS, "seed": 0, "out": None}

_REP_DEFAULTS = {
    **_SCENARIO_DEFAULTS,
    "seed": 0,
    "out": None,
    "replicates": 20,
    "combos": None,
    "gamma": 0.5,
    "scatter_gamma": 0.02,
    "k": 8,
    "fwer_alpha": 0.05,
    "workers": None,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ruvgamma",
        description="Robust removal of unwanted variation and robust DE testing.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="two-stage analysis of one dataset")
    run_p.add_argument("--input", help="expression matrix (samples x genes, delimited)")
    run_p.add_argument("--covariate", help="two-column file: sample id, covariate value")
    run_p.add_argument("--controls", help="file with one control gene id per line")
    run_p.add_argument(
        "--control-indices",
        dest="control_indices",
        help="comma-separated 1-based control gene column indices (alternative to --controls)",
    )
    run_p.add_argument("--truth-w", dest="truth_w", help="sample-by-factor table for ruv-method true_w")
    run_p.add_argument(
        "--truth-ids",
        dest="truth_ids",
        help="known-positive gene id list (needed for k=scan TP on real data)",
    )
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--ruv-method", dest="ruv_method", choices=RUV_METHODS)
    run_p.add_argument("--test-method", dest="test_method", choices=TEST_METHODS)
    run_p.add_argument("--gamma", help="robustness parameter for the tests; comma list runs a grid")
    run_p.add_argument(
        "--scatter-gamma",
        dest="scatter_gamma",
        help='robustness parameter for the scatter stage; "gamma" reuses --gamma',
    )
    run_p.add_argument("--k", help='number of unwanted factors, or "scan"')
    run_p.add_argument("--k-range", dest="k_range", help="scan range lo:hi (inclusive)")
    run_p.add_argument("--fwer-alpha", dest="fwer_alpha", type=float)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--workers", type=int, help="worker processes (default: RUVGAMMA_WORKERS or 1)")
    run_p.add_argument("--config", help="JSON file of options; flags override it")

    sim_p = sub.add_parser("simulate", help="write a synthetic dataset with ground truth")
    for name in ("n", "p", "n_de", "n_controls", "seed"):
        sim_p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    sim_p.add_argument("--pi-o", dest="pi_o", type=float, help="contamination probability")
    sim_p.add_argument("--sigma-o", dest="sigma_o", type=float, help="contamination scale")
    sim_p.add_argument("--out", help="output directory")
    sim_p.add_argument("--config", help="JSON file of options; flags override it")

    rep_p = sub.add_parser("replicates", help="replicate study over simulated data")
    for name in ("n", "p", "n_de", "n_controls", "seed", "replicates"):
        rep_p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    rep_p.add_argument("--pi-o", dest="pi_o", type=float)
    rep_p.add_argument("--sigma-o", dest="sigma_o", type=float)
    rep_p.add_argument(
        "--combos",
        help="comma list like gamma+gamma_lse,ruv2+lse (default: all combinations)",
    )
    rep_p.add_argument("--gamma", help="comma list runs a grid")
    rep_p.add_argument("--scatter-gamma", dest="scatter_gamma")
    rep_p.add_argument("--k", type=int)
    rep_p.add_argument("--fwer-alpha", dest="fwer_alpha", type=float)
    rep_p.add_argument("--workers", type=int)
    rep_p.add_argument("--out", help="output directory")
    rep_p.add_argument("--config", help="JSON file of options; flags override it")
    return p


def _merge(args: argparse.Namespace, defaults: Dict) -> Dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{config_path}: not valid JSON ({exc})") from None
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ValueError(f"{config_path}: unknown options {unknown}")
        merged.update(loaded)
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _parse_gammas(value) -> List[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list):
        return [float(v) for v in value]
    out = []
    for part in str(value).split(","):
        part = part.strip()
        if part:
            out.append(float(part))
    if not out:
        raise ValueError("empty gamma list")
    return out


def _parse_scatter_gamma(value) -> Optional[float]:
    if value is None or value == "gamma":
        return None
    return float(value)


def _parse_k(value):
    if value is None or value == "scan" or isinstance(value, int):
        return value
    text = str(value).strip()
    return "scan" if text == "scan" else int(text)


def _parse_k_range(value) -> List[int]:
    try:
        lo, hi = str(value).split(":")
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise ValueError(f"k range must look like 1:12, got {value!r}") from None
    if not (1 <= lo_i <= hi_i):
        raise ValueError(f"k range must satisfy 1 <= lo <= hi, got {value!r}")
    return list(range(lo_i, hi_i + 1))


def _parse_indices(value) -> Tuple[int, ...]:
    """1-based user-facing indices to 0-based internal ones."""
    items = value if isinstance(value, list) else str(value).split(",")
    out = []
    for item in items:
        idx = int(str(item).strip())
        if idx < 1:
            raise ValueError("control indices are 1-based; got a value below 1")
        out.append(idx - 1)
    return tuple(out)


def _parse_combos(value) -> List[Tuple[str, str]]:
    if value is None:
        return list(default_combos())
    items = value if isinstance(value, list) else str(value).split(",")
    out = []
    for item in items:
        item = str(item).strip()
        if "+" not in item:
            raise ValueError(f"combination {item!r} must look like gamma+gamma_lse")
        ruv_method, test_method = item.split("+", 1)
        out.append((ruv_method, test_method))
    return out


def _workers(merged: Dict) -> int:
    if merged.get("workers") is not None:
        return int(merged["workers"])
    return env_workers(1)


def _require(merged: Dict, key: str, flag: str):
    if merged.get(key) is None:
        raise ValueError(f"missing required option {flag}")
    return merged[key]


def _gamma_dirs(out: Path, gammas: Sequence[float]) -> List[Path]:
    if len(gammas) == 1:
        return [out]
    return [out / f"gamma_{g:g}" for g in gammas]


def _scenario(merged: Dict, seed: int) -> ScenarioSpec:
    return ScenarioSpec(
        n=int(merged["n"]),
        p=int(merged["p"]),
        n_de=int(merged["n_de"]),
        pi_o=float(merged["pi_o"]),
        sigma_o=float(merged["sigma_o"]),
        n_controls=int(merged["n_controls"]),
        seed=seed,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    merged = _merge(args, _RUN_DEFAULTS)
    out = Path(_require(merged, "out", "--out"))
    _require(merged, "input", "--input")
    _require(merged, "covariate", "--covariate")
    gammas = _parse_gammas(merged["gamma"])
    k = _parse_k(merged["k"])
    control_indices = (
        _parse_indices(merged["control_indices"])
        if merged["control_indices"] is not None
        else None
    )
    workers = _workers(merged)
    for g, gdir in zip(gammas, _gamma_dirs(out, gammas)):
        cfg = PipelineConfig(
            ruv_method=merged["ruv_method"],
            test_method=merged["test_method"],
            gamma=g,
            scatter_gamma=_parse_scatter_gamma(merged["scatter_gamma"]),
            k=k,
            fwer_alpha=float(merged["fwer_alpha"]),
            seed=int(merged["seed"]),
            workers=workers,
            input_path=merged["input"],
            covariate_path=merged["covariate"],
            controls_path=merged["controls"],
            control_indices=control_indices,
            truth_w_path=merged["truth_w"],
            output_dir=str(gdir),
        )
        if k == "scan":
            k_values = _parse_k_range(_require(merged, "k_range", "--k-range"))
            positives = (
                rio.read_id_list(merged["truth_ids"]) if merged["truth_ids"] else None
            )
            rows = run_k_scan(cfg, k_values, positives)
            gdir.mkdir(parents=True, exist_ok=True)
            rio.write_rows(gdir / "tp_vs_k.tsv", ["k", "tp", "n_called"], rows)
            rio.write_manifest(
                gdir / rio.MANIFEST_FILE,
                {"config": {**merged, "gamma": g}, "seed": merged["seed"], "versions": versions()},
            )
            print(f"k scan ({len(rows)} values) written to {gdir}")
        else:
            result = run_pipeline(cfg)
            conv = result.diagnostics.get("tests_converged", 0)
            total = result.diagnostics.get("genes", 0)
            print(
                f"{cfg.ruv_method}+{cfg.test_method} gamma={g:g}: "
                f"{len(result.calls.indices)} DE calls, {conv}/{total} tests converged; "
                f"bundle in {gdir}"
            )
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    merged = _merge(args, _SIM_DEFAULTS)
    out = Path(_require(merged, "out", "--out"))
    spec = _scenario(merged, int(merged["seed"]))
    truth = generate(spec)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_matrix(out / "matrix.tsv", truth.y)
    rio.write_matrix(out / "clean_matrix.tsv", truth.y0)
    rio.write_covariate(out / "covariate.tsv", truth.y.sample_ids, truth.x)
    rio.write_id_list(out / "controls.txt", [truth.y.gene_ids[j] for j in spec.control_indices])
    rio.write_factor_matrix(out / "truth_w.tsv", truth.w, truth.y.sample_ids)
    rio.write_rows(
        out / "truth_beta.tsv",
        ["gene", "beta"],
        [[g, float(b)] for g, b in zip(truth.y.gene_ids, truth.beta)],
    )
    rio.write_manifest(
        out / rio.MANIFEST_FILE,
        {
            "scenario": {f.name: getattr(spec, f.name) for f in spec.__dataclass_fields__.values()},
            "seed": spec.seed,
            "versions": versions(),
            "n_contaminated_cells": int(truth.contamination_mask.sum()),
        },
    )
    print(f"dataset ({spec.n} samples x {spec.p} genes) written to {out}")
    return 0


def _cmd_replicates(args: argparse.Namespace) -> int:
    merged = _merge(args, _REP_DEFAULTS)
    out = Path(_require(merged, "out", "--out"))
    gammas = _parse_gammas(merged["gamma"])
    combos = _parse_combos(merged["combos"])
    workers = _workers(merged)
    scenario = _scenario(merged, int(merged["seed"]))
    for g, gdir in zip(gammas, _gamma_dirs(out, gammas)):
        cfg = PipelineConfig(
            gamma=g,
            scatter_gamma=_parse_scatter_gamma(merged["scatter_gamma"]),
            k=int(merged["k"]),
            fwer_alpha=float(merged["fwer_alpha"]),
            n_replicates=int(merged["replicates"]),
            seed=int(merged["seed"]),
            workers=workers,
            scenario=scenario,
        )
        study = run_replicates(cfg, combos)
        write_study(gdir, cfg, study)
        print(f"gamma={g:g}: {len(study.rows)} rows over {cfg.n_replicates} replicates -> {gdir}")
        for s in study.summary:
            print(
                f"  {s.ruv_method}+{s.test_method}: "
                f"AUC {s.mean_auc:.3f} (se {s.se_auc:.3f}), "
                f"TP {s.mean_tp:.1f}, FP {s.mean_fp:.1f}, IQR {s.mean_iqr:.3f} [n={s.n_ok}]"
            )
        if study.failures:
            print(f"  {len(study.failures)} combination runs failed (see run_manifest)")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "simulate": _cmd_simulate, "replicates": _cmd_replicates}[
        args.command
    ]
    try:
        return handler(args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
