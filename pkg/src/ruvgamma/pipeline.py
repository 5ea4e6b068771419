"""End-to-end orchestration.

A run is the two-stage procedure: estimate the unwanted-variation basis from
control genes, then test every gene with the robust (or classical) regression
that includes the estimated basis as nuisance columns. This module also hosts
the replicate study used for method comparison on simulated data, and the
k-scan sweep.
"""

from __future__ import annotations

import dataclasses
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import io as rio
from ._backend import BACKEND
from .classic import ruv2, ruv4
from .metrics import RleSummary, auc_pvalues, rle_summary, tp_fp
from .model import (
    ExpressionMatrix,
    FactorEstimate,
    GammaConfig,
    StudyDesign,
    center_columns,
)
from .regression import (
    DeCallSet,
    GeneTest,
    RegressionDesign,
    call_de_genes,
    fit_gamma_lse_genes,
    fit_lse,
    make_design,
)
from .scatter import LocationScatter, eigenvalue_ratios, extract_basis, fit_location_scatter
from .simulate import GroundTruth, ScenarioSpec, generate

RUV_METHODS = ("ruv2", "ruv4", "gamma", "true_w", "ignore_w")
TEST_METHODS = ("lse", "gamma_lse")

DEFAULT_GAMMA = 0.5
DEFAULT_SCATTER_GAMMA = 0.02


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one run (or one replicate study) needs.

    ``gamma`` drives the per-gene robust tests. ``scatter_gamma`` drives the
    location-scatter stage; it defaults to a much smaller value because the
    scatter weights act on n-dimensional observation vectors, where the
    effective sample size of the density-power weights decays geometrically
    in the dimension. Set ``scatter_gamma=None`` to reuse ``gamma``.
    """

    ruv_method: str = "gamma"
    test_method: str = "gamma_lse"
    gamma: float = DEFAULT_GAMMA
    scatter_gamma: Optional[float] = DEFAULT_SCATTER_GAMMA
    k: Optional[Union[int, str]] = None
    fwer_alpha: float = 0.05
    n_replicates: int = 1
    seed: int = 0
    workers: int = 1
    input_path: Optional[str] = None
    covariate_path: Optional[str] = None
    controls_path: Optional[str] = None
    control_indices: Optional[Tuple[int, ...]] = None
    truth_w_path: Optional[str] = None
    output_dir: Optional[str] = None
    scenario: Optional[ScenarioSpec] = None

    def __post_init__(self) -> None:
        if self.ruv_method not in RUV_METHODS:
            raise ValueError(f"ruv_method must be one of {RUV_METHODS}")
        if self.test_method not in TEST_METHODS:
            raise ValueError(f"test_method must be one of {TEST_METHODS}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.scatter_gamma is not None and self.scatter_gamma < 0:
            raise ValueError("scatter_gamma must be nonnegative")
        if self.ruv_method == "ignore_w":
            if self.k is not None:
                raise ValueError("ignore_w does not take k")
        elif self.ruv_method in ("ruv2", "ruv4", "gamma"):
            if self.k is None:
                raise ValueError(f"{self.ruv_method} requires k")
            if not (self.k == "scan" or (isinstance(self.k, int) and self.k >= 1)):
                raise ValueError('k must be a positive integer or "scan"')
        if self.ruv_method == "true_w":
            if self.scenario is None and self.truth_w_path is None:
                raise ValueError("true_w requires a ground-truth factor file")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not (0.0 < self.fwer_alpha < 1.0):
            raise ValueError("fwer_alpha must lie in (0, 1)")

    @property
    def scatter_gamma_value(self) -> float:
        return self.gamma if self.scatter_gamma is None else self.scatter_gamma


@dataclass(frozen=True)
class Dataset:
    """Loaded inputs, from files or from the simulator."""

    y: ExpressionMatrix
    x: np.ndarray
    controls: Tuple[int, ...]
    truth: Optional[GroundTruth] = None
    true_w: Optional[np.ndarray] = None


def load_dataset(cfg: PipelineConfig) -> Dataset:
    if cfg.scenario is not None:
        truth = generate(cfg.scenario)
        return Dataset(
            y=truth.y,
            x=truth.x,
            controls=cfg.scenario.control_indices,
            truth=truth,
            true_w=truth.w,
        )
    if cfg.input_path is None or cfg.covariate_path is None:
        raise ValueError("file mode needs input_path and covariate_path")
    y = rio.read_matrix(cfg.input_path)
    x = rio.read_covariate(cfg.covariate_path, y.sample_ids)
    if cfg.controls_path is not None:
        controls = rio.ids_to_indices(y.gene_ids, rio.read_id_list(cfg.controls_path), "control")
    elif cfg.control_indices is not None:
        controls = tuple(int(c) for c in cfg.control_indices)
    else:
        raise ValueError("control genes must be given by id list or index list")
    true_w = None
    if cfg.truth_w_path is not None:
        true_w = rio.read_factor_matrix(cfg.truth_w_path, y.sample_ids)
    return Dataset(y=y, x=x, controls=controls, true_w=true_w)


@dataclass(frozen=True)
class PipelineResult:
    """One complete run: estimates, tests, diagnostics, optional metrics."""

    factor: Optional[FactorEstimate]
    tests: Tuple[GeneTest, ...]
    pvalues: np.ndarray
    calls: DeCallSet
    adjusted: ExpressionMatrix
    rle: RleSummary
    eig_ratios: Optional[np.ndarray]
    design: RegressionDesign
    design_notes: Tuple[str, ...]
    diagnostics: Dict[str, int]
    metrics: Optional[Dict[str, float]]


def estimate_factors(
    dataset: Dataset, cfg: PipelineConfig, method: Optional[str] = None, k: Optional[int] = None
) -> Tuple[Optional[FactorEstimate], Optional[LocationScatter]]:
    """Stage one; returns (estimate, scatter), scatter only for 'gamma'."""
    method = cfg.ruv_method if method is None else method
    k = _int_k(cfg, method) if k is None else k
    if method == "ignore_w":
        return None, None
    if method == "true_w":
        w = dataset.true_w if dataset.truth is None else dataset.truth.w
        if w is None:
            raise ValueError("true_w requires a ground-truth factor file")
        return FactorEstimate(w_hat=np.asarray(w, dtype=float), method="true_w"), None
    sd = StudyDesign(dataset.x, dataset.controls, k, cfg.fwer_alpha)
    if method == "ruv2":
        return ruv2(dataset.y, sd), None
    if method == "ruv4":
        return ruv4(dataset.y, sd), None
    ys = center_columns(dataset.y)
    block = ys.submatrix(dataset.controls)
    ls = fit_location_scatter(block, GammaConfig(gamma=cfg.scatter_gamma_value))
    return extract_basis(ls, k), ls


def run_gene_tests(
    y: ExpressionMatrix, design: RegressionDesign, cfg: PipelineConfig, method: Optional[str] = None
) -> List[GeneTest]:
    method = cfg.test_method if method is None else method
    if method == "lse":
        return [fit_lse(y.values[:, j], design) for j in range(y.n_genes)]
    gcfg = GammaConfig(gamma=cfg.gamma)
    return fit_gamma_lse_genes(np.ascontiguousarray(y.values.T), design, gcfg)


def adjusted_matrix(
    y: ExpressionMatrix, design: RegressionDesign, tests: Sequence[GeneTest]
) -> ExpressionMatrix:
    """Remove the fitted unwanted-variation component from each gene.

    Uses exactly the design columns the fits used, so column scaling in the
    design cancels out.
    """
    unw = [j for j, role in enumerate(design.column_roles) if role == "unwanted"]
    if not unw:
        return y
    eta_w = np.array([[t.eta[j] for j in unw] for t in tests], dtype=float)
    return y.with_values(y.values - design.z[:, unw] @ eta_w.T)


def _int_k(cfg: PipelineConfig, method: str) -> int:
    if method in ("ignore_w", "true_w"):
        return 1 if cfg.k in (None, "scan") else int(cfg.k)
    if cfg.k == "scan":
        raise ValueError('k="scan" is handled by run_k_scan')
    if cfg.k is None:
        raise ValueError(f"{method} requires k")
    return int(cfg.k)


def _diagnostics(tests: Sequence[GeneTest], factor: Optional[FactorEstimate]) -> Dict[str, int]:
    notes = [t.note for t in tests]
    diag = {
        "genes": len(tests),
        "tests_converged": sum(t.converged for t in tests),
        "iteration_cap": notes.count("iteration cap reached"),
        "variance_collapse": notes.count("variance collapse"),
        "degenerate_response": notes.count("degenerate zero-variance response"),
        "unsolvable": notes.count("weighted system unsolvable"),
        "non_identified": notes.count("non-identified fit"),
    }
    if factor is not None:
        diag["factor_iterations"] = factor.iterations
        diag["factor_converged"] = int(factor.converged)
    return diag


def _result_metrics(
    pvalues: np.ndarray,
    calls: DeCallSet,
    rle: RleSummary,
    dataset: Dataset,
) -> Optional[Dict[str, float]]:
    truth = dataset.truth
    if truth is None:
        return None
    de = truth.beta != 0.0
    is_control = np.zeros(pvalues.size, dtype=bool)
    is_control[list(dataset.controls)] = True
    out: Dict[str, float] = {}
    nulls = ~de & ~is_control
    if de.any() and nulls.any():
        out["auc"] = auc_pvalues(pvalues[de], pvalues[nulls])
    tp, fp = tp_fp(calls, truth)
    out["tp"] = float(tp)
    out["fp"] = float(fp)
    out["mean_iqr"] = rle.mean_iqr
    return out


def execute(
    dataset: Dataset,
    cfg: PipelineConfig,
    ruv_method: Optional[str] = None,
    test_method: Optional[str] = None,
    factor: Optional[FactorEstimate] = None,
    scatter: Optional[LocationScatter] = None,
) -> PipelineResult:
    """Run stage one + stage two on an already-loaded dataset.

    ``factor``/``scatter`` may be supplied to reuse a stage-one fit across
    several test methods.
    """
    ruv_method = cfg.ruv_method if ruv_method is None else ruv_method
    test_method = cfg.test_method if test_method is None else test_method
    if factor is None and ruv_method != "ignore_w":
        factor, scatter = estimate_factors(dataset, cfg, ruv_method)
    w = None if factor is None else factor.w_hat
    design, notes = make_design(
        dataset.x, w, check_location_column=(ruv_method == "gamma")
    )
    tests = run_gene_tests(dataset.y, design, cfg, test_method)
    pvalues = np.array([t.pvalue for t in tests])
    sd = StudyDesign(dataset.x, dataset.controls, max(design.d - 2, 1), cfg.fwer_alpha)
    calls = call_de_genes(tests, sd)
    adjusted = adjusted_matrix(dataset.y, design, tests)
    rle = rle_summary(adjusted)
    ratios = eigenvalue_ratios(scatter) if scatter is not None else None
    return PipelineResult(
        factor=factor,
        tests=tuple(tests),
        pvalues=pvalues,
        calls=calls,
        adjusted=adjusted,
        rle=rle,
        eig_ratios=ratios,
        design=design,
        design_notes=notes,
        diagnostics=_diagnostics(tests, factor),
        metrics=_result_metrics(pvalues, calls, rle, dataset),
    )


def versions() -> Dict[str, str]:
    import scipy

    from . import __version__

    return {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "kernel_backend": BACKEND,
    }


def _config_record(cfg: PipelineConfig) -> Dict:
    rec = dataclasses.asdict(cfg)
    if cfg.scenario is not None:
        rec["scenario"] = dataclasses.asdict(cfg.scenario)
    return rec


def write_bundle(outdir, cfg: PipelineConfig, dataset: Dataset, result: PipelineResult) -> None:
    """Write the fixed-name output files for one run."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    gids = dataset.y.gene_ids
    rio.write_pvalues(out / rio.PVALUES_FILE, gids, result.pvalues)
    rio.write_de_calls(
        out / rio.DE_CALLS_FILE, gids, result.pvalues, result.calls.indices, result.calls.threshold
    )
    rio.write_matrix(out / rio.ADJUSTED_FILE, result.adjusted)
    rio.write_rle(out / rio.RLE_FILE, dataset.y.sample_ids, result.rle)
    if result.eig_ratios is not None:
        rio.write_eigratio(out / rio.EIGRATIO_FILE, result.eig_ratios)
    manifest = {
        "config": _config_record(cfg),
        "seed": cfg.seed,
        "versions": versions(),
        "convergence": dict(result.diagnostics),
        "design_notes": list(result.design_notes),
        "factor_notes": list(result.factor.notes) if result.factor is not None else [],
        "n_de_calls": len(result.calls.indices),
        "metrics": result.metrics,
    }
    rio.write_manifest(out / rio.MANIFEST_FILE, manifest)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Load data, run both stages, and write the bundle when configured."""
    dataset = load_dataset(cfg)
    result = execute(dataset, cfg)
    if cfg.output_dir is not None:
        write_bundle(cfg.output_dir, cfg, dataset, result)
    return result


# ---------------------------------------------------------------------------
# replicate study

@dataclass(frozen=True)
class ReplicateRow:
    ruv_method: str
    test_method: str
    replicate: int
    seed: int
    auc: float
    tp: int
    fp: int
    mean_iqr: float
    tests_converged: int


@dataclass(frozen=True)
class SummaryRow:
    ruv_method: str
    test_method: str
    n_ok: int
    mean_auc: float
    se_auc: float
    mean_tp: float
    se_tp: float
    mean_fp: float
    se_fp: float
    mean_iqr: float
    se_iqr: float


@dataclass(frozen=True)
class ReplicateStudy:
    rows: Tuple[ReplicateRow, ...]
    summary: Tuple[SummaryRow, ...]
    failures: Tuple[str, ...]

    def combo(self, ruv_method: str, test_method: str) -> SummaryRow:
        for s in self.summary:
            if s.ruv_method == ruv_method and s.test_method == test_method:
                return s
        raise KeyError(f"{ruv_method}+{test_method} not in study")


def default_combos() -> Tuple[Tuple[str, str], ...]:
    return tuple((r, t) for r in RUV_METHODS for t in TEST_METHODS)


def _replicate_worker(args) -> Tuple[int, List[ReplicateRow], List[str]]:
    cfg, combos, rep = args
    scenario = dataclasses.replace(cfg.scenario, seed=cfg.scenario.seed + rep)
    dataset = load_dataset(dataclasses.replace(cfg, scenario=scenario))
    rows: List[ReplicateRow] = []
    failures: List[str] = []
    cache: Dict[str, Tuple[Optional[FactorEstimate], Optional[LocationScatter]]] = {}
    for ruv_method, test_method in combos:
        try:
            if ruv_method not in cache:
                cache[ruv_method] = (
                    estimate_factors(dataset, cfg, ruv_method)
                    if ruv_method != "ignore_w"
                    else (None, None)
                )
            factor, scatter = cache[ruv_method]
            res = execute(dataset, cfg, ruv_method, test_method, factor, scatter)
            m = res.metrics or {}
            rows.append(
                ReplicateRow(
                    ruv_method=ruv_method,
                    test_method=test_method,
                    replicate=rep,
                    seed=scenario.seed,
                    auc=float(m.get("auc", float("nan"))),
                    tp=int(m.get("tp", 0)),
                    fp=int(m.get("fp", 0)),
                    mean_iqr=float(m.get("mean_iqr", float("nan"))),
                    tests_converged=res.diagnostics["tests_converged"],
                )
            )
        except Exception as exc:  # noqa: BLE001 - survive one bad combo
            failures.append(f"replicate {rep} {ruv_method}+{test_method}: {exc}")
    return rep, rows, failures


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    m = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return m, se


def summarize_rows(rows: Sequence[ReplicateRow]) -> Tuple[SummaryRow, ...]:
    combos: List[Tuple[str, str]] = []
    for r in rows:
        key = (r.ruv_method, r.test_method)
        if key not in combos:
            combos.append(key)
    out = []
    for ruv_method, test_method in combos:
        grp = [r for r in rows if (r.ruv_method, r.test_method) == (ruv_method, test_method)]
        auc = np.array([g.auc for g in grp], dtype=float)
        tp = np.array([g.tp for g in grp], dtype=float)
        fp = np.array([g.fp for g in grp], dtype=float)
        iqr = np.array([g.mean_iqr for g in grp], dtype=float)
        (ma, sa), (mt, st) = _mean_se(auc), _mean_se(tp)
        (mf, sf), (mi, si) = _mean_se(fp), _mean_se(iqr)
        out.append(
            SummaryRow(
                ruv_method=ruv_method,
                test_method=test_method,
                n_ok=len(grp),
                mean_auc=ma,
                se_auc=sa,
                mean_tp=mt,
                se_tp=st,
                mean_fp=mf,
                se_fp=sf,
                mean_iqr=mi,
                se_iqr=si,
            )
        )
    return tuple(out)


def run_replicates(
    cfg: PipelineConfig, combos: Optional[Sequence[Tuple[str, str]]] = None
) -> ReplicateStudy:
    """Evaluate method combinations over repeated simulated datasets.

    Replicate r regenerates the scenario with seed ``scenario.seed + r``, so
    the whole study is deterministic given the master seed. All combinations
    share each replicate's dataset, which makes the comparisons paired.
    Failed combinations are logged and excluded rather than fatal.
    """
    if cfg.scenario is None:
        raise ValueError("run_replicates needs a simulation scenario")
    combos = default_combos() if combos is None else [tuple(c) for c in combos]
    for ruv_method, test_method in combos:
        if ruv_method not in RUV_METHODS or test_method not in TEST_METHODS:
            raise ValueError(f"unknown combination {ruv_method}+{test_method}")
    args = [(cfg, combos, rep) for rep in range(cfg.n_replicates)]
    per_rep: List[Tuple[int, List[ReplicateRow], List[str]]] = []
    if cfg.workers > 1 and cfg.n_replicates > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_rep = list(pool.map(_replicate_worker, args))
    else:
        per_rep = [_replicate_worker(a) for a in args]
    per_rep.sort(key=lambda t: t[0])
    rows: List[ReplicateRow] = []
    failures: List[str] = []
    for _, rrows, rfail in per_rep:
        rows.extend(rrows)
        failures.extend(rfail)
    return ReplicateStudy(rows=tuple(rows), summary=summarize_rows(rows), failures=tuple(failures))


def write_study(outdir, cfg: PipelineConfig, study: ReplicateStudy) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_rows(
        out / "results.tsv",
        ["ruv_method", "test_method", "replicate", "seed", "auc", "tp", "fp", "mean_iqr", "tests_converged"],
        [
            [r.ruv_method, r.test_method, r.replicate, r.seed, r.auc, r.tp, r.fp, r.mean_iqr, r.tests_converged]
            for r in study.rows
        ],
    )
    rio.write_rows(
        out / "summary.tsv",
        [
            "ruv_method", "test_method", "n_ok",
            "mean_auc", "se_auc", "mean_tp", "se_tp",
            "mean_fp", "se_fp", "mean_iqr", "se_iqr",
        ],
        [
            [
                s.ruv_method, s.test_method, s.n_ok,
                s.mean_auc, s.se_auc, s.mean_tp, s.se_tp,
                s.mean_fp, s.se_fp, s.mean_iqr, s.se_iqr,
            ]
            for s in study.summary
        ],
    )
    manifest = {
        "config": _config_record(cfg),
        "seed": cfg.seed,
        "versions": versions(),
        "failures": list(study.failures),
        "n_rows": len(study.rows),
    }
    rio.write_manifest(out / rio.MANIFEST_FILE, manifest)


# ---------------------------------------------------------------------------
# k scan

def run_k_scan(
    cfg: PipelineConfig,
    k_values: Sequence[int],
    positive_ids: Optional[Sequence[str]] = None,
) -> List[Tuple[int, int, int]]:
    """Sweep k and report (k, tp, n_called) per value.

    On simulated data the true DE set is known; on real data a list of
    known-positive gene ids must be supplied.
    """
    dataset = load_dataset(cfg)
    if dataset.truth is not None:
        positives = {int(j) for j in np.flatnonzero(dataset.truth.beta != 0.0)}
    elif positive_ids is not None:
        positives = set(rio.ids_to_indices(dataset.y.gene_ids, positive_ids, "positive"))
    else:
        raise ValueError("k scan needs ground truth or a known-positive id list")
    scatter = None
    if cfg.ruv_method == "gamma":
        ys = center_columns(dataset.y)
        scatter = fit_location_scatter(
            ys.submatrix(dataset.controls), GammaConfig(gamma=cfg.scatter_gamma_value)
        )
    rows = []
    for k in k_values:
        if cfg.ruv_method == "gamma":
            factor = extract_basis(scatter, int(k))
            res = execute(dataset, cfg, factor=factor, scatter=scatter)
        else:
            factor, sc = estimate_factors(dataset, cfg, k=int(k))
            res = execute(dataset, cfg, factor=factor, scatter=sc)
        called = set(res.calls.indices)
        rows.append((int(k), len(called & positives), len(called)))
    return rows


def env_workers(default: int = 1) -> int:
    """Worker count from the RUVGAMMA_WORKERS environment variable."""
    raw = os.environ.get("RUVGAMMA_WORKERS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return default
