"""Robust removal of unwanted variation and robust differential-expression
testing via minimum density-power (gamma) divergence estimation.

The package implements the two-stage procedure: a robust location-scatter fit
on control genes yields the unwanted-variation basis, then every gene is
tested with a robust weighted regression whose variance comes from a sandwich
estimator. Classical SVD-based baselines, a simulation generator, evaluation
metrics, and a batch CLI round out the toolkit.
"""

from ._backend import BACKEND as KERNEL_BACKEND
from .classic import RotationPair, build_rotation, ruv2, ruv4
from .metrics import (
    RleSummary,
    auc_pvalues,
    max_principal_angle,
    principal_angles,
    rle_summary,
    tp_fp,
)
from .model import (
    ExpressionMatrix,
    FactorEstimate,
    GammaConfig,
    StudyDesign,
    center_columns,
    center_vector,
)
from .pipeline import (
    Dataset,
    PipelineConfig,
    PipelineResult,
    ReplicateStudy,
    execute,
    load_dataset,
    run_k_scan,
    run_pipeline,
    run_replicates,
)
from .regression import (
    DeCallSet,
    GeneTest,
    RegressionDesign,
    call_de_genes,
    fit_gamma_lse,
    fit_gamma_lse_genes,
    fit_lse,
    make_design,
    sandwich_covariance,
)
from .scatter import (
    LocationScatter,
    eigenvalue_ratios,
    extract_basis,
    fit_location_scatter,
)
from .simulate import GroundTruth, ScenarioSpec, generate, inject_outliers

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "RotationPair",
    "build_rotation",
    "ruv2",
    "ruv4",
    "RleSummary",
    "auc_pvalues",
    "max_principal_angle",
    "principal_angles",
    "rle_summary",
    "tp_fp",
    "ExpressionMatrix",
    "FactorEstimate",
    "GammaConfig",
    "StudyDesign",
    "center_columns",
    "center_vector",
    "Dataset",
    "PipelineConfig",
    "PipelineResult",
    "ReplicateStudy",
    "execute",
    "load_dataset",
    "run_k_scan",
    "run_pipeline",
    "run_replicates",
    "DeCallSet",
    "GeneTest",
    "RegressionDesign",
    "call_de_genes",
    "fit_gamma_lse",
    "fit_gamma_lse_genes",
    "fit_lse",
    "make_design",
    "sandwich_covariance",
    "LocationScatter",
    "eigenvalue_ratios",
    "extract_basis",
    "fit_location_scatter",
    "GroundTruth",
    "ScenarioSpec",
    "generate",
    "inject_outliers",
    "__version__",
]
