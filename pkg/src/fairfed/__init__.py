"""Fair classification under demographic disparity with federated differential privacy."""

from fairfed._kernels import BACKEND
from fairfed.classifier import (
    CrossFitClassifier,
    FairClassifier,
    Metrics,
    OracleBaseline,
    bayes_oracle,
    cross_fit,
    d_fair,
    empirical_dd,
    evaluate,
    misclassification,
)
from fairfed.core import (
    Dataset,
    FairFedError,
    FederationConfig,
    LabeledRecord,
    PrivacyBudget,
    RngStream,
    SiteDataset,
    default_delta,
    split_site,
    validate_dataset,
)
from fairfed.datagen import CsvSchema, SyntheticSpec, gen_synthetic, load_csv, partition_sites, write_csv
from fairfed.federation import aggregate, effective_weights, select_depth, site_estimate, theoretical_bandwidth
from fairfed.pipeline import FittedPipeline, fit, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CrossFitClassifier",
    "CsvSchema",
    "Dataset",
    "FairClassifier",
    "FairFedError",
    "FederationConfig",
    "FittedPipeline",
    "LabeledRecord",
    "Metrics",
    "OracleBaseline",
    "PrivacyBudget",
    "RngStream",
    "SiteDataset",
    "SyntheticSpec",
    "aggregate",
    "bayes_oracle",
    "cross_fit",
    "d_fair",
    "default_delta",
    "effective_weights",
    "empirical_dd",
    "evaluate",
    "fit",
    "gen_synthetic",
    "load_csv",
    "misclassification",
    "partition_sites",
    "run_pipeline",
    "select_depth",
    "site_estimate",
    "split_site",
    "theoretical_bandwidth",
    "validate_dataset",
    "write_csv",
]
