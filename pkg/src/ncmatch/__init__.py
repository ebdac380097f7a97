"""Constrained linear models that ignore an estimated spurious subspace.

The package generates synthetic multi-domain data from a latent structural
causal model, forms (possibly corrupted) counterfactual pairs across domains,
estimates the spurious-feature subspace those pairs span, trains linear
models constrained to ignore that subspace, verifies test-domain risk bounds,
and sweeps the whole pipeline over pair count, removed rank, and corruption
level with reproducible seeding and CSV output.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundReport,
    SecondMoment,
    format_verdict_table,
    second_moment,
    term2,
    verify_bound,
)
from .errors import (
    ConfigError,
    DataFormatError,
    InvalidArgumentError,
    NcmatchError,
    NotFoundError,
    NumericFailureError,
)
from .harness import (
    ExperimentConfig,
    RunTask,
    SweepResult,
    build_scm,
    config_from_document,
    derive_seed,
    execute_task,
    load_config,
    run_baselines,
    run_sweep,
    stratified_training_set,
    summarize_rows,
)
from .models import (
    EvalReport,
    LinearModel,
    TrainConfig,
    evaluate,
    gradient,
    loss,
    loss_values,
    read_model_csv,
    train,
    write_model_csv,
)
from .pairs import (
    CfPairSet,
    corrupt_pairs,
    generate_cf_pairs,
    pairs_sidecar_path,
    random_pairing,
    read_pairs_csv,
    write_pairs_csv,
)
from .rng import fold64, keyed_normals, row_keys, substream
from .scm import (
    Dataset,
    DomainSpec,
    LatentScm,
    generate_dataset,
    generate_mixture,
    load_scm,
    read_dataset_csv,
    sample_scm,
    save_scm,
    write_dataset_csv,
)
from .subspace import (
    SubspaceEstimate,
    WedinDiagnostics,
    estimate_subspace,
    read_estimate_csv,
    subspace_distance,
    wedin_check,
    write_estimate_csv,
)

__all__ = [
    "__version__",
    "BoundReport",
    "CfPairSet",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "DomainSpec",
    "EvalReport",
    "ExperimentConfig",
    "InvalidArgumentError",
    "LatentScm",
    "LinearModel",
    "NcmatchError",
    "NotFoundError",
    "NumericFailureError",
    "RunTask",
    "SecondMoment",
    "SubspaceEstimate",
    "SweepResult",
    "TrainConfig",
    "WedinDiagnostics",
    "build_scm",
    "config_from_document",
    "corrupt_pairs",
    "derive_seed",
    "estimate_subspace",
    "evaluate",
    "execute_task",
    "fold64",
    "format_verdict_table",
    "generate_cf_pairs",
    "generate_dataset",
    "generate_mixture",
    "gradient",
    "keyed_normals",
    "load_config",
    "load_scm",
    "loss",
    "loss_values",
    "pairs_sidecar_path",
    "random_pairing",
    "read_dataset_csv",
    "read_estimate_csv",
    "read_model_csv",
    "read_pairs_csv",
    "row_keys",
    "run_baselines",
    "run_sweep",
    "sample_scm",
    "save_scm",
    "second_moment",
    "stratified_training_set",
    "subspace_distance",
    "substream",
    "summarize_rows",
    "term2",
    "train",
    "verify_bound",
    "wedin_check",
    "write_dataset_csv",
    "write_estimate_csv",
    "write_model_csv",
    "write_pairs_csv",
]
