from .checks import (
    ANCHORS,
    StatisticEntry,
    TestReport,
    box_test,
    bracket_test,
    clt_test,
    homogenization_test,
    lindeberg_test,
    llt_test,
    mixing_test,
    run_checks,
)
from .config import CONFIG_KEYS, ExperimentConfig, config_fingerprint
from .harness import RunResult, load_samples, run_experiment
from .references import OracleReferences, oracle_references, synthetic_references, truncation_factor
from .replicate import (
    SAMPLE_COLUMNS,
    FluctuationSample,
    ReplicateContext,
    prepare_context,
    run_replicate,
    synthetic_samples,
)
from .statistics import Summary, ks_one_sample, ks_two_sample, merge_by_id, summarize

__all__ = [
    "ANCHORS",
    "StatisticEntry",
    "TestReport",
    "box_test",
    "bracket_test",
    "clt_test",
    "homogenization_test",
    "lindeberg_test",
    "llt_test",
    "mixing_test",
    "run_checks",
    "CONFIG_KEYS",
    "ExperimentConfig",
    "config_fingerprint",
    "RunResult",
    "load_samples",
    "run_experiment",
    "OracleReferences",
    "oracle_references",
    "synthetic_references",
    "truncation_factor",
    "SAMPLE_COLUMNS",
    "FluctuationSample",
    "ReplicateContext",
    "prepare_context",
    "run_replicate",
    "synthetic_samples",
    "Summary",
    "ks_one_sample",
    "ks_two_sample",
    "merge_by_id",
    "summarize",
]
