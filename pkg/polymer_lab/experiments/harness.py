import math
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import torch
from joblib import Parallel, delayed
from tqdm import tqdm

from ..environment import TemperatureProfile, second_moment_winfty, temperature_profile
from ..errors import ConfigError
from ..oracle import Adjudication, cached_adjudication
from ..utils.io import atomic_torch_save, read_json, write_csv, write_json
from ..utils.logging import get_logger
from ..version import __version__
from ..walk import GOLDEN_PI_D, table_cache, table_cache_dir, zeta_d_limit
from .checks import TestReport, run_checks
from .config import ExperimentConfig, config_fingerprint
from .references import OracleReferences, oracle_references
from .replicate import SAMPLE_COLUMNS, FluctuationSample, ReplicateContext, prepare_context, run_replicate
from .statistics import merge_by_id

STATUS_INCOMPLETE = "incomplete"
STATUS_COMPLETE = "complete"
TOLERANCE_NOTE = (
    "Monte Carlo tolerances are engineering budgets calibrated on the Gaussian null model; "
    "entries of kind 'exact' compare with oracle values. Trend entries whose statistic is exactly zero at "
    "both ends are inconclusive (passed = null) and do not gate. The llt trend compares the sup of "
    "E|delta_k^x|^2 over the whole window, which sites at the window edge set; at k of a few dozen it "
    "grows with k, at the site nearest the origin too, so an llt failure at this scale is expected "
    "and does not indicate a numerical error."
)

_attached_log_dirs = set()


@dataclass
class RunResult:
    run_dir: str
    status: str
    reports: List[TestReport]
    exit_code: int


def cache_dir() -> str:
    return os.environ.get("POLYMERLAB_CACHE") or os.path.join(os.path.expanduser("~"), ".cache", "polymerlab")


def tables_dir() -> str:
    return os.path.join(cache_dir(), "tables")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count: the explicit value, else ``POLYMERLAB_THREADS``, else every core."""
    if threads is None and os.environ.get("POLYMERLAB_THREADS"):
        try:
            threads = int(os.environ["POLYMERLAB_THREADS"])
        except ValueError as e:
            raise ConfigError(f"POLYMERLAB_THREADS must be an integer, got {os.environ['POLYMERLAB_THREADS']!r}") from e
    threads = threads or os.cpu_count() or 1
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return threads


def replicate_path(run_dir: str, r: int) -> str:
    return os.path.join(run_dir, "replicates", f"r{r:06d}.pt")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _attach_log_file(run_dir: str) -> None:
    log_dir = os.path.join(run_dir, "logs")
    if log_dir not in _attached_log_dirs:
        get_logger().log_to_file(log_dir)
        _attached_log_dirs.add(log_dir)


def golden_constants(profile: TemperatureProfile) -> Dict[str, Any]:
    """Walk constants of the run with their provenance; ``stale`` flags a drift from the golden table."""
    golden = GOLDEN_PI_D[profile.d]
    return {
        "pi_d": {"value": profile.pi_d, "error": profile.pi_d_error, "source": "exact return table with tail closure"},
        "pi_d_golden": {"value": golden, "stale": abs(golden - profile.pi_d) > 1e-5},
        "zeta_d": {"value": profile.zeta_d, "source": "closed form 4/(d-2) (d/4 pi)^{d/2}"},
        "zeta_d_limit": zeta_d_limit(profile.d),
        "sigma2": profile.sigma2,
        "beta2": profile.beta2,
    }


def _worker(config: ExperimentConfig, r: int, context: ReplicateContext, run_dir: str, tables: Optional[str]) -> int:
    torch.set_num_threads(1)
    snapshot_dir = os.path.join(run_dir, "raw") if config.snapshots else None
    with table_cache(tables):
        sample = run_replicate(config, r, context, snapshot_dir=snapshot_dir)
    atomic_torch_save(sample.to_state_dict(), replicate_path(run_dir, r))
    return r


def load_samples(run_dir: str, config: ExperimentConfig) -> List[FluctuationSample]:
    shard = {}
    for r in range(config.replicates):
        state = torch.load(replicate_path(run_dir, r), map_location="cpu")
        shard[r] = FluctuationSample.from_state_dict(state)
    return merge_by_id(shard)


def _load_or_compute_references(
    run_dir: str, config: ExperimentConfig, profile: TemperatureProfile, adjudication: Optional[Adjudication]
) -> Optional[OracleReferences]:
    path = os.path.join(run_dir, "references.json")
    if os.path.exists(path):
        data = read_json(path)
        return OracleReferences.from_dict(data) if data else None
    refs = oracle_references(config, profile, adjudication)
    write_json(path, refs.to_dict() if refs is not None else {})
    return refs


def run_experiment(
    config: ExperimentConfig, run_dir: str, threads: Optional[int] = None, quiet: bool = False
) -> RunResult:
    """
    Run (or resume) a whole experiment into ``run_dir`` and evaluate every acceptance check.

    Replicates already on disk are reused, so an interrupted run resumes where it stopped and a
    complete run is only re-evaluated. The manifest stays ``incomplete`` until report.json exists.

    Returns:
        The run status, the reports and the exit code: 0 when every gating statistic passed.
    """
    with table_cache(tables_dir()):
        return _run_experiment(config, run_dir, threads, quiet)


def _run_experiment(config: ExperimentConfig, run_dir: str, threads: Optional[int], quiet: bool) -> RunResult:
    logger = get_logger()
    config.validate()
    profile = temperature_profile(config.create_family(), config.beta, config.d)
    if not profile.in_l2_region and not config.allow_outside_l2:
        raise ConfigError(
            f"beta={config.beta} lies outside the L2 region (beta2={profile.beta2:.6g}); "
            "set run.allow_outside_l2 = true to run anyway"
        )
    os.makedirs(run_dir, exist_ok=True)
    _attach_log_file(run_dir)

    manifest_path = os.path.join(run_dir, "manifest.json")
    manifest = read_json(manifest_path) if os.path.exists(manifest_path) else {}
    if manifest and config_fingerprint(manifest.get("config") or {}) != config.fingerprint():
        raise ConfigError(f"{run_dir} holds a run with a different config")
    manifest.update(
        status=STATUS_INCOMPLETE,
        version=__version__,
        config=config.to_flat(),
        seed=config.seed,
        profile=profile.to_dict(),
        constants=golden_constants(profile),
        started=manifest.get("started", _now()),
    )
    write_json(manifest_path, manifest)

    #################################################################################
    #                                  Replicates                                   #
    #################################################################################
    context = prepare_context(config, profile)
    pending = [r for r in range(config.replicates) if not os.path.exists(replicate_path(run_dir, r))]
    threads = resolve_threads(threads)
    logger.info(f"{len(pending)} of {config.replicates} replicates to run on {threads} workers")
    if pending:
        Parallel(n_jobs=min(threads, len(pending)))(
            delayed(_worker)(config, r, context, run_dir, table_cache_dir())
            for r in tqdm(pending, desc="replicates", disable=True if quiet else None)
        )
    samples = load_samples(run_dir, config)
    write_csv(
        os.path.join(run_dir, "samples.csv"),
        SAMPLE_COLUMNS,
        [row for sample in samples for row in sample.csv_rows()],
    )

    #################################################################################
    #                                   Evaluation                                  #
    #################################################################################
    adjudication = None
    if not config.smoke and profile.in_l2_region and profile.kappa2 > 0 and math.isfinite(profile.lambda2):
        adjudication = cached_adjudication(cache_dir(), config.d, profile.lambda2)
    refs = _load_or_compute_references(run_dir, config, profile, adjudication)
    reports = run_checks(samples, profile, config, refs)
    winfty = second_moment_winfty(profile)._asdict() if profile.in_l2_region else None
    write_json(
        os.path.join(run_dir, "report.json"),
        {
            "status": STATUS_COMPLETE,
            "smoke": config.smoke,
            "replicates": config.replicates,
            "winfty_second_moment": winfty,
            "adjudication": asdict(adjudication) if adjudication is not None else None,
            "tolerance_note": TOLERANCE_NOTE,
            "tests": [report.to_dict() for report in reports],
        },
    )
    manifest.update(status=STATUS_COMPLETE, finished=_now())
    write_json(manifest_path, manifest)

    exit_code = 1 if any(report.status in ("fail", "error") for report in reports) else 0
    logger.info(f"run {run_dir} complete, exit code {exit_code}")
    return RunResult(run_dir=run_dir, status=STATUS_COMPLETE, reports=reports, exit_code=exit_code)
