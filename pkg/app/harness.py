import csv
import json
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from app import settings
from app.channel import comm_rx_samples, generate_scene, synthesize_if
from app.comms import (
    build_downchirp,
    comm_dictionary,
    dechirp,
    demodulate,
    dump_iq,
    lora_alphabet,
    lora_baseline_demod,
)
from app.config import SPEED_OF_LIGHT, WaveformParams, params_hash, uniform_params, validate
from app.errors import ConfigError, LoRadarError, UnknownConfigKey
from app.sampling import draw_random_set, full_set, uniform_set
from app.sensing import (
    angle_estimate,
    baseline_uniform_dft,
    build_pc_matrix,
    range_dictionary,
    range_estimate,
    velocity_estimate,
    PcMatrix,
)
from app.waveform import generate_payload, generate_schedule, round_robin_schedule

logger = logging.getLogger(__name__)

SCHEMES = {"sensing": ("cs", "uniform-dft"), "comms": ("cs", "lora-baseline")}
CSV_HEADER = ["scheme", "task", "snr_db", "metric", "value", "trial_count", "seed", "params_hash"]
DEFAULT_TRIALS = {"sensing": 200, "comms": 2000}
DEFAULT_SNR_GRID = {"sensing": (-10.0, -5.0, 0.0, 5.0, 10.0), "comms": (-16.0, -12.0, -8.0, -4.0, 0.0)}


@dataclass(frozen=True)
class SceneSpec:
    k: int = 6
    range_interval: Tuple[float, float] = (0.0, 70.0)
    vel_interval: Tuple[float, float] = (-50.0, 50.0)
    angle_interval: Tuple[float, float] = (-math.pi / 3, math.pi / 3)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneSpec":
        _reject_unknown(cls, data, "scene")
        return cls(**{key: tuple(value) if isinstance(value, list) else value for key, value in data.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    scheme: str
    params: WaveformParams
    snr_grid_db: Tuple[float, ...] = ()
    trials: Optional[int] = None
    scene: SceneSpec = SceneSpec()
    output_path: Optional[str] = None
    uniform_rate: Optional[float] = None
    pc1: bool = True
    pc2: bool = False
    noise_reference: str = "sample"
    full_alphabet: bool = False
    resample_per_symbol: bool = False
    trace_path: Optional[str] = None
    iq_dump_path: Optional[str] = None

    def __post_init__(self):
        if self.task not in SCHEMES:
            raise ConfigError(f"Unknown task '{self.task}'")
        if self.scheme not in SCHEMES[self.task]:
            raise ConfigError(f"Scheme '{self.scheme}' is not available for task '{self.task}'")
        if not self.snr_grid_db:
            object.__setattr__(self, "snr_grid_db", DEFAULT_SNR_GRID[self.task])
        if self.trials is None:
            object.__setattr__(self, "trials", DEFAULT_TRIALS[self.task])
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if self.noise_reference not in ("sample", "signal"):
            raise ConfigError(f"Unknown noise reference '{self.noise_reference}'")
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        validate(self.params)

    @classmethod
    def from_sections(cls, task: str, params: WaveformParams, scene: Optional[Dict[str, Any]] = None,
                      experiment: Optional[Dict[str, Any]] = None, **overrides: Any) -> "ExperimentConfig":
        experiment = dict(experiment or {})
        _reject_unknown(cls, experiment, "experiment", exclude=("task", "params", "scene"))
        values = {**experiment, **{k: v for k, v in overrides.items() if v is not None}}
        values.setdefault("scheme", "cs")
        return cls(task=task, params=params, scene=SceneSpec.from_dict(scene or {}), **values)

    def baseline_rate(self) -> float:
        if self.uniform_rate is not None:
            return self.uniform_rate
        return self.params.n / validate(self.params).nmax * self.params.fmax

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["params"] = self.params.to_dict()
        data["scene"] = {f.name: getattr(self.scene, f.name) for f in fields(self.scene)}
        data["snr_grid_db"] = [_format_snr(s) for s in self.snr_grid_db]
        return data


def _reject_unknown(cls, data: Dict[str, Any], section: str, exclude: Sequence[str] = ()) -> None:
    known = {f.name for f in fields(cls)} - set(exclude)
    unknown = sorted(set(data) - known)
    if unknown:
        raise UnknownConfigKey(f"Unknown {section} keys: {', '.join(unknown)}")


@dataclass
class MetricsRow:
    snr_db: float
    trial_count: int
    hit_rate: Optional[float] = None
    range_errors: List[float] = field(default_factory=list)
    velocity_errors: List[float] = field(default_factory=list)
    angle_errors: List[float] = field(default_factory=list)
    ser: Optional[float] = None
    effective_bits: Optional[float] = None
    comm_rate: Optional[float] = None


@dataclass
class MetricsRecord:
    scheme: str
    task: str
    run_seed: int
    params_hash: str
    rows: List[MetricsRow] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)


@dataclass
class TrialOutcome:
    snr_index: int
    trial: int
    targets: int
    hits: int = 0
    range_errors: List[float] = field(default_factory=list)
    velocity_errors: List[float] = field(default_factory=list)
    angle_errors: List[float] = field(default_factory=list)
    failed: bool = False
    trace: Dict[str, Any] = field(default_factory=dict)


@dataclass
class FrameOutcome:
    snr_index: int
    frame: int
    symbols: int
    errors: int
    effective_bits: float
    dechirped: Optional[np.ndarray] = None


def trial_rng(seed: int, snr_index: int, trial: int) -> np.random.Generator:
    """Generator whose stream depends only on (seed, SNR index, trial index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(snr_index, trial)))


def _snr_or_none(snr_db: float) -> Optional[float]:
    return None if math.isinf(snr_db) else snr_db


def _format_snr(snr_db: float) -> str:
    return "inf" if math.isinf(snr_db) else repr(float(snr_db))


def greedy_match(true_ranges: Sequence[float], est_ranges: Sequence[float]) -> List[Tuple[int, int]]:
    """Pair truths with estimates by repeatedly taking the closest unused pair in range."""
    pairs = sorted(
        ((abs(e - t), k, j) for k, t in enumerate(true_ranges) for j, e in enumerate(est_ranges)),
    )
    used_true, used_est, matches = set(), set(), []
    for _, k, j in pairs:
        if k in used_true or j in used_est:
            continue
        used_true.add(k)
        used_est.add(j)
        matches.append((k, j))
    return sorted(matches)


def _cs_estimates(tensor, sampling_set, payload, schedule, params: WaveformParams, k: int,
                  pc1: bool) -> List[Tuple[float, float, float]]:
    ranges = range_estimate(tensor, sampling_set, params, k)
    re_dictionary = range_dictionary(params)
    estimates = []
    for n_hat, tau_hat in zip(ranges.n_hat, ranges.tau_hat):
        r_hat = tau_hat * SPEED_OF_LIGHT / 2
        try:
            if pc1:
                pc = build_pc_matrix(tau_hat, payload, sampling_set, params)
            else:
                pc = PcMatrix(entries=np.ones((len(sampling_set), params.p), dtype=complex))
            velocity = velocity_estimate(ranges.x_hat, n_hat, pc, schedule, sampling_set, re_dictionary, params)
            angle = angle_estimate(velocity.z_hat, velocity.p_hat, params)
            estimates.append((r_hat, velocity.v_hat, angle.theta_hat))
        except LoRadarError as e:
            logger.warning(f"Velocity/angle stage failed for row {n_hat}: {e}")
            estimates.append((r_hat, math.nan, math.nan))
    return estimates


def _sensing_trial(cfg: ExperimentConfig, snr_index: int, snr_db: float, trial: int) -> TrialOutcome:
    params = cfg.params
    derived = validate(params)
    k = cfg.scene.k
    rng = trial_rng(params.seed, snr_index, trial)
    scene = generate_scene(k, cfg.scene.range_interval, cfg.scene.vel_interval, cfg.scene.angle_interval,
                           rng, params)
    payload = generate_payload(params.p, derived.h, rng)
    snr = _snr_or_none(snr_db)
    outcome = TrialOutcome(snr_index=snr_index, trial=trial, targets=k)

    try:
        if cfg.scheme == "cs":
            schedule = generate_schedule(params.p, params.lt, rng)
            sampling_set = draw_random_set(params.n, derived.nmax, rng)
            tensor = synthesize_if(scene, schedule, payload, sampling_set, params, snr, rng)
            estimates = _cs_estimates(tensor, sampling_set, payload, schedule, params, k, cfg.pc1)
        else:
            baseline = uniform_params(params, cfg.baseline_rate())
            schedule = round_robin_schedule(params.p, params.lt)
            sampling_set = full_set(validate(baseline).nmax)
            tensor = synthesize_if(scene, schedule, payload, sampling_set, baseline, snr, rng)
            ranges, velocities, angles = baseline_uniform_dft(tensor, baseline, k, payload, schedule,
                                                              sampling_set, cfg.pc1, cfg.pc2)
            estimates = [(tau * SPEED_OF_LIGHT / 2, v.v_hat, a.theta_hat)
                         for tau, v, a in zip(ranges.tau_hat, velocities, angles)]
    except (LoRadarError, np.linalg.LinAlgError) as e:
        logger.warning(f"Trial {trial} at SNR {snr_db} dB failed, counted as misses: {e}")
        outcome.failed = True
        outcome.trace = {"snr_index": snr_index, "trial": trial, "failed": str(e)}
        return outcome

    truths = scene.targets
    matches = greedy_match([t.r for t in truths], [e[0] for e in estimates])
    hit_flags = []
    for kk, j in matches:
        target, (r_hat, v_hat, theta_hat) = truths[kk], estimates[j]
        range_error = abs(r_hat - target.r)
        outcome.range_errors.append(range_error)
        hit = bool(range_error < derived.hit_threshold)
        hit_flags.append(hit)
        if not hit:
            continue
        outcome.hits += 1
        if not math.isnan(v_hat):
            outcome.velocity_errors.append(abs(v_hat - target.v))
        if not math.isnan(theta_hat):
            outcome.angle_errors.append(abs(theta_hat - target.theta))

    if cfg.trace_path:
        outcome.trace = {
            "snr_index": snr_index,
            "trial": trial,
            "scene": scene.to_dict(),
            "payload": payload.to_list(),
            "schedule": schedule.to_dict(),
            "sampling_set": sampling_set.to_dict(),
            "estimates": [{"r": r, "v": v, "theta": th} for r, v, th in estimates],
            "matches": [list(m) for m in matches],
            "hits": hit_flags,
        }
    logger.debug(f"Trial {trial} at SNR {snr_db} dB: {outcome.hits}/{k} hits")
    return outcome


def _comms_frame(cfg: ExperimentConfig, snr_index: int, snr_db: float, frame: int) -> FrameOutcome:
    params = cfg.params
    derived = validate(params)
    count = min(params.p, cfg.trials - frame * params.p)
    rng = trial_rng(params.seed, snr_index, frame)

    if cfg.scheme == "cs":
        alphabet, bits = derived.h, float(params.nsf)
        if cfg.resample_per_symbol:
            sampling = [draw_random_set(params.nbar, derived.nbar_max, rng) for _ in range(count)]
        else:
            sampling = draw_random_set(params.nbar, derived.nbar_max, rng)
    else:
        sampling = uniform_set(params.nbar, derived.nbar_max)
        alphabet, bits = lora_alphabet(params.nbar, params)
        if cfg.full_alphabet:
            alphabet, bits = derived.h, float(params.nsf)
    payload = generate_payload(count, max(alphabet, 2), rng)
    rx = comm_rx_samples(payload, sampling, params, _snr_or_none(snr_db), rng,
                         noise_reference=cfg.noise_reference)

    dictionary = comm_dictionary(params) if cfg.scheme == "cs" else None
    sets = sampling if isinstance(sampling, list) else [sampling] * count
    errors = 0
    dechirped_rows = []
    for p in range(count):
        index_set = sets[p]
        if cfg.scheme == "cs":
            sequence = dechirp(rx[p], build_downchirp(index_set, params), index_set)
            result = demodulate(sequence, params, residual_tol=None, dictionary=dictionary)
            if cfg.iq_dump_path:
                dechirped_rows.append(sequence.values)
        else:
            result = lora_baseline_demod(rx[p], index_set, params, full_alphabet=cfg.full_alphabet)
        errors += int(result.h_hat != payload.h[p])

    dechirped = np.asarray(dechirped_rows) if dechirped_rows else None
    return FrameOutcome(snr_index=snr_index, frame=frame, symbols=count, errors=errors,
                        effective_bits=bits, dechirped=dechirped)


def _run_jobs(worker: Callable, jobs: List[Tuple], workers: int, progress: bool, desc: str) -> List:
    """Run jobs serially or on a process pool; results come back in job order."""
    if workers <= 1:
        return [worker(*job) for job in tqdm(jobs, desc=desc, disable=not progress)]
    columns = list(zip(*jobs))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        chunks = max(1, len(jobs) // (workers * 4))
        return list(tqdm(executor.map(worker, *columns, chunksize=chunks), total=len(jobs),
                         desc=desc, disable=not progress))


def _new_record(cfg: ExperimentConfig) -> MetricsRecord:
    config = cfg.to_dict()
    config["seed"] = cfg.params.seed
    config["params_hash"] = params_hash(cfg.params)
    return MetricsRecord(scheme=cfg.scheme, task=cfg.task, run_seed=cfg.params.seed,
                         params_hash=config["params_hash"], config=config)


def run_sensing_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                           progress: bool = False) -> MetricsRecord:
    """
    Monte-Carlo hit rate and range/velocity/angle error CDFs per SNR.

    Args:
        cfg: Sensing experiment configuration
        workers: Worker processes, LORADAR_WORKERS when omitted
        progress: Show a progress bar

    Returns:
        MetricsRecord with one row per SNR point
    """
    if cfg.task != "sensing":
        raise ConfigError(f"Expected a sensing configuration, got task '{cfg.task}'")
    workers = settings.worker_count() if workers is None else workers
    logger.info(f"Starting sensing experiment: scheme={cfg.scheme}, SNRs={list(cfg.snr_grid_db)}, "
                f"trials={cfg.trials}, workers={workers}")

    jobs = [(i, snr, t) for i, snr in enumerate(cfg.snr_grid_db) for t in range(cfg.trials)]
    outcomes: List[TrialOutcome] = _run_jobs(partial(_sensing_trial, cfg), jobs, workers, progress, "sensing")

    record = _new_record(cfg)
    for i, snr in enumerate(cfg.snr_grid_db):
        point = [o for o in outcomes if o.snr_index == i]
        targets = sum(o.targets for o in point)
        record.rows.append(MetricsRow(
            snr_db=snr,
            trial_count=len(point),
            hit_rate=sum(o.hits for o in point) / targets,
            range_errors=sorted(e for o in point for e in o.range_errors),
            velocity_errors=sorted(e for o in point for e in o.velocity_errors),
            angle_errors=sorted(e for o in point for e in o.angle_errors),
        ))
        failed = sum(o.failed for o in point)
        if failed:
            logger.warning(f"{failed} trials failed at SNR {snr} dB")

    if cfg.trace_path:
        _write_trace(cfg.trace_path, [o.trace for o in outcomes])
    if cfg.output_path:
        emit_results(record, cfg.output_path)
    logger.info("Sensing experiment completed")
    return record


def run_comms_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                         progress: bool = False) -> MetricsRecord:
    """
    Monte-Carlo symbol error rate per SNR.

    Args:
        cfg: Comms experiment configuration; `trials` counts symbols
        workers: Worker processes, LORADAR_WORKERS when omitted
        progress: Show a progress bar

    Returns:
        MetricsRecord with SER, effective bits and Rc per SNR point
    """
    if cfg.task != "comms":
        raise ConfigError(f"Expected a comms configuration, got task '{cfg.task}'")
    workers = settings.worker_count() if workers is None else workers
    derived = validate(cfg.params)
    frames = math.ceil(cfg.trials / cfg.params.p)
    logger.info(f"Starting comms experiment: scheme={cfg.scheme}, SNRs={list(cfg.snr_grid_db)}, "
                f"symbols={cfg.trials}, workers={workers}")

    jobs = [(i, snr, f) for i, snr in enumerate(cfg.snr_grid_db) for f in range(frames)]
    outcomes: List[FrameOutcome] = _run_jobs(partial(_comms_frame, cfg), jobs, workers, progress, "comms")

    record = _new_record(cfg)
    for i, snr in enumerate(cfg.snr_grid_db):
        point = [o for o in outcomes if o.snr_index == i]
        symbols = sum(o.symbols for o in point)
        bits = point[0].effective_bits
        record.rows.append(MetricsRow(
            snr_db=snr,
            trial_count=symbols,
            ser=sum(o.errors for o in point) / symbols,
            effective_bits=bits,
            comm_rate=bits / derived.t0,
        ))

    if cfg.iq_dump_path:
        rows = [o.dechirped for o in outcomes if o.dechirped is not None]
        if rows:
            dump_iq(cfg.iq_dump_path, np.concatenate(rows), cfg.params)
    if cfg.output_path:
        emit_results(record, cfg.output_path)
    logger.info("Comms experiment completed")
    return record


def _metric_rows(row: MetricsRow) -> List[Tuple[str, float]]:
    values: List[Tuple[str, float]] = []
    if row.hit_rate is not None:
        values.append(("hit_rate", row.hit_rate))
    for name, samples in (("range_error", row.range_errors), ("velocity_error", row.velocity_errors),
                          ("angle_error", row.angle_errors)):
        values.extend((name, v) for v in sorted(samples))
    for name in ("ser", "effective_bits", "comm_rate"):
        value = getattr(row, name)
        if value is not None:
            values.append((name, value))
    return values


def sidecar_path(path: str) -> Path:
    return Path(path).with_suffix(".json")


def emit_results(record: MetricsRecord, path: str) -> Path:
    """
    Write the metrics CSV and its JSON sidecar with the full configuration.

    Args:
        record: Metrics to write
        path: CSV path; the sidecar replaces the suffix with .json

    Returns:
        Path of the CSV file
    """
    out = Path(path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in record.rows:
                for metric, value in _metric_rows(row):
                    writer.writerow([record.scheme, record.task, _format_snr(row.snr_db), metric,
                                     repr(float(value)), row.trial_count, record.run_seed, record.params_hash])
        sidecar = sidecar_path(path)
        sidecar.write_text(json.dumps(record.config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write results to {out}: {e}")
        raise OSError(f"Cannot write results to {out}: {e}") from e
    logger.info(f"Results written to {out}")
    return out


def _write_trace(path: str, traces: List[Dict[str, Any]]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            for trace in traces:
                f.write(json.dumps(trace, sort_keys=True) + "\n")
    except OSError as e:
        logger.error(f"Failed to write trace {path}: {e}")
        raise
