"""Experiment harness: data generation, single runs, Monte Carlo, timing.

Reproducibility: every random quantity is drawn from numpy's PCG64 generator,
seeded from the configured 64-bit seed.  Monte Carlo trials derive their seeds
as SeedSequence(entropy=seed, spawn_key=(trial,)), so trials are independent
and order-insensitive.  Identical configurations reproduce byte-identical
results everywhere except wall-clock timing columns.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .analysis import ExcitationMonitor, TrueModel
from .errors import ConfigError
from .estimators import ESTIMATOR_KINDS, MeasurementTriple, make_estimator
from .linalg import lambda_extreme

DEFAULT_SEED = 42
TIMING_WARMUP = 20  # leading steps of each timing phase discarded
AUTO_CADENCE_LIMIT = 128  # monitor every step up to this n, every 10th above


@dataclass
class ScheduleConfig:
    """Shared regularization-schedule parameters.

    ``kind`` names the default estimator when the config's ``estimators`` list
    is empty.  ``k_cut`` defaults to (j_cut+1)*n + 1 so the fading and rank-1
    fading schedules reach zero on the same step.
    """

    kind: str = "fr"
    mu: float = 0.99
    k_cut: int | None = None
    j_cut: int | None = 1
    r0_scale: float = 1.0


@dataclass
class DataConfig:
    mode: str = "pe"  # "pe" | "non_pe"
    noise_std: float = 0.0
    steps: int = 400
    switch_step: int = 100  # last step with informative rows in non_pe mode


@dataclass
class ExperimentConfig:
    n: int = 100
    p: int = 2
    seed: int = DEFAULT_SEED
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    data: DataConfig = field(default_factory=DataConfig)
    trials: int = 1
    estimators: list[str] = field(default_factory=lambda: ["classical", "fr", "r1fr"])
    monitor_cadence: int = 0  # 0 = auto
    threads: int = 0  # 0 = machine parallelism

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        return _config_from_dict(raw)


def _build_section(cls, raw: dict, where: str):
    known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**raw)


def _config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    sched = raw.pop("schedule", {})
    data = raw.pop("data", {})
    if not isinstance(sched, dict) or not isinstance(data, dict):
        raise ConfigError("schedule and data sections must be objects")
    cfg = _build_section(ExperimentConfig, raw | {}, "config")
    cfg.schedule = _build_section(ScheduleConfig, sched, "schedule")
    cfg.data = _build_section(DataConfig, data, "data")
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.n < 1 or cfg.p < 1:
        raise ConfigError(f"dimensions must be positive, got n={cfg.n}, p={cfg.p}")
    if cfg.data.steps < 1:
        raise ConfigError(f"steps must be positive, got {cfg.data.steps}")
    if cfg.trials < 1:
        raise ConfigError(f"trials must be positive, got {cfg.trials}")
    if not (0.0 < cfg.schedule.mu < 1.0):
        raise ConfigError(f"mu must lie in (0, 1), got {cfg.schedule.mu}")
    if cfg.data.noise_std < 0.0:
        raise ConfigError(f"noise_std must be nonnegative, got {cfg.data.noise_std}")
    if cfg.data.mode not in ("pe", "non_pe"):
        raise ConfigError(f"data mode must be 'pe' or 'non_pe', got {cfg.data.mode!r}")
    if cfg.data.switch_step < 0:
        raise ConfigError(f"switch_step must be nonnegative, got {cfg.data.switch_step}")
    if cfg.schedule.r0_scale <= 0.0:
        raise ConfigError(f"r0_scale must be positive, got {cfg.schedule.r0_scale}")
    for cut, name in ((cfg.schedule.k_cut, "k_cut"), (cfg.schedule.j_cut, "j_cut")):
        if cut is not None and cut < 0:
            raise ConfigError(f"{name} must be nonnegative or null, got {cut}")
    if cfg.monitor_cadence < 0 or cfg.threads < 0:
        raise ConfigError("monitor_cadence and threads must be nonnegative")
    kinds = cfg.estimators or [cfg.schedule.kind]
    for kind in kinds:
        if kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator kind {kind!r}; expected one of {ESTIMATOR_KINDS}")


def estimator_kinds(cfg: ExperimentConfig) -> list[str]:
    return list(cfg.estimators) if cfg.estimators else [cfg.schedule.kind]


def resolved_k_cut(cfg: ExperimentConfig) -> int | None:
    """Fading cutoff step; derived from j_cut so FR and R1FR zero out together."""
    if cfg.schedule.k_cut is not None:
        return cfg.schedule.k_cut
    if cfg.schedule.j_cut is None:
        return None
    return (cfg.schedule.j_cut + 1) * cfg.n + 1


def monitor_cadence(cfg: ExperimentConfig) -> int:
    if cfg.monitor_cadence:
        return cfg.monitor_cadence
    return 1 if cfg.n <= AUTO_CADENCE_LIMIT else 10


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def trial_seed_sequence(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Documented per-trial mixing: SeedSequence(entropy=master, spawn_key=(trial,))."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(trial,))


def gen_data(cfg: ExperimentConfig, rng: np.random.Generator | None = None):
    """Draw the true parameters and the measurement sequence.

    theta and the regressor rows are i.i.d. standard normal; in non_pe mode
    the regressor is zero for every step past switch_step.  Measurements are
    y = phi theta + noise_std * w with standard-normal w, and the weight is
    the identity.  The draw order is fixed (theta, then per step rows and w),
    so the pe and non_pe sequences share theta and their early regressors.
    """
    validate_config(cfg)
    if rng is None:
        rng = make_rng(cfg.seed)
    n, p = cfg.n, cfg.p
    theta = rng.standard_normal(n)
    gamma = np.eye(p)
    gamma.flags.writeable = False
    zeros_phi = np.zeros((p, n))
    zeros_phi.flags.writeable = False
    measurements: list[MeasurementTriple] = []
    for k in range(cfg.data.steps):
        rows = rng.standard_normal((p, n))
        w = rng.standard_normal(p)
        if cfg.data.mode == "non_pe" and k > cfg.data.switch_step:
            phi = zeros_phi
        else:
            phi = rows
        y = phi @ theta + cfg.data.noise_std * w
        measurements.append(MeasurementTriple(phi=phi, y=y, gamma=gamma))
    return TrueModel(theta=theta), measurements


def _build_estimator(cfg: ExperimentConfig, kind: str):
    r0 = cfg.schedule.r0_scale * np.eye(cfg.n)
    if kind == "classical":
        return make_estimator(kind, r0=r0)
    if kind == "r1fr":
        return make_estimator(kind, r0=r0, mu=cfg.schedule.mu, j_cut=cfg.schedule.j_cut)
    # fr and tvr-general share the fading schedule parameters
    return make_estimator(kind, r0=r0, mu=cfg.schedule.mu, k_cut=resolved_k_cut(cfg))


@dataclass
class ErrorTrace:
    """Per-step run record; row k describes the estimate after measurement k.

    error_norm[k] = |theta_{k+1} - theta|.  lambda_min, r_max, and bound are
    evaluated at the monitoring cadence and NaN elsewhere; bound is only
    defined for noise-free runs once the data have attained full rank.
    step_ms is wall-clock and not reproducible.
    """

    kind: str
    k: np.ndarray
    error_norm: np.ndarray
    lambda_min: np.ndarray
    r_max: np.ndarray
    bound: np.ndarray
    step_ms: np.ndarray
    k_rank: int | None

    @property
    def final_error(self) -> float:
        return float(self.error_norm[-1])


def run_single(cfg: ExperimentConfig, kind: str, *, dataset=None, monitor: bool = True) -> ErrorTrace:
    """Drive one estimator over one generated dataset, recording the trace.

    NotPositiveDefinite failures from the estimator carry the failing step
    index.
    """
    validate_config(cfg)
    if kind not in ESTIMATOR_KINDS:
        raise ConfigError(f"unknown estimator kind {kind!r}")
    model, measurements = dataset if dataset is not None else gen_data(cfg)
    est = _build_estimator(cfg, kind)
    cadence = monitor_cadence(cfg)
    mon = ExcitationMonitor(n=cfg.n) if monitor else None
    steps = len(measurements)
    errors = np.empty(steps)
    lam_min = np.full(steps, np.nan)
    r_max = np.full(steps, np.nan)
    bound = np.full(steps, np.nan)
    step_ms = np.empty(steps)
    theta_norm = float(np.linalg.norm(model.theta))
    for k, m in enumerate(measurements):
        t0 = time.perf_counter()
        est.update(m)
        step_ms[k] = (time.perf_counter() - t0) * 1e3
        errors[k] = np.linalg.norm(est.current_theta() - model.theta)
        if mon is not None:
            evaluated = mon.observe(m, evaluate=(k % cadence == 0))
            if evaluated is not None:
                lam_min[k] = evaluated
                reg = est.last_reg
                r_max[k] = lambda_extreme(reg.r_current)[1]
                if cfg.data.noise_std == 0.0 and mon.k_rank is not None:
                    tr_norm = float(np.linalg.norm(reg.theta_reg))
                    bound[k] = r_max[k] / mon.lambda_min_at_krank * (tr_norm + theta_norm)
    return ErrorTrace(
        kind=kind,
        k=np.arange(steps),
        error_norm=errors,
        lambda_min=lam_min,
        r_max=r_max,
        bound=bound,
        step_ms=step_ms,
        k_rank=mon.k_rank if mon is not None else None,
    )


@dataclass
class McSummary:
    """Per-step mean error with a normal-approximation 95% interval."""

    kind: str
    k: np.ndarray
    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray


def _trial_errors(cfg: ExperimentConfig, kinds: list[str], trial: int) -> np.ndarray:
    rng = make_rng(trial_seed_sequence(cfg.seed, trial))
    model, measurements = gen_data(cfg, rng)
    out = np.empty((len(kinds), cfg.data.steps))
    for i, kind in enumerate(kinds):
        est = _build_estimator(cfg, kind)
        for k, m in enumerate(measurements):
            est.update(m)
            out[i, k] = np.linalg.norm(est.current_theta() - model.theta)
    return out


def run_monte_carlo(cfg: ExperimentConfig) -> dict[str, McSummary]:
    """Independent trials per the seed-derivation rule; every estimator kind
    sees the same data within a trial.  Requires trials >= 2 for the interval."""
    validate_config(cfg)
    if cfg.trials < 2:
        raise ConfigError("Monte Carlo intervals require at least 2 trials")
    kinds = estimator_kinds(cfg)
    errors = np.empty((cfg.trials, len(kinds), cfg.data.steps))
    workers = cfg.threads or os.cpu_count() or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for trial, res in enumerate(pool.map(lambda t: _trial_errors(cfg, kinds, t), range(cfg.trials))):
                errors[trial] = res
    else:
        for trial in range(cfg.trials):
            errors[trial] = _trial_errors(cfg, kinds, trial)
    k = np.arange(cfg.data.steps)
    out: dict[str, McSummary] = {}
    for i, kind in enumerate(kinds):
        mean = errors[:, i, :].mean(axis=0)
        se = errors[:, i, :].std(axis=0, ddof=1) / np.sqrt(cfg.trials)
        out[kind] = McSummary(kind=kind, k=k, mean=mean, ci_lo=mean - 1.96 * se, ci_hi=mean + 1.96 * se)
    return out


@dataclass
class TimingRow:
    estimator: str
    phase: str  # "fading" | "post-cutoff"
    mean_ms: float
    ci_lo_ms: float
    ci_hi_ms: float
    samples: int


@dataclass
class TimingSummary:
    rows: list[TimingRow]
    k_cut: int
    warmup: int = TIMING_WARMUP

    def mean_ms(self, estimator: str, phase: str) -> float:
        for row in self.rows:
            if row.estimator == estimator and row.phase == phase:
                return row.mean_ms
        raise KeyError((estimator, phase))


def _phase_stats(times_ms: np.ndarray, estimator: str, phase: str) -> TimingRow:
    times_ms = times_ms[TIMING_WARMUP:]
    mean = float(times_ms.mean())
    se = float(times_ms.std(ddof=1) / np.sqrt(times_ms.size))
    return TimingRow(
        estimator=estimator,
        phase=phase,
        mean_ms=mean,
        ci_lo_ms=mean - 1.96 * se,
        ci_hi_ms=mean + 1.96 * se,
        samples=times_ms.size,
    )


def run_timing(cfg: ExperimentConfig, passes: int = 3) -> TimingSummary:
    """Per-step wall clock split into the fading and post-cutoff phases.

    Runs single-threaded (BLAS pinned) with the monitor off.  Each estimator
    gets one untimed warmup pass, then ``passes`` timed sweeps; per phase the
    sweep with the smallest mean is reported, which filters transient
    machine contention.  The leading TIMING_WARMUP steps of each phase are
    discarded, which also drops the fading estimator's one-time handover
    inversion from the post-cutoff phase.  Results are machine-dependent.
    """
    validate_config(cfg)
    k_cut = resolved_k_cut(cfg)
    if k_cut is None:
        raise ConfigError("timing runs need a finite cutoff")
    if cfg.data.steps < k_cut + 2 * TIMING_WARMUP + 10:
        raise ConfigError(
            f"steps={cfg.data.steps} does not span both phases; need at least {k_cut + 2 * TIMING_WARMUP + 10}"
        )
    kinds = estimator_kinds(cfg)
    model, measurements = gen_data(cfg)
    rows: list[TimingRow] = []
    with threadpool_limits(limits=1):
        for kind in kinds:
            # untimed pass first: settles the allocator, BLAS, and caches
            warm = _build_estimator(cfg, kind)
            for m in measurements:
                warm.update(m)
            # several timed passes; keep the least-contended one per phase
            candidates: list[list[TimingRow]] = []
            for _ in range(passes):
                est = _build_estimator(cfg, kind)
                times = np.empty(cfg.data.steps)
                for k, m in enumerate(measurements):
                    t0 = time.perf_counter()
                    est.update(m)
                    times[k] = (time.perf_counter() - t0) * 1e3
                candidates.append(
                    [
                        _phase_stats(times[:k_cut], kind, "fading"),
                        _phase_stats(times[k_cut:], kind, "post-cutoff"),
                    ]
                )
            for phase_idx in range(2):
                rows.append(min((c[phase_idx] for c in candidates), key=lambda r: r.mean_ms))
    return TimingSummary(rows=rows, k_cut=k_cut)


# ---------------------------------------------------------------------------
# preset configurations for the CLI reproduction commands
# ---------------------------------------------------------------------------

SCALES = ("ci", "desk", "paper")


def _check_scale(scale: str) -> None:
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; expected one of {SCALES}")


def example1_config(scale: str = "paper") -> ExperimentConfig:
    """Noise-free convergence comparison, three estimators, pe and non_pe data."""
    _check_scale(scale)
    if scale == "paper":
        n, steps = 100, 400
    elif scale == "desk":
        n, steps = 20, 120
    else:
        n, steps = 12, 80
    return ExperimentConfig(
        n=n,
        p=2,
        seed=DEFAULT_SEED,
        schedule=ScheduleConfig(kind="fr", mu=0.99, j_cut=1, k_cut=(1 + 1) * n + 1, r0_scale=1.0),
        data=DataConfig(mode="pe", noise_std=0.0, steps=steps, switch_step=100 if scale == "paper" else min(100, steps - 20)),
        trials=1,
        estimators=["classical", "fr", "r1fr"],
    )


def example2_config(scale: str = "paper", r0_scale: float = 1.0) -> ExperimentConfig:
    """Noisy Monte Carlo comparison for one regularization magnitude."""
    _check_scale(scale)
    if scale == "paper":
        n, steps, trials = 100, 400, 1000
    elif scale == "desk":
        n, steps, trials = 20, 120, 200
    else:
        n, steps, trials = 12, 80, 50
    cfg = example1_config(scale)
    return replace(
        cfg,
        trials=trials,
        schedule=replace(cfg.schedule, r0_scale=r0_scale),
        data=replace(cfg.data, noise_std=1.0, steps=steps),
    )


def bench_config(scale: str = "desk") -> ExperimentConfig:
    """Per-step timing comparison; desk scale uses n=400 to widen the cost gap."""
    _check_scale(scale)
    if scale == "paper":
        n = 100
    elif scale == "desk":
        n = 400
    else:
        n = 100
    k_cut = n + 1  # one rank-1 sweep: j_cut=0
    steps = k_cut + 2 * TIMING_WARMUP + 100
    return ExperimentConfig(
        n=n,
        p=2,
        seed=DEFAULT_SEED,
        schedule=ScheduleConfig(kind="fr", mu=0.99, j_cut=0, k_cut=k_cut, r0_scale=1.0),
        data=DataConfig(mode="pe", noise_std=0.0, steps=steps),
        trials=1,
        estimators=["classical", "fr", "r1fr"],
    )
