"""Monte Carlo orchestration: trial streams, empirical rates, and experiments.

Every trial owns a random stream derived from (master_seed, point, scenario,
antenna-group, trial), so results are bit-identical regardless of worker-thread
count or which curves share a run.  A "scenario" here is one channel draw of
the fixed network; trials redraw the signal and both noises.  Curves with the
same gain policy share received vectors, and every detector consumes raw
statistic arrays so a threshold sweep never resamples.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ed_gains, energy_detector, lmmse, np_detector, np_gains
from .scenario import (
    ChannelRealization,
    GainVector,
    Scenario,
    complex_normal,
    derive_rng,
    sample_channel,
)

MULTI_DETECTORS = ("np", "ed")
SINGLE_DETECTORS = ("np_single", "ed_single")
DETECTORS = MULTI_DETECTORS + SINGLE_DETECTORS
MULTI_POLICIES = ("waterfill", "equal", "qclp", "closed_form_low", "closed_form_high")
SINGLE_POLICIES = ("single_antenna_optimal", "equal")
POLICIES = MULTI_POLICIES + ("single_antenna_optimal",)

CSV_COLUMNS = (
    "experiment", "policy", "detector", "M", "P",
    "pd_emp", "pd_theory", "pfa_emp", "mse_emp", "mse_theory",
    "deflection", "bound_lo", "bound_hi", "stderr", "trials",
)

_TAG_CHANNEL = 0
_TAG_TRIALS = 1
_TAG_ED_THRESHOLD = 2
_CHUNK = 2048


def compatible(detector: str, policy: str) -> bool:
    if detector in MULTI_DETECTORS:
        return policy in MULTI_POLICIES
    return policy in SINGLE_POLICIES


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything needed to reproduce one experiment, sweep and seed included."""

    experiment_id: str
    scenario: Scenario
    sweep: tuple[tuple[float, int], ...]
    trials_per_scenario: int
    n_scenarios: int
    target_pfa: float
    master_seed: int
    detectors: tuple[str, ...]
    gain_policies: tuple[str, ...]

    def __post_init__(self):
        if self.trials_per_scenario < 1 or self.n_scenarios < 1:
            raise ValueError("trials and scenario count must be >= 1")
        if not 0.0 < self.target_pfa < 1.0:
            raise ValueError("target_pfa must lie in (0, 1)")
        if not self.sweep:
            raise ValueError("sweep must contain at least one (P, M) point")
        # plain Python numbers keep CSV/JSON formatting independent of the caller
        object.__setattr__(self, "sweep", tuple((float(p), int(m)) for p, m in self.sweep))
        for p, m in self.sweep:
            if p <= 0 or m < 1:
                raise ValueError("sweep points need positive power and M >= 1")
        for det in self.detectors:
            if det not in DETECTORS:
                raise ValueError(f"unknown detector {det!r}")
        for pol in self.gain_policies:
            if pol not in POLICIES:
                raise ValueError(f"unknown gain policy {pol!r}")
        if not self.curves():
            raise ValueError("no compatible (detector, policy) pairs in config")

    def curves(self) -> tuple[tuple[str, str], ...]:
        return tuple(
            (det, pol)
            for det in self.detectors
            for pol in self.gain_policies
            if compatible(det, pol)
        )


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    policy: str
    detector: str
    m: int
    p: float
    pd_emp: float
    pd_theory: float
    pfa_emp: float
    mse_emp: float
    mse_theory: float
    deflection: float
    bound_lo: float
    bound_hi: float
    stderr: float
    trials: int


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if np.isnan(value) else repr(float(value))
    return str(value)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Tabulated empirical and theoretical figures for one experiment run."""

    config: ExperimentConfig
    rows: tuple[ResultRow, ...]
    errors: tuple[tuple[int, str], ...] = ()

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join((
                r.experiment, r.policy, r.detector, str(r.m), _fmt(r.p),
                _fmt(r.pd_emp), _fmt(r.pd_theory), _fmt(r.pfa_emp),
                _fmt(r.mse_emp), _fmt(r.mse_theory), _fmt(r.deflection),
                _fmt(r.bound_lo), _fmt(r.bound_hi), _fmt(r.stderr), str(r.trials),
            )))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def resolve_gains(policy: str, scenario: Scenario, m: int, p: float) -> GainVector:
    """Materialize a multi-antenna gain policy at one operating point."""
    if policy == "waterfill":
        return np_gains.waterfill(scenario, m, p).gains
    if policy == "equal":
        return GainVector.equal_power(p, scenario.n_sensors)
    if policy == "qclp":
        problem = ed_gains.EdAllocationProblem.from_scenario(scenario, m, p)
        return ed_gains.solve_qclp(problem).gains
    if policy == "closed_form_low":
        return ed_gains.closed_form_low_snr(scenario, p)
    if policy == "closed_form_high":
        return ed_gains.closed_form_high_snr(scenario, p)
    raise ValueError(f"unknown multi-antenna policy {policy!r}")


def _trial_draws(scenario, m, master_seed, path, start, stop):
    n = scenario.n_sensors
    count = stop - start
    theta = np.empty(count, dtype=complex)
    v = np.empty((n, count), dtype=complex)
    noise = np.empty((m, count), dtype=complex)
    v_scale = np.sqrt(scenario.meas_noise_vars)
    for j, t in enumerate(range(start, stop)):
        rng = derive_rng(master_seed, *path, t)
        theta[j] = complex_normal(rng, scenario.signal_var)
        v[:, j] = complex_normal(rng, 1.0, n) * v_scale
        noise[:, j] = complex_normal(rng, scenario.fc_noise_var, m)
    return theta, v, noise


def _energy_per_antenna(y: np.ndarray) -> np.ndarray:
    m = y.shape[0]
    return (
        np.einsum("ij,ij->j", y.real, y.real) + np.einsum("ij,ij->j", y.imag, y.imag)
    ) / m


def _multi_statistics(detector, ctx, signal_var, y0, y1):
    if detector == "np":
        w = ctx.whitened_steering
        return (
            signal_var * np.abs(w.conj() @ y0) ** 2,
            signal_var * np.abs(w.conj() @ y1) ** 2,
        )
    if detector == "ed":
        return _energy_per_antenna(y0), _energy_per_antenna(y1)
    raise ValueError(f"unknown multi-antenna detector {detector!r}")


def simulate_statistics(
    detector: str,
    gains: GainVector,
    channel: ChannelRealization,
    scenario: Scenario,
    trials: int,
    master_seed: int,
    path: tuple[int, ...] = (0,),
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the detector statistic under both hypotheses, one stream per trial.

    Returns (noise-only statistics, signal-present statistics); thresholding is
    left to the caller so one sampled set serves a whole ROC sweep.  The two
    hypotheses share each trial's signal and noise draws.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    single = detector in SINGLE_DETECTORS
    if single and channel.m_antennas != 1:
        raise ValueError("single-antenna detectors need a one-antenna channel")
    t0 = np.empty(trials)
    t1 = np.empty(trials)
    ctx = None
    if detector == "np":
        ctx = np_detector.NpTestContext.build(gains, channel, scenario)
    h_row = channel.h_matrix[0] if single else None
    coherent = complex(np.sum(gains.gains * h_row)) if single else 0.0
    for start in range(0, trials, _CHUNK):
        stop = min(start + _CHUNK, trials)
        theta, v, noise = _trial_draws(
            scenario, channel.m_antennas, master_seed, path, start, stop
        )
        if single:
            y0 = (h_row * gains.gains) @ v + noise[0]
            y1 = y0 + coherent * theta
            t0[start:stop] = np.abs(y0) ** 2
            t1[start:stop] = np.abs(y1) ** 2
        else:
            y0 = (channel.h_matrix * gains.gains) @ v + noise
            y1 = y0 + np.outer(channel.h_matrix @ gains.gains, theta)
            s0, s1 = _multi_statistics(detector, ctx, scenario.signal_var, y0, y1)
            t0[start:stop] = s0
            t1[start:stop] = s1
    return t0, t1


def estimate_pd_pfa(
    detector: str,
    threshold: float,
    gains: GainVector,
    channel: ChannelRealization,
    scenario: Scenario,
    trials: int,
    master_seed: int,
    path: tuple[int, ...] = (0,),
) -> tuple[float, float, float]:
    """Empirical detection and false-alarm rates at a threshold, with the
    binomial standard error of the detection estimate."""
    if trials < 100:
        raise ValueError("need at least 100 trials for a rate estimate")
    t0, t1 = simulate_statistics(detector, gains, channel, scenario, trials, master_seed, path)
    pd_emp = float(np.mean(t1 > threshold))
    pfa_emp = float(np.mean(t0 > threshold))
    stderr = float(np.sqrt(pd_emp * (1.0 - pd_emp) / trials))
    return pd_emp, pfa_emp, stderr


@dataclass(frozen=True, eq=False)
class _CurveSpec:
    detector: str
    policy: str
    gains: GainVector | None  # None: resolved per channel draw (needs CSI)
    ed_threshold: float | None


@dataclass
class _Tally:
    det: int = 0
    fa: int = 0
    err_sq: float = 0.0
    trials: int = 0
    pd_theory: float = 0.0
    mse_theory: float = 0.0
    deflection: float = 0.0
    theory_count: int = 0

    def merge(self, other: "_Tally") -> None:
        self.det += other.det
        self.fa += other.fa
        self.err_sq += other.err_sq
        self.trials += other.trials
        self.pd_theory += other.pd_theory
        self.mse_theory += other.mse_theory
        self.deflection += other.deflection
        self.theory_count += other.theory_count


def _prepare_point(config: ExperimentConfig, point_idx: int, p: float, m: int):
    specs = []
    for curve_idx, (det, pol) in enumerate(config.curves()):
        if det in MULTI_DETECTORS:
            gains = resolve_gains(pol, config.scenario, m, p)
            ed_thr = None
            if det == "ed":
                eta = energy_detector.eta_weights(gains, config.scenario)
                rng = derive_rng(config.master_seed, point_idx, curve_idx, _TAG_ED_THRESHOLD)
                ed_thr = energy_detector.ed_threshold_for_pfa(
                    eta, config.scenario, m, config.target_pfa, rng=rng
                ).gamma_hat
            specs.append(_CurveSpec(det, pol, gains, ed_thr))
        else:
            gains = None
            if pol == "equal":
                gains = GainVector.equal_power(p, config.scenario.n_sensors)
            specs.append(_CurveSpec(det, pol, gains, None))
    return specs


def _run_scenario_multi(config, point_idx, p, m, s_idx, specs, tallies):
    scenario = config.scenario
    sv = scenario.signal_var
    channel = sample_channel(
        scenario, m, derive_rng(config.master_seed, point_idx, s_idx, m, _TAG_CHANNEL)
    )
    prepared = []
    for i, spec in enumerate(specs):
        if spec.detector not in MULTI_DETECTORS:
            continue
        if spec.detector == "np":
            ctx = np_detector.NpTestContext.build(spec.gains, channel, scenario)
            thr = np_detector.threshold_for_pfa(ctx.snr, sv, config.target_pfa)
            tallies[i].pd_theory += np_detector.pd_closed_form(ctx.snr, sv, config.target_pfa)
            tallies[i].mse_theory += lmmse.mse_closed_form(ctx.snr, sv)
        else:
            ctx = None
            thr = spec.ed_threshold
            tallies[i].deflection += energy_detector.deflection_exact(spec.gains, channel, scenario)
        tallies[i].theory_count += 1
        prepared.append((i, spec, ctx, thr))
    if not prepared:
        return
    path = (point_idx, s_idx, m, _TAG_TRIALS)
    trials = config.trials_per_scenario
    for start in range(0, trials, _CHUNK):
        stop = min(start + _CHUNK, trials)
        theta, v, noise = _trial_draws(scenario, m, config.master_seed, path, start, stop)
        by_policy: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for i, spec, ctx, thr in prepared:
            if spec.policy not in by_policy:
                y0 = (channel.h_matrix * spec.gains.gains) @ v + noise
                y1 = y0 + np.outer(channel.h_matrix @ spec.gains.gains, theta)
                by_policy[spec.policy] = (y0, y1)
            y0, y1 = by_policy[spec.policy]
            s0, s1 = _multi_statistics(spec.detector, ctx, sv, y0, y1)
            tallies[i].fa += int(np.count_nonzero(s0 > thr))
            tallies[i].det += int(np.count_nonzero(s1 > thr))
            tallies[i].trials += stop - start
            if spec.detector == "np":
                est = (ctx.whitened_steering.conj() @ y1) / (1.0 / sv + ctx.snr)
                tallies[i].err_sq += float(np.sum(np.abs(theta - est) ** 2))


def _run_scenario_single(config, point_idx, p, m, s_idx, specs, tallies):
    scenario = config.scenario
    sv = scenario.signal_var
    channel = sample_channel(
        scenario, 1, derive_rng(config.master_seed, point_idx, s_idx, 1, _TAG_CHANNEL)
    )
    h = channel.h_matrix[0]
    prepared = []
    for i, spec in enumerate(specs):
        if spec.detector not in SINGLE_DETECTORS:
            continue
        gains = spec.gains
        if gains is None:
            gains = np_gains.single_antenna_optimal_gains(scenario, h, p)
        ctx = np_detector.SingleAntennaContext.build(gains, h, scenario, config.target_pfa)
        tallies[i].pd_theory += np_detector.single_antenna_pd(ctx)
        g_s = ctx.sigma_s_sq / (sv * ctx.sigma_w_sq)
        if spec.detector == "np_single":
            tallies[i].mse_theory += lmmse.mse_closed_form(g_s, sv)
        else:
            tallies[i].deflection += energy_detector.single_antenna_deflection(gains, h, scenario)
        tallies[i].theory_count += 1
        coherent = complex(np.sum(gains.gains * h))
        prepared.append((i, spec, gains, ctx, g_s, coherent))
    if not prepared:
        return
    path = (point_idx, s_idx, 1, _TAG_TRIALS)
    trials = config.trials_per_scenario
    for start in range(0, trials, _CHUNK):
        stop = min(start + _CHUNK, trials)
        theta, v, noise = _trial_draws(scenario, 1, config.master_seed, path, start, stop)
        cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for i, spec, gains, ctx, g_s, coherent in prepared:
            key = id(gains)
            if key not in cache:
                y0 = (h * gains.gains) @ v + noise[0]
                cache[key] = (y0, y0 + coherent * theta)
            y0, y1 = cache[key]
            tallies[i].fa += int(np.count_nonzero(np.abs(y0) ** 2 > ctx.threshold))
            tallies[i].det += int(np.count_nonzero(np.abs(y1) ** 2 > ctx.threshold))
            tallies[i].trials += stop - start
            if spec.detector == "np_single":
                est = (np.conj(coherent) / ctx.sigma_w_sq) * y1 / (1.0 / sv + g_s)
                tallies[i].err_sq += float(np.sum(np.abs(theta - est) ** 2))


def _run_scenario(config, point_idx, p, m, s_idx, specs):
    tallies = [_Tally() for _ in specs]
    _run_scenario_multi(config, point_idx, p, m, s_idx, specs, tallies)
    _run_scenario_single(config, point_idx, p, m, s_idx, specs, tallies)
    return tallies


def _point_rows(config, point_idx, p, m, specs, merged) -> list[ResultRow]:
    scenario = config.scenario
    bound_lo = np_gains.np_pd_bound(scenario, "low_power", config.target_pfa)
    bound_hi = np_gains.np_pd_bound(scenario, "high_power", config.target_pfa)
    rows = []
    nan = float("nan")
    for spec, tally in zip(specs, merged):
        total = tally.trials
        pd_emp = tally.det / total if total else nan
        pfa_emp = tally.fa / total if total else nan
        stderr = float(np.sqrt(pd_emp * (1.0 - pd_emp) / total)) if total else nan
        is_np = spec.detector in ("np", "np_single")
        count = tally.theory_count or 1
        rows.append(ResultRow(
            experiment=config.experiment_id,
            policy=spec.policy,
            detector=spec.detector,
            m=m,
            p=p,
            pd_emp=pd_emp,
            pd_theory=tally.pd_theory / count if spec.detector != "ed" else nan,
            pfa_emp=pfa_emp,
            mse_emp=tally.err_sq / total if (is_np and total) else nan,
            mse_theory=tally.mse_theory / count if is_np else nan,
            deflection=tally.deflection / count if spec.detector in ("ed", "ed_single") else nan,
            bound_lo=bound_lo if is_np else nan,
            bound_hi=bound_hi if is_np else nan,
            stderr=stderr,
            trials=total,
        ))
    return rows


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Execute the configured sweep and tabulate one row per curve and point.

    Scenarios run independently (optionally on a thread pool) and are merged in
    index order, so the result is identical for any thread count.  A failing
    operating point is recorded and its rows emitted as NaN instead of aborting
    the sweep.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    rows: list[ResultRow] = []
    errors: list[tuple[int, str]] = []
    for point_idx, (p, m) in enumerate(config.sweep):
        try:
            specs = _prepare_point(config, point_idx, p, m)
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    per_scenario = list(pool.map(
                        lambda s: _run_scenario(config, point_idx, p, m, s, specs),
                        range(config.n_scenarios),
                    ))
            else:
                per_scenario = [
                    _run_scenario(config, point_idx, p, m, s, specs)
                    for s in range(config.n_scenarios)
                ]
            merged = [_Tally() for _ in specs]
            for tallies in per_scenario:
                for agg, one in zip(merged, tallies):
                    agg.merge(one)
            rows.extend(_point_rows(config, point_idx, p, m, specs, merged))
        except Exception as exc:  # record, continue sweep
            errors.append((point_idx, f"{type(exc).__name__}: {exc}"))
            nan = float("nan")
            for det, pol in config.curves():
                rows.append(ResultRow(
                    config.experiment_id, pol, det, m, p,
                    nan, nan, nan, nan, nan, nan, nan, nan, nan, 0,
                ))
    return ExperimentResult(config, tuple(rows), tuple(errors))


def manifest_dict(config: ExperimentConfig) -> dict:
    """Frozen, replayable description of a run: config echo plus explicit scenario."""
    sc = config.scenario
    return {
        "experiment": config.experiment_id,
        "sweep": [[p, m] for p, m in config.sweep],
        "trials": config.trials_per_scenario,
        "scenarios": config.n_scenarios,
        "target_pfa": config.target_pfa,
        "master_seed": config.master_seed,
        "detectors": list(config.detectors),
        "policies": list(config.gain_policies),
        "scenario": {
            "distances": list(sc.distances),
            "meas_noise_vars": list(sc.meas_noise_vars),
            "signal_var": sc.signal_var,
            "fc_noise_var": sc.fc_noise_var,
            "path_loss_exp": sc.path_loss_exp,
        },
    }


def config_from_manifest(data: dict) -> ExperimentConfig:
    sc = data["scenario"]
    scenario = Scenario(
        np.asarray(sc["distances"], dtype=float),
        np.asarray(sc["meas_noise_vars"], dtype=float),
        float(sc["signal_var"]),
        float(sc["fc_noise_var"]),
        float(sc["path_loss_exp"]),
    )
    return ExperimentConfig(
        experiment_id=str(data["experiment"]),
        scenario=scenario,
        sweep=tuple((float(p), int(m)) for p, m in data["sweep"]),
        trials_per_scenario=int(data["trials"]),
        n_scenarios=int(data["scenarios"]),
        target_pfa=float(data["target_pfa"]),
        master_seed=int(data["master_seed"]),
        detectors=tuple(data["detectors"]),
        gain_policies=tuple(data["policies"]),
    )


def write_manifest(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_manifest(json.load(fh))
