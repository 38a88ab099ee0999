"""Monte Carlo experiment harness: instance generation, gain sweeps, timing.

Instances follow the simulated protocol: target and anchors uniform on
[-1, 1]^d, a random Wishart-style noise shape rescaled so that any
admissible noise perturbs each true range by at most a fraction alpha,
and measurements drawn by adding noise vectors sampled uniformly inside
the ellipsoid.  A sweep crosses trials with a grid of alpha levels,
computes both outer rectangles per measurement, audits them against the
grid cloud and reports the gain factor.

Randomness is pinned to numpy's PCG64 seeded through SeedSequence spawn
keys, so results are identical no matter how work is scheduled: positions
depend on (seed, trial), noise draws on (seed, trial, alpha index).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import Instance, _readonly
from .oracle import grid_cloud
from .superset import (
    DegenerateDenominatorError,
    DirectionSolveError,
    EmptyCloudError,
    Method,
    RegionResult,
    bounding_rect,
    compute_superset,
    gain_factor,
    rect_area,
    rect_part,
    union_rect_interval,
)

ANCHOR_CLEARANCE = 1e-6
SIGMA_REGULARIZATION = 1e-6

CSV_COLUMNS = (
    "trial",
    "alpha",
    "meas_idx",
    "area_sdp",
    "area_lfr",
    "area_rxf",
    "G",
    "t_sdp_s",
    "t_lfr_s",
    "status_sdp",
    "status_lfr",
    "degenerate",
)


class DegenerateInstanceError(ValueError):
    """The target landed on an anchor; the noise scaling collapses."""


@dataclass(frozen=True)
class ExperimentConfig:
    trials: int = 100
    alpha_grid: tuple = tuple(np.linspace(0.05, 0.95, 30))
    m: int = 3
    d: int = 2
    measurements_per_instance: int = 3
    grid_resolution: int = 400
    seed: int = 0
    directions_T: int = 0

    def __post_init__(self) -> None:
        grid = tuple(float(a) for a in self.alpha_grid)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not grid or any(not 0.0 < a < 1.0 for a in grid):
            raise ValueError("alpha levels must lie strictly inside (0, 1)")
        object.__setattr__(self, "alpha_grid", grid)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "alpha_grid": list(self.alpha_grid),
            "m": self.m,
            "d": self.d,
            "measurements_per_instance": self.measurements_per_instance,
            "grid_resolution": self.grid_resolution,
            "seed": self.seed,
            "directions_T": self.directions_T,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "M" in data and "m" not in data:
            data["m"] = data.pop("M")
        return cls(
            trials=int(data.get("trials", 100)),
            alpha_grid=tuple(data.get("alpha_grid", np.linspace(0.05, 0.95, 30))),
            m=int(data.get("m", 3)),
            d=int(data.get("d", 2)),
            measurements_per_instance=int(data.get("measurements_per_instance", 3)),
            grid_resolution=int(data.get("grid_resolution", 400)),
            seed=int(data.get("seed", 0)),
            directions_T=int(data.get("directions_T", 0)),
        )


@dataclass(frozen=True)
class TrialDraw:
    """Ground truth and measurements of one generated localization trial."""

    alpha: float
    x_star: np.ndarray
    anchors: np.ndarray
    sigma: np.ndarray
    u_samples: np.ndarray  # (L, M)
    y_samples: np.ndarray  # (L, M)

    def instance(self, meas_idx: int = 0) -> Instance:
        return Instance(
            dim=self.anchors.shape[1],
            anchors=self.anchors,
            y=self.y_samples[meas_idx],
            sigma=self.sigma,
        )

    @property
    def num_measurements(self) -> int:
        return self.y_samples.shape[0]


def sample_positions(m: int, d: int, rng: np.random.Generator):
    """Target and anchor positions uniform on [-1, 1]^d."""
    x_star = rng.uniform(-1.0, 1.0, size=d)
    anchors = rng.uniform(-1.0, 1.0, size=(m, d))
    return x_star, anchors


def uniform_in_ellipsoid(sigma_sqrt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from {sigma_sqrt b : |b| <= 1} (volume-uniform)."""
    m = sigma_sqrt.shape[0]
    g = rng.standard_normal(m)
    g /= np.linalg.norm(g)
    radius = rng.random() ** (1.0 / m)
    return sigma_sqrt @ (radius * g)


def gen_instance(
    alpha: float,
    m: int = 3,
    d: int = 2,
    rng: np.random.Generator | None = None,
    positions=None,
    num_measurements: int = 3,
) -> TrialDraw:
    """Draw one localization trial at noise level alpha.

    The noise shape starts as A A' + eps I with standard normal A and is
    rescaled by alpha^2 min_i theta_i^2 / shape_ii so that every
    admissible noise vector changes each true range by at most a fraction
    alpha.  `positions` may carry a pre-drawn (x_star, anchors) pair so a
    sweep can reuse positions across noise levels.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    if positions is None:
        x_star, anchors = sample_positions(m, d, rng)
    else:
        x_star, anchors = (np.asarray(p, dtype=float) for p in positions)
    theta_true = np.linalg.norm(x_star - anchors, axis=1)
    if theta_true.min() < ANCHOR_CLEARANCE:
        raise DegenerateInstanceError("target within clearance of an anchor")
    a_mat = rng.standard_normal((m, m))
    shape = a_mat @ a_mat.T + SIGMA_REGULARIZATION * np.eye(m)
    lam = alpha**2 * float(np.min(theta_true**2 / np.diag(shape)))
    sigma = lam * shape
    w, v = np.linalg.eigh(sigma)
    sigma_sqrt = (v * np.sqrt(w)) @ v.T
    us = np.array([uniform_in_ellipsoid(sigma_sqrt, rng) for _ in range(num_measurements)])
    ys = theta_true[None, :] + us
    return TrialDraw(
        alpha=float(alpha),
        x_star=_readonly(x_star),
        anchors=_readonly(anchors),
        sigma=_readonly(sigma),
        u_samples=_readonly(us),
        y_samples=_readonly(ys),
    )


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    alpha: float
    meas_idx: int
    area_sdp: float | None
    area_lfr: float | None
    area_rxf: float | None
    G: float | None
    t_sdp_s: float
    t_lfr_s: float
    status_sdp: str
    status_lfr: str
    degenerate: bool


def _region_status(region: RegionResult) -> str:
    for status in region.statuses:
        if status.value != "optimal":
            return status.value
    return "optimal"


def _sound_against(cloud, region: RegionResult, slack: float) -> bool:
    """Every cloud point must satisfy every region bound up to `slack`."""
    if cloud.empty:
        return True
    return bool(np.all(region.polyhedron.contains(cloud.points, slack=slack)))


def run_measurement(
    instance: Instance,
    trial: int,
    meas_idx: int,
    alpha: float,
    grid_resolution: int = 400,
    directions_T: int = 0,
) -> TrialRecord:
    """Full pipeline for one measurement: two regions, oracle cloud, gain."""
    try:
        t0 = time.perf_counter()
        lfr_region = compute_superset(instance, Method.LFR, T=directions_T)
        t_lfr = time.perf_counter() - t0
        t0 = time.perf_counter()
        sdp_region = compute_superset(instance, Method.BENCHMARK, T=directions_T)
        t_sdp = time.perf_counter() - t0
    except DirectionSolveError as exc:
        return TrialRecord(
            trial=trial, alpha=alpha, meas_idx=meas_idx,
            area_sdp=None, area_lfr=None, area_rxf=None, G=None,
            t_sdp_s=0.0, t_lfr_s=0.0,
            status_sdp=f"error:{exc}", status_lfr=f"error:{exc}", degenerate=True,
        )

    status_lfr = _region_status(lfr_region)
    status_sdp = _region_status(sdp_region)
    lfr_rect = rect_part(lfr_region)
    sdp_rect = rect_part(sdp_region)

    if lfr_region.empty or sdp_region.empty:
        return TrialRecord(
            trial=trial, alpha=alpha, meas_idx=meas_idx,
            area_sdp=0.0 if sdp_region.empty else rect_area(sdp_rect),
            area_lfr=0.0 if lfr_region.empty else rect_area(lfr_rect),
            area_rxf=None, G=None, t_sdp_s=t_sdp, t_lfr_s=t_lfr,
            status_sdp=status_sdp, status_lfr=status_lfr, degenerate=True,
        )

    lower, upper = union_rect_interval(sdp_rect, lfr_rect)
    cloud = grid_cloud(instance, lower, upper, grid_resolution)
    area_lfr = rect_area(lfr_rect)
    area_sdp = rect_area(sdp_rect)

    # Regression gate: the cloud is a subset of the true set, so a point
    # escaping either region means an unsound bound, never a tolerance issue.
    budget = cloud.grid_spec.cell_diagonal() + 1e-4
    sound_lfr = _sound_against(cloud, lfr_region, budget)
    sound_sdp = _sound_against(cloud, sdp_region, budget)
    if not (sound_lfr and sound_sdp):
        return TrialRecord(
            trial=trial, alpha=alpha, meas_idx=meas_idx,
            area_sdp=area_sdp, area_lfr=area_lfr, area_rxf=None, G=None,
            t_sdp_s=t_sdp, t_lfr_s=t_lfr,
            status_sdp=status_sdp if sound_sdp else "soundness_violation",
            status_lfr=status_lfr if sound_lfr else "soundness_violation",
            degenerate=True,
        )
    try:
        g_val = gain_factor(sdp_rect, lfr_rect, cloud)
        area_rxf = rect_area(bounding_rect(cloud))
        degenerate = False
    except (EmptyCloudError, DegenerateDenominatorError):
        g_val = None
        area_rxf = 0.0 if cloud.empty else rect_area(bounding_rect(cloud))
        degenerate = True
    return TrialRecord(
        trial=trial, alpha=alpha, meas_idx=meas_idx,
        area_sdp=area_sdp, area_lfr=area_lfr, area_rxf=area_rxf, G=g_val,
        t_sdp_s=t_sdp, t_lfr_s=t_lfr,
        status_sdp=status_sdp, status_lfr=status_lfr, degenerate=degenerate,
    )


def _cell_positions(config: ExperimentConfig, trial: int):
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(0, trial)))
    )
    return sample_positions(config.m, config.d, rng)


def run_cell(config: ExperimentConfig, trial: int, alpha_idx: int) -> list:
    """All measurement records of one (trial, alpha) sweep cell."""
    alpha = config.alpha_grid[alpha_idx]
    positions = _cell_positions(config, trial)
    rng = np.random.Generator(
        np.random.PCG64(
            np.random.SeedSequence(config.seed, spawn_key=(1, trial, alpha_idx))
        )
    )
    try:
        draw = gen_instance(
            alpha,
            m=config.m,
            d=config.d,
            rng=rng,
            positions=positions,
            num_measurements=config.measurements_per_instance,
        )
    except DegenerateInstanceError as exc:
        return [
            TrialRecord(
                trial=trial, alpha=alpha, meas_idx=l,
                area_sdp=None, area_lfr=None, area_rxf=None, G=None,
                t_sdp_s=0.0, t_lfr_s=0.0,
                status_sdp=f"error:{exc}", status_lfr=f"error:{exc}", degenerate=True,
            )
            for l in range(config.measurements_per_instance)
        ]
    records = []
    for l in range(draw.num_measurements):
        records.append(
            run_measurement(
                draw.instance(l),
                trial=trial,
                meas_idx=l,
                alpha=alpha,
                grid_resolution=config.grid_resolution,
                directions_T=config.directions_T,
            )
        )
    return records


def _run_cell_star(args):
    return run_cell(*args)


@dataclass
class AlphaSummary:
    alpha: float
    count: int
    mean_g: float | None
    p5_g: float | None
    p95_g: float | None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    summaries: list = field(default_factory=list)


def summarize(config: ExperimentConfig, records: list) -> list:
    """Per-alpha mean and 5/95 percentiles of the gain factor.

    All (trial, measurement) pairs at one alpha are pooled; degenerate
    records are excluded.
    """
    out = []
    for alpha in config.alpha_grid:
        vals = np.array(
            [r.G for r in records if r.G is not None and r.alpha == alpha]
        )
        if vals.size:
            out.append(
                AlphaSummary(
                    alpha=alpha,
                    count=int(vals.size),
                    mean_g=float(vals.mean()),
                    p5_g=float(np.percentile(vals, 5)),
                    p95_g=float(np.percentile(vals, 95)),
                )
            )
        else:
            out.append(AlphaSummary(alpha=alpha, count=0, mean_g=None, p5_g=None, p95_g=None))
    return out


def run_experiment(
    config: ExperimentConfig,
    workers: int | None = None,
    progress=None,
) -> ExperimentResult:
    """Run the full sweep; record order is (trial, alpha index, measurement)
    regardless of scheduling."""
    cells = [
        (config, trial, alpha_idx)
        for trial in range(config.trials)
        for alpha_idx in range(len(config.alpha_grid))
    ]
    results: dict[tuple, list] = {}
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (cfg, trial, alpha_idx), recs in zip(
                cells, pool.map(_run_cell_star, cells, chunksize=4)
            ):
                results[(trial, alpha_idx)] = recs
                if progress is not None:
                    progress(trial, alpha_idx, recs)
    else:
        for cfg, trial, alpha_idx in cells:
            results[(trial, alpha_idx)] = run_cell(cfg, trial, alpha_idx)
            if progress is not None:
                progress(trial, alpha_idx, results[(trial, alpha_idx)])
    records = []
    for trial in range(config.trials):
        for alpha_idx in range(len(config.alpha_grid)):
            records.extend(results[(trial, alpha_idx)])
    return ExperimentResult(
        config=config, records=records, summaries=summarize(config, records)
    )


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: list) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join(_csv_cell(getattr(r, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def summaries_to_csv(summaries: list) -> str:
    lines = ["alpha,count,mean_g,p5_g,p95_g"]
    for s in summaries:
        lines.append(
            ",".join(_csv_cell(v) for v in (s.alpha, s.count, s.mean_g, s.p5_g, s.p95_g))
        )
    return "\n".join(lines) + "\n"


@dataclass
class TimingRow:
    m: int
    trials: int
    mean_t_lfr_s: float | None
    mean_t_sdp_s: float | None
    failures: int


def timing_sweep(
    m_range,
    trials: int,
    alpha: float = 0.5,
    d: int = 2,
    seed: int = 0,
) -> list:
    """Mean wall time of each relaxation's rectangle as anchors grow."""
    m_range = [int(m) for m in m_range]
    if any(not 1 <= m <= 10 for m in m_range):
        raise ValueError("anchor counts must lie in 1..10")
    rows = []
    for m in m_range:
        t_lfr, t_sdp, failures = [], [], 0
        for trial in range(trials):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2, m, trial)))
            )
            try:
                draw = gen_instance(alpha, m=m, d=d, rng=rng, num_measurements=1)
                instance = draw.instance(0)
                t0 = time.perf_counter()
                compute_superset(instance, Method.LFR)
                t_lfr.append(time.perf_counter() - t0)
                t0 = time.perf_counter()
                compute_superset(instance, Method.BENCHMARK)
                t_sdp.append(time.perf_counter() - t0)
            except (DegenerateInstanceError, DirectionSolveError):
                failures += 1
        rows.append(
            TimingRow(
                m=m,
                trials=trials,
                mean_t_lfr_s=float(np.mean(t_lfr)) if t_lfr else None,
                mean_t_sdp_s=float(np.mean(t_sdp)) if t_sdp else None,
                failures=failures,
            )
        )
    return rows


def timing_to_csv(rows: list) -> str:
    lines = ["m,trials,mean_t_lfr_s,mean_t_sdp_s,failures"]
    for r in rows:
        lines.append(
            ",".join(
                _csv_cell(v)
                for v in (r.m, r.trials, r.mean_t_lfr_s, r.mean_t_sdp_s, r.failures)
            )
        )
    return "\n".join(lines) + "\n"
