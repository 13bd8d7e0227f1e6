"""Monte Carlo experiment driver: SER / MSE sweeps over SNR and iteration studies."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import bp, model, sensing
from .density import is_power_of_2
from .reconstruct import CsBsdConfig, cs_bsd

log = logging.getLogger(__name__)

KINDS = ("ser", "mse", "iters")
# "auto": the detector studies (ser, iters) run the full iteration budget,
# the mse study stops on the residual tolerance
STOPPING = ("auto", "residual", "fixed")

HEADERS = {
    "ser": "m_over_n,snr_db,ser,stderr,trials,snr_limit_db",
    "mse": "m_over_n,snr_db,mse,stderr,trials,mse_star,mse_star_stderr",
    "iters": "m_over_n,snr_db,iteration,mse,stderr,trials",
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "ser"
    n: int = 1024
    m_over_n: tuple[float, ...] = (0.5,)
    q: float = 0.05
    l: int = 4
    n_d: int = 64
    sigma_x: float = 10.0
    snr_grid_db: tuple[float, ...] = (26.0, 28.0, 30.0, 32.0, 34.0, 36.0, 38.0)
    trials: int = 50
    seed: int = 0
    output: str = "results.csv"
    conv_mode: str = bp.CIRCULAR
    noise_model: str = bp.GRID
    max_iters: int = 10
    epsilon: float | None = None
    stopping: str = "auto"
    workers: int = 0
    max_diverged_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not is_power_of_2(self.n_d):
            raise ValueError("n_d must be a power of two")
        grid = list(self.snr_grid_db)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("snr grid must be non-empty and strictly increasing")
        if not self.m_over_n or any(not 0 < r <= 1 for r in self.m_over_n):
            raise ValueError("m_over_n entries must lie in (0, 1]")
        if self.conv_mode not in bp.CONV_MODES:
            raise ValueError(f"conv_mode must be one of {bp.CONV_MODES}")
        if self.noise_model not in bp.NOISE_MODELS:
            raise ValueError(f"noise_model must be one of {bp.NOISE_MODELS}")
        if self.stopping not in STOPPING:
            raise ValueError(f"stopping must be one of {STOPPING}")
        if self.kind == "iters" and self.stopping == "residual":
            raise ValueError("the iters study needs the full iteration budget")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        model.PriorParams(self.q, self.sigma_x)   # validates q, sigma_x
        for r in self.m_over_n:
            if not 1 <= self.l <= self.m_for(r):
                raise ValueError(f"column weight {self.l} exceeds M={self.m_for(r)}")

    def m_for(self, ratio):
        return max(1, int(round(self.n * ratio)))

    @property
    def stops_on_residual(self):
        if self.stopping == "auto":
            return self.kind == "mse"
        return self.stopping == "residual"


_TUPLE_KEYS = {"m_over_n", "snr_grid_db"}


def _coerce(name, text):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    t = types[name]
    text = text.strip()
    if name in _TUPLE_KEYS:
        return tuple(float(v) for v in text.replace(",", " ").split())
    if name == "epsilon":
        return None if text.lower() in ("", "auto", "none") else float(text)
    if t == "int":
        return int(text)
    if t == "float":
        return float(text)
    return text


def parse_config_text(text):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    known = {f.name for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, val)
    return values


def load_config(path=None, overrides=None):
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        values[key] = _coerce(key, val) if isinstance(val, str) else val
    return ExperimentConfig(**values)


@dataclass
class ExperimentRow:
    m_over_n: float
    snr_db: float
    value: float
    stderr: float
    trials: int
    aux: dict[str, float] = field(default_factory=dict)
    iteration: int | None = None


@dataclass
class ExperimentResult:
    rows: list[ExperimentRow]
    diverged_trials: int
    total_trials: int
    realized_snr_db: list[float] = field(default_factory=list)

    @property
    def diverged_fraction(self):
        return self.diverged_trials / self.total_trials if self.total_trials else 0.0


def trial_seeds(master, cell, trial):
    """Independent (signal, matrix, noise) seeds for one trial."""
    ss = np.random.SeedSequence(master, spawn_key=(cell, trial))
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in ss.spawn(3)]


def run_trial(config, ratio, snr_db, cell, trial):
    seed_sig, seed_mat, seed_noise = trial_seeds(config.seed, cell, trial)
    prior = model.PriorParams(config.q, config.sigma_x)
    m = config.m_for(ratio)
    signal = model.generate_signal(config.n, prior, seed=seed_sig, n_d=config.n_d)
    graph = sensing.generate(config.n, m, config.l, seed=seed_mat)
    out = {"diverged": False}
    if signal.support_size == 0:
        # nothing to calibrate against; the trial carries no information
        out.update(empty=True)
        return out
    sigma_n = model.sigma_for_target_snr(graph, signal, snr_db)
    meas = model.sense(signal, graph, sigma_n, seed=seed_noise)
    prior = prior.with_sigma_n(sigma_n)
    recon_cfg = CsBsdConfig(epsilon=config.epsilon, max_iters=config.max_iters,
                            conv_mode=config.conv_mode, noise_model=config.noise_model,
                            n_d=config.n_d, record_history=config.kind == "iters",
                            stop_on_residual=config.stops_on_residual)
    res = cs_bsd(meas.z, graph, prior, recon_cfg)
    out.update(
        empty=False,
        diverged=res.diverged,
        realized_snr=model.snr_db(graph, signal, sigma_n),
        ser=model.ser(res.states, signal.states),
        mse=model.mse(res.estimate, signal.values),
        iterations=res.iterations_run,
    )
    if config.kind == "ser":
        k = signal.support_size
        if m > k and config.n > k:
            out["snr_limit"] = model.snr_limit(config.n, m, k, model.mar(signal.values))
    if config.kind == "mse":
        supp = sensing.submatrix_on_support(graph, signal.states)
        out["mse_star"] = model.mse_star(supp, prior, signal.values[signal.states == 1])
    if config.kind == "iters":
        out["mse_by_iter"] = [model.mse(x, signal.values) for x in res.history]
    return out


def _run_job(job):
    config, ratio, snr, cell, trial = job
    return (cell, trial), run_trial(config, ratio, snr, cell, trial)


def worker_count(config):
    env = os.environ.get("BSD_THREADS", "0").strip() or "0"
    cap = int(env)
    n = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def _mean_se(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def run_experiment(config):
    jobs = []
    cells = []
    for mi, ratio in enumerate(config.m_over_n):
        for si, snr in enumerate(config.snr_grid_db):
            cell = mi * len(config.snr_grid_db) + si
            cells.append((cell, ratio, snr))
            jobs.extend((config, ratio, snr, cell, t) for t in range(config.trials))
    workers = worker_count(config)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = dict(_run_job(j) for j in jobs)

    rows = []
    diverged = 0
    total = 0
    realized = []
    limits_by_ratio = {}
    for cell, ratio, snr in cells:
        outs = [results[(cell, t)] for t in range(config.trials)]
        outs = [o for o in outs if not o["empty"]]
        total += len(outs)
        diverged += sum(o["diverged"] for o in outs)
        realized.extend(o["realized_snr"] for o in outs)
        if config.kind == "ser":
            limits_by_ratio.setdefault(ratio, []).extend(o["snr_limit"] for o in outs if "snr_limit" in o)
            mean, se = _mean_se([o["ser"] for o in outs])
            rows.append(ExperimentRow(ratio, snr, mean, se, len(outs)))
        elif config.kind == "mse":
            mean, se = _mean_se([o["mse"] for o in outs])
            ms, ms_se = _mean_se([o["mse_star"] for o in outs])
            rows.append(ExperimentRow(ratio, snr, mean, se, len(outs),
                                      aux={"mse_star": ms, "mse_star_stderr": ms_se}))
        else:
            per_iter = np.array([o["mse_by_iter"] for o in outs])
            for it in range(per_iter.shape[1]):
                mean, se = _mean_se(per_iter[:, it])
                rows.append(ExperimentRow(ratio, snr, mean, se, len(outs), iteration=it + 1))
    if config.kind == "ser":
        for row in rows:
            lim = limits_by_ratio.get(row.m_over_n)
            row.aux["snr_limit_db"] = 10.0 * math.log10(np.mean(lim)) if lim else math.nan
    rows.sort(key=lambda r: (r.m_over_n, r.snr_db, r.iteration or 0))
    return ExperimentResult(rows, diverged, total, realized)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def rows_to_csv(kind, rows):
    lines = [HEADERS[kind]]
    for r in rows:
        if kind == "ser":
            vals = (r.m_over_n, r.snr_db, r.value, r.stderr, r.trials, r.aux["snr_limit_db"])
        elif kind == "mse":
            vals = (r.m_over_n, r.snr_db, r.value, r.stderr, r.trials,
                    r.aux["mse_star"], r.aux["mse_star_stderr"])
        else:
            vals = (r.m_over_n, r.snr_db, r.iteration, r.value, r.stderr, r.trials)
        lines.append(",".join(_fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def write_csv(path, kind, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(kind, rows))


def threshold_snr(rows, target, floor=None):
    """SNR where the SER curve crosses ``target``, by log-linear interpolation.

    Zero entries are floored at ``floor`` (default ``target / 2``: half of one
    observed error at the resolution ``target``).  Returns ``nan`` when the
    curve never reaches the target and ``-inf`` when it starts below it.
    """
    floor = target / 2 if floor is None else floor
    pts = sorted((r.snr_db, max(r.value, floor)) for r in rows)
    if pts[0][1] < target:
        return -math.inf
    for (s0, v0), (s1, v1) in zip(pts, pts[1:]):
        if v0 >= target > v1:
            l0, l1, lt = math.log10(v0), math.log10(v1), math.log10(target)
            return s0 + (s1 - s0) * (l0 - lt) / (l0 - l1)
    return math.nan


def run_ser_experiment(config):
    return run_experiment(replace(config, kind="ser"))


def run_mse_experiment(config):
    return run_experiment(replace(config, kind="mse"))


def run_iters_experiment(config):
    return run_experiment(replace(config, kind="iters"))
