"""
Experiment driver
=================

A run is one ``(RunConfig, seed)`` pair: build the problem from the seed,
draw the initial point, then loop ``sample gradient -> schedule -> step``
for ``steps`` iterations, logging a ``TraceRecord`` every ``log_every``
steps (and always at the first and last step). ``run_experiment`` repeats
this over all seeds and reduces the traces to per-step quantiles.

Seed streams are split with ``Rng.spawn`` so the problem rotations, the
initial point and the row samples are independent of each other, and the
homogeneous and heterogeneous trace quadratics built from one seed share
their block rotations and initial coefficients.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from deva import __version__
from deva.diagnostics import h_alignment_trace, nuclear_norm
from deva.errors import DevaError, InvalidConfig, IoError, NumericalBreakdown
from deva.linalg import Rng
from deva.optimizers import KINDS, MATRIX_KINDS, Optimizer, default_hyperparams, schedule_lr
from deva.problems import TRACE_SPECTRUM, build_trace_quadratic, full_gradient, kaczmarz_gradient, loss, \
    quadratic_vector_problem, sample_rows

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CSV_HEADER = ("step", "median_loss", "q25_loss", "q75_loss", "median_hnorm", "q25_hnorm", "q75_hnorm")
PROBLEM_KINDS = ("trace_quadratic_hom", "trace_quadratic_het", "vector_quadratic")
HYPER_KEYS = ("lr", "beta1", "beta2", "beta3", "eps", "weight_decay", "freq", "nesterov",
              "bias_correction", "ns_iters", "msign")

_PROBLEM_STREAM, _INIT_STREAM, _SAMPLE_STREAM = 1, 2, 3


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    dim: int = 9
    spectrum: tuple | None = None
    gradient: str = "stochastic"

    def label(self):
        return self.kind

    @property
    def family(self):
        """Problem identity up to the hom/het block arrangement."""
        return (self.kind.rsplit("_", 1)[0] if self.kind.startswith("trace") else self.kind, self.dim, self.spectrum)


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "constant"
    warmup_frac: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    optimizer: str
    hyper: dict
    steps: int
    seeds: tuple
    batch_size: int = 1
    schedule: ScheduleSpec = ScheduleSpec()
    log_every: int = 1
    diagnostics: bool = False

    def hp(self):
        return default_hyperparams(self.optimizer, **self.hyper)

    def with_lr(self, lr):
        return RunConfig(**{**self.__dict__, "hyper": {**self.hyper, "lr": float(lr)}})

    def to_dict(self):
        return {
            "problem": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.problem).items()},
            "optimizer": {"kind": self.optimizer, **asdict(self.hp())},
            "steps": self.steps,
            "seeds": list(self.seeds),
            "batch_size": self.batch_size,
            "schedule": asdict(self.schedule),
            "log_every": self.log_every,
            "diagnostics": self.diagnostics,
        }

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _need(d, key, where):
    if key not in d:
        raise InvalidConfig(f"missing key {where}.{key}" if where else f"missing key {key}")
    return d[key]


def _as_bool(v, name):
    if isinstance(v, bool):
        return v
    if v in ("on", "off"):
        return v == "on"
    raise InvalidConfig(f"{name} must be a boolean or 'on'/'off', got {v!r}")


def _parse_seeds(raw):
    if isinstance(raw, dict):
        start, count = int(_need(raw, "start", "seeds")), int(_need(raw, "count", "seeds"))
        seeds = tuple(range(start, start + count))
    elif isinstance(raw, (list, tuple)):
        seeds = tuple(int(s) for s in raw)
    else:
        raise InvalidConfig("seeds must be a list or {start, count}")
    if not seeds:
        raise InvalidConfig("seed list is empty")
    if any(s < 0 or s >= 1 << 64 for s in seeds):
        raise InvalidConfig("seeds must be unsigned 64-bit integers")
    return seeds


def parse_config(raw):
    """Validate a config mapping (as loaded from JSON) into a ``RunConfig``."""
    if not isinstance(raw, dict):
        raise InvalidConfig("config must be a JSON object")
    try:
        prob = _need(raw, "problem", "")
        kind = _need(prob, "kind", "problem")
        if kind not in PROBLEM_KINDS:
            raise InvalidConfig(f"problem.kind must be one of {PROBLEM_KINDS}, got {kind!r}")
        spectrum = prob.get("spectrum")
        dim = int(prob.get("dim", len(spectrum) if spectrum else 9))
        if spectrum is not None:
            spectrum = tuple(float(s) for s in spectrum)
            if len(spectrum) != dim:
                raise InvalidConfig("problem.spectrum length must equal problem.dim")
        elif kind.startswith("trace") and dim != len(TRACE_SPECTRUM):
            raise InvalidConfig(f"trace problems of dim {dim} need an explicit spectrum")
        gradient = prob.get("gradient", "stochastic")
        if gradient not in ("stochastic", "full"):
            raise InvalidConfig("problem.gradient must be 'stochastic' or 'full'")
        problem = ProblemSpec(kind=kind, dim=dim, spectrum=spectrum, gradient=gradient)

        opt = _need(raw, "optimizer", "")
        okind = _need(opt, "kind", "optimizer")
        if okind not in KINDS:
            raise InvalidConfig(f"optimizer.kind must be one of {KINDS}, got {okind!r}")
        unknown = set(opt) - set(HYPER_KEYS) - {"kind"}
        if unknown:
            raise InvalidConfig(f"unknown optimizer keys {sorted(unknown)}")
        hyper = {k: opt[k] for k in HYPER_KEYS if k in opt}
        if kind == "vector_quadratic" and okind in MATRIX_KINDS:
            raise InvalidConfig(f"{okind} needs a matrix parameter; vector_quadratic has a vector one")

        steps = int(_need(raw, "steps", ""))
        if steps < 1:
            raise InvalidConfig("steps must be >= 1")
        seeds = _parse_seeds(_need(raw, "seeds", ""))
        batch_size = int(raw.get("batch_size", 1))
        if batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        sched = raw.get("schedule", {"kind": "constant"})
        skind = sched.get("kind", "constant")
        if skind not in ("constant", "warmup_linear"):
            raise InvalidConfig(f"schedule.kind must be 'constant' or 'warmup_linear', got {skind!r}")
        wf = float(sched.get("warmup_frac", 0.5))
        if not 0.0 <= wf <= 1.0:
            raise InvalidConfig("schedule.warmup_frac must lie in [0, 1]")
        log_every = int(raw.get("log_every", 1))
        if log_every < 1:
            raise InvalidConfig("log_every must be >= 1")
        cfg = RunConfig(problem=problem, optimizer=okind, hyper=hyper, steps=steps, seeds=seeds,
                        batch_size=batch_size, schedule=ScheduleSpec(skind, wf), log_every=log_every,
                        diagnostics=_as_bool(raw.get("diagnostics", False), "diagnostics"))
        cfg.hp()
    except InvalidConfig:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise InvalidConfig(f"malformed config: {exc}") from exc
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_config(raw)


# -- single run -----------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    seed: int
    step: int
    loss: float
    lr: float
    h_weighted: float | None = None
    grad_nuclear: float | None = None


def build_problem(spec, rng):
    if spec.kind == "vector_quadratic":
        spectrum = spec.spectrum or (1.0,) * spec.dim
        return quadratic_vector_problem(spectrum)
    spectrum = spec.spectrum or TRACE_SPECTRUM
    return build_trace_quadratic(spec.kind.rsplit("_", 1)[1], rng, spectrum)


def _logged(t, cfg):
    return t == 1 or t == cfg.steps or t % cfg.log_every == 0


def run_single(cfg, seed):
    """One optimization run; returns the logged ``TraceRecord`` list."""
    root = Rng(seed)
    problem = build_problem(cfg.problem, root.spawn(_PROBLEM_STREAM))
    x = problem.initial_point(root.spawn(_INIT_STREAM))
    sampler = root.spawn(_SAMPLE_STREAM)
    hp = cfg.hp()
    opt = Optimizer(kind=cfg.optimizer, hp=hp, shape=problem.param_shape)
    warm = cfg.schedule.kind == "warmup_linear"
    weight_kind = "matrix" if opt.is_matrix else "vector"
    full = cfg.problem.gradient == "full"
    records = []
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, cfg.steps + 1):
            if full:
                g = full_gradient(problem, x).grad
            else:
                g = kaczmarz_gradient(problem, x, sample_rows(sampler, problem, cfg.batch_size)).grad
            if not np.all(np.isfinite(g)):
                raise NumericalBreakdown(f"seed {seed}: gradient became non-finite at step {t}", step=t)
            lr = schedule_lr(t, cfg.steps, cfg.schedule.warmup_frac, hp.lr) if warm else hp.lr
            try:
                x = opt.step(x, g, lr)
            except NumericalBreakdown as exc:
                raise NumericalBreakdown(f"seed {seed}: {exc}", step=t) from exc
            if not np.all(np.isfinite(x)):
                raise NumericalBreakdown(f"seed {seed}: iterate became non-finite at step {t}", step=t)
            if not _logged(t, cfg):
                continue
            value = loss(problem, x)
            if not math.isfinite(value):
                raise NumericalBreakdown(f"seed {seed}: loss became non-finite at step {t}", step=t)
            h_weighted = grad_nuclear = None
            if cfg.diagnostics:
                h_weighted = h_alignment_trace(problem.H, opt.weights(), weight_kind, t).h_weighted
                if x.ndim == 2:
                    grad_nuclear = nuclear_norm(full_gradient(problem, x).grad)
            records.append(TraceRecord(seed, t, value, float(lr), h_weighted, grad_nuclear))
    return records


# -- aggregation ----------------------------------------------------------------


@dataclass
class Summary:
    config: RunConfig
    steps: np.ndarray
    loss_q: np.ndarray  # (3, n_steps): q25, median, q75
    hnorm_q: np.ndarray | None
    final_losses: dict  # seed -> final loss
    failed: dict = field(default_factory=dict)  # seed -> breakdown step
    wall_clock_per_step: float = 0.0

    @property
    def label(self):
        return f"{self.config.optimizer}_{self.config.problem.label()}"

    @property
    def median_final(self):
        vals = list(self.final_losses.values())
        return float(np.median(vals)) if vals else math.inf

    def final_quantiles(self):
        vals = list(self.final_losses.values())
        if not vals:
            return (math.nan,) * 3
        return tuple(float(q) for q in np.quantile(vals, [0.25, 0.5, 0.75]))


def _quantiles(matrix):
    return np.quantile(matrix, [0.25, 0.5, 0.75], axis=0)


def _run_seed(args):
    cfg, seed = args
    start = time.perf_counter()
    try:
        return seed, run_single(cfg, seed), None, time.perf_counter() - start
    except NumericalBreakdown as exc:
        return seed, None, exc.step, time.perf_counter() - start


def run_experiment(cfg, workers=None):
    """Run every seed of ``cfg`` and aggregate per-step quantiles.

    Seeds that break down numerically are recorded in ``Summary.failed`` and
    excluded from the quantiles.
    """
    if not cfg.seeds:
        raise InvalidConfig("seed list is empty")
    jobs = [(cfg, s) for s in cfg.seeds]
    workers = workers or int(os.environ.get("DEVA_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    traces, failed, elapsed = {}, {}, 0.0
    for seed, recs, bad_step, dt in results:
        elapsed += dt
        if recs is None:
            log.warning("seed %d broke down at step %s", seed, bad_step)
            failed[seed] = bad_step
        else:
            traces[seed] = recs
    steps = np.array([r.step for r in next(iter(traces.values()))]) if traces else np.array([], dtype=int)
    loss_q = hnorm_q = None
    if traces:
        losses = np.array([[r.loss for r in recs] for recs in traces.values()])
        loss_q = _quantiles(losses)
        if cfg.diagnostics:
            hn = np.array([[r.h_weighted for r in recs] for recs in traces.values()], dtype=float)
            hnorm_q = _quantiles(hn)
    return Summary(
        config=cfg,
        steps=steps,
        loss_q=loss_q,
        hnorm_q=hnorm_q,
        final_losses={s: recs[-1].loss for s, recs in traces.items()},
        failed=failed,
        wall_clock_per_step=elapsed / (len(jobs) * cfg.steps),
    )


def sweep(cfg, lr_grid, workers=None):
    """Run ``cfg`` at each learning rate; returns ``(best_summary, {lr: summary})``.

    The best rate minimizes the median final loss; ties go to the earlier grid entry.
    """
    if not lr_grid:
        raise InvalidConfig("empty learning-rate grid")
    results = {float(lr): run_experiment(cfg.with_lr(lr), workers) for lr in lr_grid}
    best = min(results.values(), key=lambda s: s.median_final)
    return best, results


@dataclass
class Comparison:
    summaries: list
    ordering: list  # labels sorted by median final loss, best first

    def table(self):
        rows = []
        for s in self.summaries:
            q25, med, q75 = s.final_quantiles()
            rows.append((s.label, s.config.hyper.get("lr", s.config.hp().lr), med, q25, q75, len(s.failed)))
        return rows


def compare_suite(cfgs, lr_grid=None, workers=None):
    """One ``Summary`` per config plus the ordering by median final loss.

    All configs must share the step count and the problem family: the
    homogeneous and heterogeneous trace quadratics of one dimension count
    as one family, so an optimizer can be compared against itself across
    the two arrangements.
    """
    if not cfgs:
        raise InvalidConfig("no configs to compare")
    if any(c.steps != cfgs[0].steps for c in cfgs):
        raise InvalidConfig("compared configs must share the step count")
    if any(c.problem.family != cfgs[0].problem.family for c in cfgs):
        raise InvalidConfig("compared configs must share the problem family and dimension")
    summaries = []
    for c in cfgs:
        if lr_grid:
            summaries.append(sweep(c, lr_grid, workers)[0])
        else:
            summaries.append(run_experiment(c, workers))
    ordering = [s.label for s in sorted(summaries, key=lambda s: s.median_final)]
    return Comparison(summaries=summaries, ordering=ordering)


# -- output -------------------------------------------------------------------------


def _fmt(x):
    if x is None or not math.isfinite(x):
        return ""
    return repr(float(x))


def csv_text(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for k, step in enumerate(summary.steps):
        q25, med, q75 = summary.loss_q[:, k]
        if summary.hnorm_q is not None:
            h25, hmed, h75 = summary.hnorm_q[:, k]
        else:
            h25 = hmed = h75 = None
        w.writerow([int(step), _fmt(med), _fmt(q25), _fmt(q75), _fmt(hmed), _fmt(h25), _fmt(h75)])
    return buf.getvalue()


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def summary_record(summary):
    q25, med, q75 = summary.final_quantiles()
    return {
        "label": summary.label,
        "config": summary.config.to_dict(),
        "config_hash": summary.config.digest(),
        "n_seeds": len(summary.config.seeds),
        "n_failed": len(summary.failed),
        "failed_seeds": {str(k): v for k, v in sorted(summary.failed.items())},
        "final_loss": {
            "median": _json_num(med),
            "q25": _json_num(q25),
            "q75": _json_num(q75),
            "per_seed": {str(k): _json_num(v) for k, v in sorted(summary.final_losses.items())},
        },
        "wall_clock_s_per_step": summary.wall_clock_per_step,
    }


def emit(summaries, out_dir, ordering=None, extra=None):
    """Write one ``trace_<optimizer>_<problem>.csv`` per summary and a ``summary.json``.

    Output bytes depend only on the summaries, except the
    ``wall_clock_s_per_step`` fields. Returns the written paths.
    """
    if not isinstance(summaries, (list, tuple)):
        summaries = [summaries]
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for s in summaries:
            path = os.path.join(out_dir, f"trace_{s.label}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(csv_text(s))
            paths.append(path)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "runs": [summary_record(s) for s in summaries],
        }
        if ordering is not None:
            doc["ordering"] = list(ordering)
        if extra:
            doc.update(extra)
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)
    except OSError as exc:
        raise IoError(f"cannot write to {out_dir}: {exc}") from exc
    return paths


__all__ = [
    "CSV_HEADER",
    "Comparison",
    "DevaError",
    "ProblemSpec",
    "RunConfig",
    "ScheduleSpec",
    "Summary",
    "TraceRecord",
    "compare_suite",
    "csv_text",
    "emit",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_single",
    "summary_record",
    "sweep",
]
