"""Evaluation protocol: random-selection baselines, exhaustive search,
error histograms and timing benchmarks.

A :class:`BenchmarkInstance` fixes everything a selection is scored
against: the model, the full-output record, the true initial state and the
estimator's starting point.  Scoring a selection means reducing the record
to the selected nodes and re-estimating the initial state, exactly as the
last phase of every pipeline does, so an algorithm's error is directly
comparable with the baseline distributions.
"""

import csv
import os
import statistics
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._validation import as_sequence, as_vector, check_cardinality
from .estimator import estimate_initial_state_full
from .exceptions import NetselError, ValidationError
from .metrics import error_metric
from .milp import enumerate_selections
from .outputs import OutputParametrization, restrict_output_matrix
from .selector import (
    PipelineConfig,
    ScenarioConfig,
    SelectionProblem,
    generate_observation_sequence,
    initial_guess,
    run_pipeline,
)

__all__ = [
    "BenchmarkInstance",
    "BaselineCampaign",
    "TrialResult",
    "ExhaustiveResult",
    "HistogramData",
    "error_metric",
    "evaluate_selection",
    "random_baseline",
    "exhaustive_search",
    "timing_benchmark",
    "write_campaign_csv",
    "write_histogram_csv",
    "write_timing_csv",
    "write_gnuplot_script",
]


@dataclass
class BenchmarkInstance:
    """A selection problem with known truth and a fixed estimator start."""

    problem: SelectionProblem
    x0_true: np.ndarray
    z_seq: np.ndarray
    x0_init: np.ndarray
    final_gtol: float = 1e-8
    final_max_iter: int = 1000

    @classmethod
    def simulated(cls, problem, x0_true, seed=0, x0_init=None, init_policy=None, **kwargs):
        """Simulate the full-output record from ``x0_true``.

        Without an explicit ``x0_init`` the start is drawn exactly as
        :func:`run_pipeline` draws it for :class:`PipelineConfig` ``seed``,
        so pipelines run with that seed share the baselines' estimator start.
        """
        model = problem.model
        x0_true = as_vector(x0_true, model.dim, "x0_true")
        z = generate_observation_sequence(model, problem.discretization, x0_true, problem.L)
        if x0_init is None:
            est = problem.estimation_problem(z)
            _, x0_ss, _ = np.random.SeedSequence(seed).spawn(3)
            x0_init = initial_guess(model, est.lower, est.upper, np.random.default_rng(x0_ss), init_policy)
        return cls(problem, x0_true, z, as_vector(x0_init, model.dim, "x0_init"), **kwargs)

    @property
    def N(self):
        return self.problem.model.N

    def scenario(self, algorithm, m_max, mode=None):
        return ScenarioConfig(
            scenario="INSTRUMENTED",
            algorithm=algorithm,
            m_max=m_max,
            mode=mode,
            z_seq=self.z_seq,
            x0_true=self.x0_true,
        )

    def pipeline_config(self, seed=0, **kwargs):
        return PipelineConfig(
            seed=seed,
            x0_init=self.x0_init,
            final_gtol=self.final_gtol,
            final_max_iter=self.final_max_iter,
            **kwargs,
        )

    def run(self, algorithm, m_max, seed=0, mode=None, relaxed=None, **kwargs):
        """Run one pipeline on this instance's data and estimator start."""
        return run_pipeline(
            self.problem, self.scenario(algorithm, m_max, mode), self.pipeline_config(seed, **kwargs), relaxed
        )


class TrialResult(NamedTuple):
    trial: int
    theta: np.ndarray
    error: float
    status: str

    @property
    def indices(self):
        return [int(i) + 1 for i in np.flatnonzero(self.theta)]


def evaluate_selection(instance, theta, trial=0):
    """Estimate ``x0`` from the selected nodes' outputs and score it.

    Estimation failures become a ``TrialResult`` with status ``failed`` and a
    NaN error instead of an exception.
    """
    theta = np.asarray(theta, dtype=float)
    model = instance.problem.model
    try:
        C_hat = restrict_output_matrix(OutputParametrization.for_model(model), theta)
        y = as_sequence(instance.z_seq, model.N)[:, theta == 1]
        res = estimate_initial_state_full(
            model,
            instance.problem.discretization,
            C_hat,
            y,
            instance.x0_init,
            gtol=instance.final_gtol,
            max_iter=instance.final_max_iter,
        )
        return TrialResult(trial, theta, error_metric(instance.x0_true, res.x0), "ok")
    except (NetselError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return TrialResult(trial, theta, float("nan"), f"failed: {type(exc).__name__}")


def _evaluate_all(instance, thetas, workers):
    workers = 1 if workers is None else int(workers)
    if workers == 1 or len(thetas) < 2:
        return [evaluate_selection(instance, t, i) for i, t in enumerate(thetas)]
    from joblib import Parallel, delayed

    # joblib returns results in submission order, so output order is by trial index
    return Parallel(n_jobs=workers)(delayed(evaluate_selection)(instance, t, i) for i, t in enumerate(thetas))


@dataclass
class BaselineCampaign:
    """Random EQ-mode selections scored on one instance."""

    m_max: int
    num_random: int
    seed: Optional[int]
    results: list = field(default_factory=list)
    x0_init: Optional[np.ndarray] = None

    @property
    def errors(self):
        return np.array([r.error for r in self.results if r.status == "ok"])

    @property
    def failures(self):
        return sum(1 for r in self.results if r.status != "ok")

    def pairs(self):
        return [(r.theta, r.error) for r in self.results]


def random_selections(N, m_max, num_trials, seed):
    """``num_trials`` uniform ``m_max``-subsets of the nodes (independent across trials)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = []
    for _ in range(num_trials):
        theta = np.zeros(N)
        theta[rng.choice(N, size=m_max, replace=False)] = 1.0
        out.append(theta)
    return out


def random_baseline(instance, m_max, num_trials, seed=0, workers=1):
    """Score ``num_trials`` random EQ selections of size ``m_max``; deterministic given ``seed``."""
    if int(num_trials) < 1:
        raise ValidationError("num_trials must be at least 1")
    m_max = check_cardinality(m_max, instance.N, "EQ")
    thetas = random_selections(instance.N, m_max, int(num_trials), seed)
    results = _evaluate_all(instance, thetas, workers)
    return BaselineCampaign(m_max, int(num_trials), seed, results, instance.x0_init.copy())


class ExhaustiveResult(NamedTuple):
    best_theta: Optional[np.ndarray]
    best_e: float
    results: list

    @property
    def errors(self):
        return np.array([r.error for r in self.results if r.status == "ok"])


def exhaustive_search(instance, m_max, workers=1, cap=None):
    """Score every EQ selection of size ``m_max``.

    Returns ``(best_theta, best_e, results)``; ties in ``e`` keep the
    lexicographically first selection.
    """
    kwargs = {} if cap is None else {"cap": cap}
    thetas = list(enumerate_selections(instance.N, m_max, "EQ", **kwargs))
    results = _evaluate_all(instance, thetas, workers)
    best = None
    for r in results:
        if r.status == "ok" and (best is None or r.error < best.error):
            best = r
    if best is None:
        return ExhaustiveResult(None, float("nan"), results)
    return ExhaustiveResult(best.theta, best.error, results)


# ---------------------------------------------------------------------------
# histograms

MAX_BINS = 30


@dataclass
class HistogramData:
    bin_edges: np.ndarray
    counts: np.ndarray
    marker_lines: dict = field(default_factory=dict)
    outliers: dict = field(default_factory=dict)

    @classmethod
    def from_errors(cls, errors, markers=None, max_bins=MAX_BINS):
        """Freedman-Diaconis bins (at most ``max_bins``) over finite errors.

        A marker outside ``[0, max(errors)]`` is kept but flagged in
        ``outliers``.
        """
        e = np.asarray([v for v in np.asarray(errors, dtype=float) if np.isfinite(v)])
        if e.size == 0:
            edges, counts = np.array([0.0, 1.0]), np.array([0])
        else:
            edges = np.histogram_bin_edges(e, bins="fd")
            if edges.size - 1 > max_bins:
                edges = np.histogram_bin_edges(e, bins=max_bins)
            counts, edges = np.histogram(e, bins=edges)
        markers = {k: float(v) for k, v in (markers or {}).items()}
        top = float(e.max()) if e.size else 0.0
        outliers = {k: not (0.0 <= v <= top) for k, v in markers.items()}
        return cls(edges, counts, markers, outliers)

    @property
    def total(self):
        return int(self.counts.sum())


# ---------------------------------------------------------------------------
# timing

def _relaxed_of(report):
    from .estimator import RelaxedSolution

    r = report.relaxed
    return RelaxedSolution(r["theta"], r["x0"], r["cost"], r["iterations"], list(report.cost_trace), r["termination"])


def timing_benchmark(instances, algorithms=("A1", "A2", "A3"), m_max=None, repeats=3, seed=0, share_common=True):
    """Median wall-clock per phase for each algorithm on each instance.

    ``instances`` maps a label (typically the network size) to a
    :class:`BenchmarkInstance`.  ``m_max`` defaults to half the nodes
    (rounded up).

    With ``share_common`` (default) a computation that is identical for
    several algorithms within one repeat runs once and its time is
    charged to each of them: the relaxed phase always (same data and
    start), and the final estimate whenever two algorithms select the same
    nodes.  Totals are then the sum of the phase times, so they differ only
    where the algorithms' work differs.  Without it every pipeline runs
    from scratch and ``total`` is its own measured wall-clock.

    Returns a list of dict rows: label, algorithm, repeats, and the median
    seconds of every phase plus ``total``.
    """
    rows = []
    for label, inst in instances.items():
        M = m_max if m_max is not None else (inst.N + 1) // 2
        samples = {algo: {} for algo in algorithms}
        for _ in range(int(repeats)):
            relaxed, relaxed_time, estimates = None, None, {}
            for algo in algorithms:
                report = inst.run(algo, M, seed=seed, relaxed=relaxed if share_common else None)
                timings = dict(report.timings)
                if share_common:
                    if relaxed is None:
                        relaxed, relaxed_time = _relaxed_of(report), timings["relaxed"]
                    timings["relaxed"] = relaxed_time
                    if report.theta_hat is not None:
                        key = report.theta_hat.theta.tobytes()
                        timings["estimate"] = estimates.setdefault(key, timings["estimate"])
                    timings["total"] = sum(v for k, v in timings.items() if k != "total")
                for phase, t in timings.items():
                    samples[algo].setdefault(phase, []).append(t)
        for algo in algorithms:
            row = {"label": label, "algorithm": algo, "repeats": int(repeats)}
            row.update({phase: statistics.median(ts) for phase, ts in samples[algo].items()})
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# file output

def _fmt(v):
    return "nan" if not np.isfinite(v) else f"{v:.17g}"


def write_campaign_csv(results, fh):
    """Rows ``trial, theta (1-based indices separated by spaces), e, status``."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["trial", "theta", "e", "status"])
    for r in results:
        writer.writerow([r.trial, " ".join(str(i) for i in r.indices), _fmt(r.error), r.status])


def write_histogram_csv(hist, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["bin_left", "bin_right", "count"])
    for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
        writer.writerow([_fmt(lo), _fmt(hi), int(c)])
    for name, value in hist.marker_lines.items():
        writer.writerow([f"# marker {name}", _fmt(value), "outlier" if hist.outliers.get(name) else "in-range"])


def write_timing_csv(rows, fh):
    phases = []
    for row in rows:
        for k in row:
            if k not in ("label", "algorithm", "repeats") and k not in phases:
                phases.append(k)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["label", "algorithm", "repeats", *phases])
    for row in rows:
        writer.writerow([row["label"], row["algorithm"], row["repeats"], *(_fmt(row.get(p, np.nan)) for p in phases)])


def write_gnuplot_script(histogram_csvs, fh, title="estimation error"):
    """Emit a gnuplot script plotting each histogram CSV with its marker lines."""
    fh.write("set datafile separator ','\n")
    fh.write("set style fill solid 0.5\n")
    fh.write(f"set xlabel '{title}'\nset ylabel 'count'\n")
    for name, (path, hist) in histogram_csvs.items():
        base = os.path.splitext(os.path.basename(path))[0]
        fh.write(f"\nset terminal pngcairo size 800,500\nset output '{base}.png'\n")
        fh.write(f"set title '{name}'\nunset arrow\n")
        for marker, value in hist.marker_lines.items():
            fh.write(f"set arrow from {value:.17g}, graph 0 to {value:.17g}, graph 1 nohead lw 2 # {marker}\n")
        fh.write(f"plot '{os.path.basename(path)}' every ::1 using (($1+$2)/2):3:($2-$1) with boxes notitle\n")
