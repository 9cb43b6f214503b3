"""``netsel`` command line.

Subcommands: ``simulate``, ``select``, ``estimate``, ``benchmark`` and
``timing``.  Every run writes a JSON manifest next to its outputs, also
when it fails.  Exit status: 0 success, 2 usage, 3 validation, 4 solver,
5 I/O.
"""

import argparse
import csv
import datetime
import json
import os
import platform
import sys

import numpy as np

from . import __version__
from .estimator import default_bounds, estimate_initial_state_full
from .exceptions import (
    DimensionError,
    DomainError,
    EmptySelectionError,
    EnumerationCapError,
    InfeasibleError,
    NetselError,
    PhaseError,
    UndefinedMetricError,
    ValidationError,
)
from .harness import (
    BenchmarkInstance,
    HistogramData,
    exhaustive_search,
    random_baseline,
    timing_benchmark,
    write_campaign_csv,
    write_gnuplot_script,
    write_histogram_csv,
    write_timing_csv,
)
from .integrate import DiscretizationConfig, simulate, write_trajectory_csv
from .metrics import error_metric
from .modelio import load_model
from .netmodels import load_letters, perturbed_pattern
from .outputs import OutputParametrization, SelectionVector, restrict_output_matrix
from .selector import (
    PipelineConfig,
    ScenarioConfig,
    SelectionProblem,
    canonical_algorithm,
    generate_observation_sequence,
    initial_guess,
    run_pipeline,
)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5
_VALIDATION_TYPES = (
    ValidationError,
    DimensionError,
    DomainError,
    EnumerationCapError,
    InfeasibleError,
    UndefinedMetricError,
)

# fixed spawn positions of the master seed
SEED_X0, SEED_PIPELINE, SEED_BASELINE, SEED_TRIALS = range(4)


class UsageError(Exception):
    pass


class SolverFailure(Exception):
    pass


def derived_seed(master, slot):
    """Integer child seed ``slot`` of the master seed (stable across runs)."""
    child = np.random.SeedSequence(master).spawn(4)[slot]
    return int(child.generate_state(1)[0])


# ---------------------------------------------------------------------------
# argument parsing

def _int_list(text):
    try:
        return [int(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="netsel", description="Sensor selection and initial-state estimation.",
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"netsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_model=True):
        p.add_argument("--model", required=needs_model, help="JSON model file")
        p.add_argument("--h", type=float, help="step size (default: model file, else 1e-3)")
        p.add_argument("--steps", type=int, help="horizon L; L+1 samples (default: model file, else 100)")
        p.add_argument("--method", type=str.lower, choices=("fe", "ti"), help="discretization (default: ti)")
        p.add_argument("--seed", type=int, help="master seed (default: $NETSEL_SEED, else 0)")
        p.add_argument("--x0", default=None,
                       help="true/user initial state: a JSON or whitespace file, 'random', or 'letter:T[:noise]'")

    p = sub.add_parser("simulate", help="simulate a trajectory to CSV", allow_abbrev=False)
    common(p)
    p.add_argument("--out", default="trajectory.csv")

    for name, helptext in (("select", "run one selection algorithm"), ("estimate", "estimate x0 from given sensors")):
        p = sub.add_parser(name, help=helptext, allow_abbrev=False)
        common(p)
        p.add_argument("--z-file", help="full-output CSV (time, z1..zN) for the instrumented scenario")
        p.add_argument("--out", default=f"{name}.json")
        if name == "select":
            p.add_argument("--algo", type=str.lower, choices=("mads", "milp1", "milp2"), default="milp2")
            p.add_argument("--mmax", type=int, required=True)
            p.add_argument("--mode", type=str.lower, choices=("le", "eq"))
            p.add_argument("--multi-trials", type=int, default=0,
                           help="extra random initial conditions for the relaxed phase")
            p.add_argument("--max-evals", type=int, help="direct-search budget (default 200 N)")
        else:
            p.add_argument("--sensors", type=_int_list, required=True, help="1-based node indices")

    p = sub.add_parser("benchmark", help="random and exhaustive baselines", allow_abbrev=False)
    common(p)
    p.add_argument("--mmax", type=_int_list, required=True, help="comma separated M_max values")
    p.add_argument("--algo", type=lambda s: [canonical_algorithm(a) for a in s.split(",")], default=None,
                   help="comma separated algorithms to mark (mads,milp1,milp2); default none")
    p.add_argument("--random-trials", type=int, default=0)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--outdir", default="benchmark")

    p = sub.add_parser("timing", help="wall-clock comparison of the algorithms", allow_abbrev=False)
    common(p, needs_model=False)
    p.add_argument("--family", choices=("duffing",), default="duffing")
    p.add_argument("--sizes", type=_int_list, default=[6, 8, 10])
    p.add_argument("--mmax", type=int, help="default: half the nodes")
    p.add_argument("--algo", type=lambda s: [canonical_algorithm(a) for a in s.split(",")],
                   default=["A1", "A2", "A3"])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default="timing.csv")
    return parser


# ---------------------------------------------------------------------------
# shared resolution of settings

def _master_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NETSEL_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"NETSEL_SEED must be an integer, got {env!r}") from None


def _settings(args, defaults):
    # precedence: command-line flag, then model-file defaults, then built-in defaults
    h = args.h if args.h is not None else float(defaults.get("h", 1e-3))
    L = args.steps if args.steps is not None else int(defaults.get("steps", 100))
    method = (args.method or defaults.get("method", "ti")).upper()
    if L < 0:
        raise ValidationError("--steps must be nonnegative")
    return DiscretizationConfig(method=method, h=h), L


def _read_vector(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return np.asarray(json.loads(text), dtype=float).ravel()
    except (json.JSONDecodeError, ValueError):
        return np.asarray(text.replace(",", " ").split(), dtype=float)


def _resolve_x0(source, model, defaults, seed):
    source = source if source is not None else defaults.get("x0", "random")
    rng = np.random.default_rng(derived_seed(seed, SEED_X0))
    if isinstance(source, list):
        return np.asarray(source, dtype=float)
    if source == "random":
        lo, hi = default_bounds(model)
        return initial_guess(model, lo, hi, rng)
    if str(source).startswith("letter:"):
        parts = str(source).split(":")
        letters = load_letters()
        if parts[1] not in letters:
            raise ValidationError(f"unknown letter {parts[1]!r}")
        noise = float(parts[2]) if len(parts) > 2 else 1.0
        if model.dim != 25:
            raise ValidationError("letter initial states need a 25-node model")
        return perturbed_pattern(letters[parts[1]], noise, rng)
    return _read_vector(source)


def _read_z(path, N):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError:
        raise ValidationError(f"{path}: non-numeric entries in output CSV") from None
    if data.ndim != 2 or data.shape[1] not in (N, N + 1):
        raise DimensionError(f"{path}: expected {N} output columns (optionally after a time column)")
    return data[:, 1:] if data.shape[1] == N + 1 else data


def _load(args):
    model, defaults = load_model(args.model)
    config, L = _settings(args, defaults)
    bounds = defaults.get("bounds")
    lo, hi = (bounds if bounds is not None else default_bounds(model))
    return model, defaults, config, L, lo, hi


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _to_list(v):
    return None if v is None else np.asarray(v, dtype=float).tolist()


# ---------------------------------------------------------------------------
# commands; each returns the list of artifact paths it wrote

def cmd_simulate(args, manifest):
    model, defaults, config, L, _, _ = _load(args)
    seed = _master_seed(args)
    x0 = _resolve_x0(args.x0, model, defaults, seed)
    manifest["config"].update(h=config.h, steps=L, method=config.method, x0=_to_list(x0))
    traj = simulate(model, x0, L, config)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_trajectory_csv(traj, fh)
    return [args.out]


def _scenario_inputs(args, model, defaults, config, L, seed):
    if args.z_file:
        z = _read_z(args.z_file, model.N)
        if z.shape[0] != L + 1:
            raise ValidationError(f"{args.z_file} has {z.shape[0]} samples but --steps gives L+1 = {L + 1}")
        x0_true = _resolve_x0(args.x0, model, defaults, seed) if (args.x0 or "x0" in defaults) else None
        return "INSTRUMENTED", None, z, x0_true
    x0 = _resolve_x0(args.x0, model, defaults, seed)
    return "SIMULATED", x0, None, x0


def cmd_select(args, manifest):
    model, defaults, config, L, lo, hi = _load(args)
    seed = _master_seed(args)
    scenario_name, user_x0, z, x0_true = _scenario_inputs(args, model, defaults, config, L, seed)
    multi = None
    if args.multi_trials:
        rng = np.random.default_rng(derived_seed(seed, SEED_TRIALS))
        multi = np.array([initial_guess(model, lo, hi, rng) for _ in range(args.multi_trials)])
    scenario = ScenarioConfig(
        scenario=scenario_name,
        algorithm=args.algo,
        m_max=args.mmax,
        mode=args.mode.upper() if args.mode else None,
        user_x0=user_x0,
        z_seq=z,
        x0_true=x0_true,
        multi_trials=multi,
    )
    from .mads import MadsConfig

    pipeline_seed = derived_seed(seed, SEED_PIPELINE)
    pconfig = PipelineConfig(seed=pipeline_seed, mads=MadsConfig(max_evals=args.max_evals))
    manifest["config"].update(
        h=config.h, steps=L, method=config.method, algorithm=scenario.algorithm, m_max=args.mmax,
        mode=scenario.mode, scenario=scenario_name, multi_trials=args.multi_trials, bounds=[_to_list(lo), _to_list(hi)],
        x0=_to_list(user_x0),
    )
    manifest["seeds"]["pipeline"] = pipeline_seed
    report = run_pipeline(SelectionProblem(model, config, L, lo, hi), scenario, pconfig)
    _write_json(args.out, report.to_dict())
    if report.status != "ok":
        raise SolverFailure(report.message)
    return [args.out]


def cmd_estimate(args, manifest):
    model, defaults, config, L, lo, hi = _load(args)
    seed = _master_seed(args)
    _, user_x0, z, x0_true = _scenario_inputs(args, model, defaults, config, L, seed)
    if z is None:
        z = generate_observation_sequence(model, config, user_x0, L)
    sel = SelectionVector.from_indices(args.sensors, model.N)
    theta = sel.theta
    C_hat = restrict_output_matrix(OutputParametrization.for_model(model), theta)
    rng = np.random.default_rng(derived_seed(seed, SEED_PIPELINE))
    x0_init = initial_guess(model, lo, hi, rng)
    res = estimate_initial_state_full(model, config, C_hat, z[:, theta == 1], x0_init)
    doc = {
        "sensors": sel.indices,
        "x0_init": x0_init.tolist(),
        "x0_hat": res.x0.tolist(),
        "cost": res.cost,
        "iterations": res.iterations,
        "termination": res.termination,
        "error_e": None if x0_true is None else error_metric(x0_true, res.x0),
    }
    manifest["config"].update(h=config.h, steps=L, method=config.method, sensors=sel.indices)
    _write_json(args.out, doc)
    return [args.out]


def cmd_benchmark(args, manifest):
    model, defaults, config, L, lo, hi = _load(args)
    seed = _master_seed(args)
    x0 = _resolve_x0(args.x0, model, defaults, seed)
    os.makedirs(args.outdir, exist_ok=True)
    pipeline_seed = derived_seed(seed, SEED_PIPELINE)
    instance = BenchmarkInstance.simulated(SelectionProblem(model, config, L, lo, hi), x0, seed=pipeline_seed)
    manifest["config"].update(
        h=config.h, steps=L, method=config.method, m_max=args.mmax, random_trials=args.random_trials,
        exhaustive=args.exhaustive, algorithms=args.algo or [], x0=_to_list(x0), workers=args.workers,
    )
    manifest["seeds"].update(pipeline=pipeline_seed, baseline=derived_seed(seed, SEED_BASELINE))
    artifacts, summary, histograms = [], [], {}
    relaxed = None
    for M in args.mmax:
        markers = {}
        for algo in args.algo or []:
            report = instance.run(algo, M, seed=pipeline_seed, relaxed=relaxed)
            relaxed = relaxed or _relaxed_from(report)
            summary.append([M, algo, " ".join(map(str, report.selected)), report.error_e, report.status])
            if report.status == "ok":
                markers[algo] = report.error_e
        campaigns = []
        if args.random_trials:
            camp = random_baseline(instance, M, args.random_trials, derived_seed(seed, SEED_BASELINE) + M,
                                   workers=args.workers)
            campaigns.append(("random", camp.results))
        if args.exhaustive:
            ex = exhaustive_search(instance, M, workers=args.workers)
            campaigns.append(("exhaustive", ex.results))
            summary.append([M, "exhaustive-best", " ".join(str(int(i) + 1) for i in np.flatnonzero(ex.best_theta))
                            if ex.best_theta is not None else "", ex.best_e, "ok"])
        for kind, results in campaigns:
            path = os.path.join(args.outdir, f"{kind}_m{M}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                write_campaign_csv(results, fh)
            hist = HistogramData.from_errors([r.error for r in results], markers)
            hpath = os.path.join(args.outdir, f"{kind}_m{M}_hist.csv")
            with open(hpath, "w", encoding="utf-8", newline="") as fh:
                write_histogram_csv(hist, fh)
            histograms[f"{kind} M_max={M}"] = (hpath, hist)
            artifacts += [path, hpath]
    spath = os.path.join(args.outdir, "algorithms.csv")
    with open(spath, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m_max", "algorithm", "theta", "e", "status"])
        for M, algo, theta, e, status in summary:
            w.writerow([M, algo, theta, "" if e is None else f"{e:.17g}", status])
    artifacts.append(spath)
    if histograms:
        gpath = os.path.join(args.outdir, "histograms.gp")
        with open(gpath, "w", encoding="utf-8") as fh:
            write_gnuplot_script(histograms, fh)
        artifacts.append(gpath)
    return artifacts


def _relaxed_from(report):
    # reuse the relaxed phase across M_max values and algorithms: it depends on neither
    from .estimator import RelaxedSolution

    r = report.relaxed
    return RelaxedSolution(
        theta_relaxed=np.asarray(r["theta"]), x0_est=np.asarray(r["x0"]), final_cost=r["cost"],
        iterations=r["iterations"], cost_trace=list(report.cost_trace), termination=r["termination"],
    )


def cmd_timing(args, manifest):
    from .netmodels import duffing_model, random_duffing_spec

    seed = _master_seed(args)
    config, L = _settings(args, {"h": 1e-4, "steps": 201, "method": "ti"})
    instances = {}
    for N in args.sizes:
        model = duffing_model(random_duffing_spec(N, seed=derived_seed(seed, SEED_X0) + N, connected=True))
        lo, hi = default_bounds(model)
        x0 = np.random.default_rng(derived_seed(seed, SEED_TRIALS) + N).uniform(0, 1, model.dim)
        instances[N] = BenchmarkInstance.simulated(
            SelectionProblem(model, config, L, lo, hi), x0, seed=derived_seed(seed, SEED_PIPELINE)
        )
    manifest["config"].update(h=config.h, steps=L, method=config.method, sizes=args.sizes, repeats=args.repeats,
                              algorithms=args.algo, m_max=args.mmax)
    rows = timing_benchmark(instances, args.algo, args.mmax, args.repeats, seed=derived_seed(seed, SEED_PIPELINE))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_timing_csv(rows, fh)
    return [args.out]


COMMANDS = {
    "simulate": cmd_simulate,
    "select": cmd_select,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "timing": cmd_timing,
}


def _manifest_path(args):
    if getattr(args, "outdir", None):
        return os.path.join(args.outdir, "manifest.json")
    return f"{args.out}.manifest.json"


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": {"model": getattr(args, "model", None)},
        "seeds": {},
        "artifacts": [],
        "version": __version__,
        "python": platform.python_version(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    code, error = EXIT_OK, None
    try:
        manifest["seeds"]["master"] = _master_seed(args)
        manifest["artifacts"] = COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        code, error = EXIT_USAGE, exc
    except SolverFailure as exc:
        code, error = EXIT_SOLVER, exc
        manifest["artifacts"] = [p for p in (getattr(args, "out", None),) if p and os.path.exists(p)]
    except PhaseError as exc:
        code = EXIT_VALIDATION if isinstance(exc.cause, _VALIDATION_TYPES) else EXIT_SOLVER
        error = exc
    except _VALIDATION_TYPES + (EmptySelectionError,) as exc:
        code, error = EXIT_VALIDATION, exc
    except NetselError as exc:
        code, error = EXIT_SOLVER, exc
    except OSError as exc:
        code, error = EXIT_IO, exc
    manifest["status"] = "ok" if code == EXIT_OK else "failed"
    manifest["exit_code"] = code
    if error is not None:
        manifest["error"] = f"{type(error).__name__}: {error}"
        print(f"netsel {args.command}: {manifest['error']}", file=sys.stderr)
    try:
        path = _manifest_path(args)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        _write_json(path, manifest)
    except OSError as exc:
        print(f"netsel: could not write manifest: {exc}", file=sys.stderr)
        code = code or EXIT_IO
    return code


def run():  # console-script entry point
    sys.exit(main())


if __name__ == "__main__":
    run()
