"""
Command pipelines: analysis, plan selection, simulation, reconstruction,
target estimation, genericity trials and the two reproduction runs
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from config import OUTPUT_DIR, SCHEMA_VERSION, TEMPLATES_DIR
from src.dynamics import GENERATOR, aliasing_ok, generator_matrix, spectral_gap
from src.errors import ConfigError, InfeasibleError
from src.experiment_config import (
    ExperimentConfig,
    SystemBundle,
    build_states,
    build_system,
    parse_config,
)
from src.measurement import MeasurementSimulator
from src.models import (
    SpinChainParams,
    dissipative_family,
    random_lindblad_system,
    random_unitary_system,
    seed_sampler,
    seeded_family,
    spin_chain,
    spin_chain_family,
)
from src.observability import (
    counting_bounds,
    genericity_trials,
    kalman_report,
    normal_sampler,
    pbh_test,
    report_to_dict,
    target_reconstructable,
    uniform_sampler,
)
from src.reconstruct import (
    design_matrix,
    estimate_state,
    evolved_candidates,
    mse_bound,
    scaling_slope,
    squared_error,
    target_coefficients,
    target_estimate,
    variance_bound,
)
from src.selection import MeasurementPlan, greedy_plan
from utils.export import CSVExporter, HTMLExporter, JSONExporter, MarkdownExporter, matrix_rows
from utils.file_handler import FileHandler

logger = logging.getLogger(__name__)

PLAN_COLUMNS = ["index", "label", "time", "objective", "cumulative_rank"]
RECORD_COLUMNS = ["obs_label", "time", "shots", "estimate", "exact_mean", "variance", "seed"]


@dataclass
class RunContext:
    """A validated config plus the run-level options of one command"""

    cfg: ExperimentConfig
    config_hash: str
    out_dir: Path
    workers: int = 1
    emit_bases: bool = False
    files: List[str] = field(default_factory=list)

    def meta(self, command: str) -> Dict[str, Any]:
        return {"schema": SCHEMA_VERSION, "command": command, "config_hash": self.config_hash, "seed": self.cfg.seed}

    def write_json(self, name: str, command: str, content: Dict[str, Any]) -> Path:
        path = self.out_dir / f"{name}.json"
        JSONExporter.export({"meta": self.meta(command), **content}, str(path))
        self.files.append(str(path))
        return path

    def write_csv(self, name: str, command: str, rows: List[Dict], columns: List[str]) -> Path:
        path = self.out_dir / f"{name}.csv"
        metadata = {"schema": SCHEMA_VERSION, "command": command, "config_hash": self.config_hash, "seed": self.cfg.seed}
        CSVExporter.export(rows, str(path), columns=columns, metadata=metadata)
        self.files.append(str(path))
        return path


def prepare(
    config_path: str,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    tol: Optional[float] = None,
    psd_project: bool = False,
    workers: int = 1,
    emit_bases: bool = False,
    subdir: Optional[str] = None,
) -> RunContext:
    """
    Load a config, apply command line overrides and create the output directory

    Args:
        config_path: Config file path or bundled config name
        seed: Overrides the config seed
        out: Output directory (default: config output_dir, then OUTPUT_DIR/subdir)
        tol: Absolute rank tolerance override
        psd_project: Enable PSD projection of state estimates
        workers: Thread count for genericity trials
        emit_bases: Also write observable / non-observable bases as CSV
        subdir: Sub-directory of the default output directory

    Returns:
        RunContext
    """
    handler = FileHandler()
    data = handler.load_config(config_path)
    if seed is not None:
        data["seed"] = seed
    if tol is not None:
        data["tol"] = tol
    if psd_project:
        data["psd_project"] = True
    cfg = parse_config(data)
    if out:
        directory = Path(out)
    elif cfg.output_dir:
        directory = Path(cfg.output_dir)
    else:
        directory = OUTPUT_DIR / subdir if subdir else OUTPUT_DIR
    out_dir = FileHandler(directory).prepare_output_dir()
    return RunContext(
        cfg=cfg,
        config_hash=handler.config_hash(data),
        out_dir=out_dir,
        workers=workers,
        emit_bases=emit_bases,
    )


def _child_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _require_generator(bundle: SystemBundle, command: str):
    if bundle.superoperator.kind != GENERATOR:
        raise ConfigError(f"'{command}' needs continuous-time dynamics")
    return bundle.generator


def _build_plan(ctx: RunContext, bundle: SystemBundle, report=None) -> MeasurementPlan:
    cfg = ctx.cfg
    generator = _require_generator(bundle, "select")
    return greedy_plan(
        generator,
        bundle.measurements,
        horizon=cfg.horizon,
        first_pick=cfg.first_pick,
        seed=cfg.seed,
        n_grid=cfg.n_grid,
        report=report or kalman_report(generator, bundle.measurements, tol=cfg.tol),
    )


def analyze(ctx: RunContext) -> Dict[str, Any]:
    """Observability report with PBH cross-check, counting bounds and aliasing"""
    cfg = ctx.cfg
    bundle = build_system(cfg)
    report = kalman_report(bundle.superoperator, bundle.measurements, tol=cfg.tol)
    pbh = pbh_test(bundle.superoperator, bundle.measurements, tol=cfg.tol)
    if pbh.observable != report.observable:
        logger.warning("Kalman and PBH verdicts disagree (rank %d of %d)", report.rank, report.d2)
    counting = counting_bounds(
        bundle.dim,
        len(bundle.measurements),
        multipartite=(bundle.n_qubits, 2) if bundle.n_qubits and bundle.n_qubits > 1 else None,
    )
    content: Dict[str, Any] = {
        "system": bundle.name,
        "dynamics": cfg.dynamics,
        "report": report_to_dict(report),
        "pbh": {"observable": pbh.observable, "witness": pbh.witness, "eigenvalues_checked": pbh.checked},
        "counting": {
            "unitary_possible": counting.unitary_possible,
            "multipartite": counting.multipartite,
            "multipartite_possible": counting.multipartite_possible,
        },
    }
    if cfg.dynamics == "discretized":
        verdict = aliasing_ok(bundle.generator, cfg.dt)
        continuous = kalman_report(bundle.generator, bundle.measurements, tol=cfg.tol)
        content["aliasing"] = {"ok": verdict.ok, "offending": verdict.offending, "dt": cfg.dt}
        content["continuous_rank"] = continuous.rank
    if bundle.target is not None:
        content["target_reconstructable"] = target_reconstructable(report, bundle.target, tol=cfg.tol)
    ctx.write_json("analyze", "analyze", content)
    if ctx.emit_bases:
        ctx.write_csv("obs_basis", "analyze", _basis_rows(report.obs_basis), ["vector", "entry", "re", "im"])
        ctx.write_csv("nonobs_basis", "analyze", _basis_rows(report.non_obs_basis), ["vector", "entry", "re", "im"])
    return content


def _basis_rows(basis: np.ndarray) -> List[Dict]:
    return [
        {"vector": k, "entry": i, "re": float(basis[i, k].real), "im": float(basis[i, k].imag)}
        for k in range(basis.shape[1])
        for i in range(basis.shape[0])
    ]


def _plan_summary(plan: MeasurementPlan, bundle: SystemBundle, shots: int) -> Dict[str, Any]:
    summary = {
        "entries": len(plan),
        "horizon": plan.horizon,
        "final_rank": plan.final_rank,
        "target_rank": plan.target_rank,
        "partial": plan.partial,
        "t_max": plan.max_time,
    }
    k = variance_bound(bundle.measurements)
    summary["k"] = k
    if not plan.partial:
        summary["mse_k_bound"] = mse_bound(design_matrix(plan), k, shots).k_bound
    return summary


def select(ctx: RunContext) -> Dict[str, Any]:
    """Greedy measurement plan as CSV plus its MSE bound"""
    bundle = build_system(ctx.cfg)
    plan = _build_plan(ctx, bundle)
    ctx.write_csv("plan", "select", plan.table(), PLAN_COLUMNS)
    content = {"plan": _plan_summary(plan, bundle, ctx.cfg.shots)}
    ctx.write_json("select", "select", content)
    return content


def simulate(ctx: RunContext) -> Dict[str, Any]:
    """Seeded measurement records for every configured initial state"""
    cfg = ctx.cfg
    seed = cfg.require_seed("simulate")
    bundle = build_system(cfg)
    plan = _build_plan(ctx, bundle)
    rows = plan.rows(bundle.measurements)
    simulator = MeasurementSimulator(bundle.generator, mode=cfg.sampling, seed=seed)
    written = {}
    for k, (label, rho) in enumerate(build_states(cfg, bundle).items()):
        distributions = simulator.distributions(rows, rho)
        records = simulator.sample(rows, distributions, cfg.shots, seed=_child_seed(seed, k))
        path = ctx.write_csv(f"measurements_{label}", "simulate", [r.to_dict() for r in records], RECORD_COLUMNS)
        written[label] = str(path)
    content = {"records": written, "shots": cfg.shots, "sampling": cfg.sampling}
    ctx.write_json("simulate", "simulate", content)
    return content


def reconstruct(ctx: RunContext) -> Dict[str, Any]:
    """Simulate the plan and invert the data for every configured state"""
    cfg = ctx.cfg
    seed = cfg.require_seed("reconstruct")
    bundle = build_system(cfg)
    report = kalman_report(_require_generator(bundle, "reconstruct"), bundle.measurements, tol=cfg.tol)
    if not report.observable:
        raise InfeasibleError(
            f"system is not observable (rank {report.rank} < {report.d2}); the state cannot be reconstructed",
            reason="rank_deficient",
            details={"rank": report.rank, "d2": report.d2},
        )
    plan = _build_plan(ctx, bundle, report)
    design = design_matrix(plan)
    rows = plan.rows(bundle.measurements)
    simulator = MeasurementSimulator(bundle.generator, mode=cfg.sampling, seed=seed)
    k = variance_bound(bundle.measurements)
    results = {}
    for i, (label, rho) in enumerate(build_states(cfg, bundle).items()):
        distributions = simulator.distributions(rows, rho)
        records = simulator.sample(rows, distributions, cfg.shots, seed=_child_seed(seed, i))
        estimate = estimate_state(design, [r.estimate for r in records], psd_project=cfg.psd_project, tol=cfg.tol)
        bound = mse_bound(design, k, cfg.shots, variances=[r.variance for r in records])
        results[label] = {
            "squared_error": squared_error(rho, estimate.rho),
            "trace": float(np.trace(estimate.rho).real),
            "condition": estimate.condition,
            "residual": estimate.residual,
            "psd_projected": estimate.psd_projected,
            "mse_k_bound": bound.k_bound,
            "mse_exact": bound.exact,
        }
        ctx.write_csv(f"rho_{label}", "reconstruct", matrix_rows(estimate.rho), ["row", "col", "re", "im"])
    content = {"states": results, "shots": cfg.shots, "plan_entries": len(plan)}
    ctx.write_json("reconstruct", "reconstruct", content)
    return content


def _target_solution(ctx: RunContext, bundle: SystemBundle):
    cfg = ctx.cfg
    if bundle.target is None:
        raise ConfigError("'target' needs a target observable (system.target or the nv_center model)")
    if not cfg.target_times:
        raise ConfigError("'target' needs candidate times (target_times)")
    generator = _require_generator(bundle, "target")
    report = kalman_report(generator, bundle.measurements, tol=cfg.tol)
    candidates = evolved_candidates(generator, bundle.measurements, cfg.target_times)
    return report, target_coefficients(bundle.target, candidates, report=report)


def target(ctx: RunContext) -> Dict[str, Any]:
    """Expansion of the target over evolved observables and its estimate per state"""
    cfg = ctx.cfg
    bundle = build_system(cfg)
    report, solution = _target_solution(ctx, bundle)
    content: Dict[str, Any] = {
        "reconstructable": True,
        "alpha": solution.coefficients,
        "entries": [{"index": i, "label": label, "time": t} for i, label, t in solution.entries],
        "residual": solution.residual,
        "observable_rank": report.rank,
    }
    if cfg.seed is not None:
        rows = solution.rows(bundle.measurements)
        simulator = MeasurementSimulator(bundle.generator, mode=cfg.sampling, seed=cfg.seed)
        states = {}
        for i, (label, rho) in enumerate(build_states(cfg, bundle).items()):
            records = simulator.sample(rows, simulator.distributions(rows, rho), cfg.shots, seed=_child_seed(cfg.seed, i))
            z = float(np.trace(bundle.target @ rho).real)
            z_hat = target_estimate(solution.coefficients, [r.estimate for r in records])
            z_exact = target_estimate(solution.coefficients, [r.exact_mean for r in records])
            states[label] = {"z": z, "z_hat": z_hat, "z_from_exact_data": z_exact, "squared_error": (z - z_hat) ** 2}
        content["states"] = states
        content["shots"] = cfg.shots
    ctx.write_json("target", "target", content)
    return content


def _trial_family(cfg: ExperimentConfig):
    """(param_model, sampler) for the configured model"""
    if cfg.model is None:
        raise ConfigError("'genericity' needs a model block")
    params = cfg.model.params
    block = cfg.genericity

    def sampler_for(size: int):
        if block.distribution == "uniform":
            return uniform_sampler(size, 0.0, block.scale)
        return normal_sampler(size, 0.0, block.scale)

    name = cfg.model.name
    if name == "spin_chain":
        n = int(params.get("n_sites", 4))
        eta = params.get("eta", 0.0)
        if isinstance(eta, (list, tuple)):
            raise ConfigError("genericity trials use one scalar eta for every site")
        return spin_chain_family(n, float(eta)), sampler_for(5 * n - 2)
    if name == "dissipative_nqubit":
        n = int(params.get("n_qubits", 2))
        return dissipative_family(n), sampler_for(2 * (4 ** n - 1))
    d = int(params.get("d", 2))
    n_obs = int(params.get("n_obs", 2))
    if name == "random_unitary":
        return seeded_family(lambda s: random_unitary_system(d, n_obs, s)), seed_sampler
    if name == "random_lindblad":
        n_noise = int(params.get("n_noise", 1))
        return seeded_family(lambda s: random_lindblad_system(d, n_obs, n_noise, s)), seed_sampler
    raise ConfigError(f"model {name!r} has no parametric family for genericity trials")


def genericity(ctx: RunContext) -> Dict[str, Any]:
    """Randomized observability trials over the configured model family"""
    cfg = ctx.cfg
    seed = cfg.require_seed("genericity")
    param_model, sampler = _trial_family(cfg)
    summary = genericity_trials(
        param_model,
        sampler,
        cfg.genericity.n_trials,
        seed,
        tol=cfg.tol,
        workers=ctx.workers,
        progress=True,
    )
    content = {
        "model": cfg.model.name,
        "n_trials": summary.n_trials,
        "n_observable": summary.n_observable,
        "rank_histogram": summary.rank_histogram,
        "failures": [{"trial": i, "error": msg} for i, msg in summary.failures],
    }
    ctx.write_json("genericity", "genericity", content)
    return content


def _get_summary_template() -> str:
    """
    Load the summary template, or the built-in default

    Returns:
        Template with {title}, {config_hash}, {seed}, {results} and {scaling} fields
    """
    template_file = TEMPLATES_DIR / "summary.md"

    if template_file.exists():
        return template_file.read_text(encoding="utf-8")

    return """# {title}

Config hash `{config_hash}`, seed {seed}.

## Results

{results}

## Error scaling

{scaling}
"""


def _markdown_table(header: List[str], rows: List[List[Any]]) -> str:
    def cell(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(cell(v) for v in row) + " |" for row in rows]
    return "\n".join(lines)


def _write_summary(ctx: RunContext, title: str, results: Dict[str, Any], scaling: Dict[str, float]):
    text = _get_summary_template().format(
        title=title,
        config_hash=ctx.config_hash,
        seed=ctx.cfg.seed,
        results=_markdown_table(["quantity", "value"], [[k, v] for k, v in results.items()]),
        scaling=_markdown_table(["state", "log-log slope"], [[k, v] for k, v in scaling.items()]),
    )
    md_path = ctx.out_dir / "summary.md"
    html_path = ctx.out_dir / "summary.html"
    MarkdownExporter.export(text, str(md_path))
    HTMLExporter.export(text, str(html_path), title=title)
    ctx.files += [str(md_path), str(html_path)]


def _error_scaling(ctx, simulator, rows, states, estimate, truth, name, command):
    """
    Mean squared error against shots for every state

    `estimate(records)` maps one batch of records to an estimate and
    `truth(label)` gives the exact value compared against.
    """
    cfg = ctx.cfg
    seed = cfg.require_seed(command)
    table = []
    slopes = {}
    for i, (label, rho) in enumerate(states.items()):
        distributions = simulator.distributions(rows, rho)
        means = []
        for j, shots in enumerate(tqdm(cfg.shots_grid, desc=f"{label} error scaling")):
            errors = []
            for s in range(cfg.n_seeds):
                records = simulator.sample(rows, distributions, shots, seed=[seed, i, j, s])
                errors.append(squared_error(np.atleast_1d(truth(label)), np.atleast_1d(estimate(records))))
            means.append(float(np.mean(errors)))
            table.append({"state": label, "shots": shots, "mean_squared_error": means[-1], "n_seeds": cfg.n_seeds})
        slopes[label] = scaling_slope(cfg.shots_grid, means)
    ctx.write_csv(name, command, table, ["state", "shots", "mean_squared_error", "n_seeds"])
    return slopes


def reproduce_spin_chain(ctx: RunContext) -> Dict[str, Any]:
    """
    Full spin-chain run

    Hamiltonian-only observability and genericity, then the dissipative chain:
    observability, relaxation rate, greedy plan and state error scaling.
    """
    cfg = ctx.cfg
    command = "reproduce spin-chain"
    seed = cfg.require_seed(command)
    bundle = build_system(cfg)
    if bundle.name != "spin_chain":
        raise ConfigError("reproduce spin-chain needs a spin_chain model config")
    params = cfg.model.params
    n_sites = int(params.get("n_sites", 4))

    closed_gen, closed_x = spin_chain(SpinChainParams.uniform(1.0, eta=0.0, n_sites=n_sites))
    closed = kalman_report(generator_matrix(closed_gen), closed_x, tol=cfg.tol)
    trials = genericity_trials(
        spin_chain_family(n_sites, 0.0),
        normal_sampler(5 * n_sites - 2),
        cfg.genericity.n_trials,
        seed,
        tol=cfg.tol,
        workers=ctx.workers,
        progress=True,
    )

    generator = _require_generator(bundle, command)
    report = kalman_report(generator, bundle.measurements, tol=cfg.tol)
    gap = spectral_gap(generator)
    tau = 1.0 / abs(gap.real) if gap is not None and gap.real < 0 else None
    plan = _build_plan(ctx, bundle, report)
    ctx.write_csv("plan", command, plan.table(), PLAN_COLUMNS)

    slopes = {}
    if report.observable:
        design = design_matrix(plan)
        rows = plan.rows(bundle.measurements)
        simulator = MeasurementSimulator(generator, mode=cfg.sampling, seed=seed)
        states = build_states(cfg, bundle)
        slopes = _error_scaling(
            ctx,
            simulator,
            rows,
            states,
            estimate=lambda records: estimate_state(design, [r.estimate for r in records], tol=cfg.tol).rho,
            truth=lambda label: states[label],
            name="error_scaling_state",
            command=command,
        )
    else:
        logger.warning("dissipative chain is not observable; skipping the error-scaling experiment")

    results = {
        "hamiltonian_rank": closed.rank,
        "hamiltonian_n_nonobs": closed.n_nonobs,
        "genericity_trials": trials.n_trials,
        "genericity_observable": trials.n_observable,
        "dissipative_rank": report.rank,
        "dissipative_observable": report.observable,
        "lambda_2": None if gap is None else float(gap.real),
        "tau": tau,
        "plan_entries": len(plan),
        "plan_rank": plan.final_rank,
        "horizon": plan.horizon,
        "t_max": plan.max_time,
        "label_counts": dict(Counter(e.label for e in plan.entries)),
    }
    content = {"results": results, "slopes": slopes}
    ctx.write_json("reproduce_spin_chain", command, content)
    _write_summary(ctx, "Spin chain", results, slopes)
    return content


def reproduce_nv_center(ctx: RunContext) -> Dict[str, Any]:
    """
    Full NV run

    Observability of the electron-only measurement, reconstructability and
    expansion of the nuclear target, and target error scaling.
    """
    cfg = ctx.cfg
    command = "reproduce nv-center"
    cfg.require_seed(command)
    bundle = build_system(cfg)
    if bundle.name != "nv_center":
        raise ConfigError("reproduce nv-center needs an nv_center model config")
    report, solution = _target_solution(ctx, bundle)
    rows = solution.rows(bundle.measurements)
    simulator = MeasurementSimulator(bundle.generator, mode=cfg.sampling, seed=cfg.seed)
    states = build_states(cfg, bundle)
    slopes = _error_scaling(
        ctx,
        simulator,
        rows,
        states,
        estimate=lambda records: target_estimate(solution.coefficients, [r.estimate for r in records]),
        truth=lambda label: float(np.trace(bundle.target @ states[label]).real),
        name="error_scaling_target",
        command=command,
    )
    results = {
        "observable_rank": report.rank,
        "d2": report.d2,
        "target_reconstructable": target_reconstructable(report, bundle.target, tol=cfg.tol),
        "target_residual": solution.residual,
    }
    for k, (alpha, (_, label, t)) in enumerate(zip(solution.coefficients, solution.entries), start=1):
        results[f"alpha_{k}"] = float(alpha)
        results[f"t_{k}"] = t
    content = {"results": results, "slopes": slopes}
    ctx.write_json("reproduce_nv_center", command, content)
    _write_summary(ctx, "NV centre", results, slopes)
    return content


COMMANDS = {
    "analyze": analyze,
    "select": select,
    "simulate": simulate,
    "reconstruct": reconstruct,
    "target": target,
    "genericity": genericity,
}

REPRODUCTIONS = {
    "spin-chain": (reproduce_spin_chain, "spin_chain_dissipative"),
    "nv-center": (reproduce_nv_center, "nv_center"),
}
