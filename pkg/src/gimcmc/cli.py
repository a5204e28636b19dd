"""Command-line harness wiring targets, samplers, and estimators.

Subcommands::

    gimcmc sample             one sampler, ESS and trace summaries
    gimcmc compare            several samplers, one comparison table
    gimcmc variance-reduction T seeded repeats, plain-vs-CV variance ratios
    gimcmc scaling            optimal step size over an (epsilon, d) grid
    gimcmc simulate-cox       draw a grid dataset from the Cox model
    gimcmc datasets           export and validate the bundled CSVs

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, datasets, diagnostics, poisson_cv, samplers, scaling, targets
from .config import ConfigError, ExperimentConfig, load_config, serialize_config
from .latent_gaussian import PriorEigen, compute_delta, run_lgm_chain

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

LGM_SAMPLER_MAP = {"gi-mala": "gi-mala-lgm", "mala": "mala-lgm",
                   "pcn": "pcn", "gi-rwm": "pcn"}


@dataclass
class TargetBundle:
    """A built target plus everything the samplers and estimators need."""

    kind: str
    target: object
    dim: int
    x0: np.ndarray
    precond: Optional[np.ndarray] = None      # constant preconditioner
    mean: Optional[np.ndarray] = None         # gi-rwm center
    hook: Optional[object] = None             # position-dependent preconditioner
    eigen: Optional[PriorEigen] = None        # latent Gaussian fast path
    mu_fit: Optional[np.ndarray] = None       # Gaussian fit for truncated G
    sigma_fit: Optional[np.ndarray] = None
    label: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def is_lgm(self) -> bool:
        return self.eigen is not None


def build_target(cfg: ExperimentConfig, extended: bool = False) -> TargetBundle:
    t = cfg.target
    kind = t["kind"]

    if kind == "gaussian":
        dim = t["dim"]
        mean = np.asarray(t.get("mean", np.zeros(dim)), dtype=float)
        if mean.ndim == 0:
            mean = np.full(dim, float(mean))
        cov_spec = t.get("cov", "identity")
        if isinstance(cov_spec, str) and cov_spec == "identity":
            cov = np.eye(dim)
        elif isinstance(cov_spec, str) and cov_spec == "random-spd":
            rng = np.random.default_rng(t.get("cov_seed", 7))
            A = rng.standard_normal((dim, dim))
            cov = A @ A.T / dim + np.eye(dim)
        else:
            cov = np.asarray(cov_spec, dtype=float)
        target = targets.GaussianTarget(mean, cov)
        return TargetBundle(kind=kind, target=target, dim=dim, x0=mean.copy(),
                            precond=cov, mean=mean, hook=target.curvature_hook,
                            mu_fit=mean, sigma_fit=cov, label=f"gaussian-d{dim}")

    if kind == "logistic":
        X, y = datasets.load_dataset(t["dataset"], has_header=t.get("has_header", False))
        D = datasets.design_matrix(X)
        model = targets.make_logistic_regression_target(D, y)
        theta, cov = targets.logistic_mle(D, y)
        return TargetBundle(kind=kind, target=model, dim=D.shape[1], x0=theta,
                            precond=cov, mean=theta, hook=model.curvature_hook,
                            mu_fit=theta, sigma_fit=cov,
                            label=f"logistic-{Path(str(t['dataset'])).stem}")

    if kind == "gp-classification":
        X, y = datasets.load_dataset(t["dataset"], has_header=t.get("has_header", False))
        Z, _, _ = datasets.standardize_columns(X)
        sigma2 = t.get("sigma2", 1.0)
        lengthscale = t.get("lengthscale", float(np.sqrt(Z.shape[1])))
        cov = targets.squared_exponential_kernel(Z, sigma2, lengthscale)
        lik = targets.BinaryLogisticLikelihood(y)
        target = targets.make_latent_gaussian_target(cov, lik)
        eigen = PriorEigen.load_or_compute(target.prior_covariance,
                                           cache_dir=t.get("eigen_cache"))
        return TargetBundle(kind=kind, target=target, dim=target.dim,
                            x0=np.zeros(target.dim), eigen=eigen,
                            label=f"gp-{Path(str(t['dataset'])).stem}")

    if kind == "log-cox":
        sigma2 = t.get("sigma2", 1.91)
        beta = t.get("beta", 1.0 / 33.0)
        mean_count = t.get("mean_count", 126.0)
        if "dataset" in t:
            grid, counts = datasets.load_cox_dataset(t["dataset"])
        else:
            grid = 64 if extended else t["grid_size"]
            sim = datasets.simulate_cox(grid, sigma2=sigma2, beta=beta,
                                        mean_count=mean_count,
                                        seed=t.get("sim_seed", 2024))
            counts = sim["counts"]
        d = grid * grid
        offset = float(np.log(mean_count) - sigma2 / 2.0)
        lik = targets.PoissonCoxLikelihood(counts, cell_area=1.0 / d, offset=offset)
        cov = targets.exponential_grid_kernel(grid, sigma2, beta)
        target = targets.make_latent_gaussian_target(cov, lik)
        eigen = PriorEigen.load_or_compute(target.prior_covariance,
                                           cache_dir=t.get("eigen_cache"))
        return TargetBundle(kind=kind, target=target, dim=d, x0=np.zeros(d),
                            eigen=eigen, label=f"log-cox-{grid}x{grid}",
                            extras={"grid_size": grid})

    if kind == "student-t":
        nu = t["nu"]
        target = targets.StudentTTarget(nu)
        a_val = targets.student_t_preconditioner(nu)
        precond = np.array([[a_val]])
        return TargetBundle(kind=kind, target=target, dim=1, x0=np.zeros(1),
                            precond=precond, mean=np.zeros(1),
                            hook=target.curvature_hook, mu_fit=np.zeros(1),
                            sigma_fit=precond, label=f"student-t-nu{nu:g}")

    if kind == "mixture":
        weights = np.asarray(t.get("weights", [0.5, 0.5]), dtype=float)
        means = np.asarray(t.get("means", [[0.0, 0.0], [0.0, 0.0]]), dtype=float)
        covs = np.asarray(t.get("covariances",
                                [[[1.0, 0.95], [0.95, 1.0]],
                                 [[1.0, -0.95], [-0.95, 1.0]]]), dtype=float)
        target = targets.GaussianMixtureTarget(weights, means, covs)
        overall_mean = weights @ means
        overall_cov = np.tensordot(weights, covs, axes=1)
        return TargetBundle(kind=kind, target=target, dim=target.dim,
                            x0=overall_mean.copy(), precond=overall_cov,
                            mean=overall_mean, hook=target.curvature_hook,
                            mu_fit=overall_mean, sigma_fit=overall_cov,
                            label="mixture-2d")

    if kind == "perturbed-gaussian":
        spec = scaling.PerturbedGaussianSpec(tuple(t["h_coeffs"]), t["epsilon"],
                                             t["dim"], kappa=2.0 / t["dim"])
        target = spec.product_target()
        a_val = spec.fisher_preconditioner()
        precond = a_val * np.eye(spec.dim)
        return TargetBundle(kind=kind, target=target, dim=spec.dim,
                            x0=np.zeros(spec.dim), precond=precond,
                            mean=np.zeros(spec.dim), mu_fit=np.zeros(spec.dim),
                            sigma_fit=precond, label=f"perturbed-d{spec.dim}",
                            extras={"spec": spec})

    raise ConfigError(f"target.kind: cannot build {kind!r}")


def _resolve_generic_kind(s_kind: str, bundle: TargetBundle,
                          position_dependent: bool) -> str:
    if s_kind == "pcn":
        raise ConfigError("samplers: pcn requires a latent Gaussian target")
    if s_kind == "gi-rwm":
        return "gi-rwm"
    if s_kind == "rwm":
        return "rwm"
    suffix = "precond" if position_dependent else "const"
    return f"{s_kind}-{suffix}"


def run_sampler(bundle: TargetBundle, s_cfg: dict, n_burnin: int, n_samples: int,
                seed: int, keep_burnin: bool = False) -> samplers.ChainTrace:
    """Run one configured sampler on a built target."""
    s_kind = s_cfg["kind"]
    gamma = float(s_cfg["step_size"])
    rate = s_cfg.get("target_rate")

    if bundle.is_lgm:
        if s_kind not in LGM_SAMPLER_MAP:
            raise ConfigError(f"samplers: {s_kind!r} is not available for "
                              "latent Gaussian targets")
        return run_lgm_chain(bundle.target, bundle.eigen, gamma, bundle.x0,
                             n_burnin, n_samples, kind=LGM_SAMPLER_MAP[s_kind],
                             target_rate=rate, seed=seed)

    position = bool(s_cfg.get("position_dependent", False))
    kind = _resolve_generic_kind(s_kind, bundle, position)
    if position and bundle.hook is None:
        raise ConfigError("samplers.position_dependent: target has no "
                          "curvature hook")
    if not position and bundle.precond is None:
        raise ConfigError(f"samplers: target {bundle.kind!r} has no constant "
                          "preconditioner")
    spec = samplers.ProposalSpec(
        kind, gamma,
        mean_param=bundle.mean if kind == "gi-rwm" else None,
        precond_const=None if position else bundle.precond,
        precond_fn=bundle.hook if position else None,
        target_rate=rate)
    return samplers.run_chain(spec, bundle.target, bundle.x0, n_burnin,
                              n_samples, seed=seed, keep_burnin=keep_burnin)


# ---------------------------------------------------------------------------
# Estimator wiring.
# ---------------------------------------------------------------------------


def _fit_parameters(bundle: TargetBundle, est: dict, trace) -> tuple:
    if est["fit"] == "burnin":
        if trace.burnin_states is None:
            raise ConfigError("estimator.fit: burnin states were not retained "
                              "for this run")
        mu = trace.burnin_states.mean(axis=0)
        sigma = np.cov(trace.burnin_states.T, ddof=1).reshape(trace.dim, trace.dim)
        return mu, sigma
    if bundle.mu_fit is None or bundle.sigma_fit is None:
        raise ConfigError("estimator.fit: target provides no Gaussian fit; "
                          "use fit: burnin")
    return bundle.mu_fit, bundle.sigma_fit


def _proposal_cov_info(bundle: TargetBundle, s_cfg: dict, trace, a=None):
    """Proposal covariance for E_q[G]: a matrix, or projected variances."""
    gamma = trace.gamma_final
    gi = trace.kind.startswith("gi-") or trace.kind == "pcn"
    scale = 2.0 * gamma - gamma * gamma if gi else 2.0 * gamma
    if bundle.is_lgm:
        if a is None:
            raise ConfigError("estimator: full proposal covariances are not "
                              "tractable for latent Gaussian targets")
        lam = bundle.eigen.values
        a_eig = bundle.eigen.vectors.T @ np.asarray(a, dtype=float)
        lik = bundle.target.likelihood
        deltas = np.array([compute_delta(lik.curvature_diag(x))
                           for x in trace.states])
        proj = (a_eig ** 2 * lam) / (lam * deltas[:, None] + 1.0)
        return scale * proj.sum(axis=1)
    if s_cfg.get("position_dependent", False):
        covs = np.stack([bundle.hook(x) for x in trace.states])
        return scale * covs
    return scale * bundle.precond


def build_estimation(bundle: TargetBundle, est: dict, s_cfg: dict, trace):
    """F values, matching Poisson solution, and covariance info for a trace."""
    gamma = trace.gamma_final
    f_kind = est["f"]
    if f_kind == "identity":
        return (poisson_cv.f_identity(trace.states),
                poisson_cv.solution_linear(gamma), None)
    if f_kind == "quadratic":
        mu, _ = _fit_parameters(bundle, est, trace)
        cov = _proposal_cov_info(bundle, s_cfg, trace)
        return (poisson_cv.f_quadratic(trace.states),
                poisson_cv.solution_quadratic(gamma, mu, raw=bool(est.get("raw", False))),
                cov)
    mu, sigma = _fit_parameters(bundle, est, trace)
    a = np.asarray(est.get("a", np.eye(bundle.dim)[0]), dtype=float)
    cov = _proposal_cov_info(bundle, s_cfg, trace, a=a)
    if f_kind == "indicator":
        sol = poisson_cv.solution_indicator(gamma, mu, sigma, a, float(est["b"]),
                                            truncation=est["truncation"])
        return poisson_cv.f_indicator(trace.states, a, float(est["b"])), sol, cov
    sol = poisson_cv.solution_exp(gamma, mu, sigma, a, truncation=est["truncation"])
    return poisson_cv.f_exp(trace.states, a), sol, cov


# ---------------------------------------------------------------------------
# Result bundle: a directory of headed CSVs plus a manifest.
# ---------------------------------------------------------------------------


@dataclass
class ResultBundle:
    out_dir: Path
    manifest: dict
    tables: dict = field(default_factory=dict)

    def add_csv(self, name: str, path: Path, header: bool = True) -> None:
        self.manifest.setdefault("files", []).append(
            {"name": name, "path": path.name, "header": header})

    def finalize(self) -> None:
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(self.manifest, fh, indent=2)

    @classmethod
    def load(cls, out_dir) -> "ResultBundle":
        out_dir = Path(out_dir)
        with open(out_dir / "manifest.json") as fh:
            manifest = json.load(fh)
        bundle = cls(out_dir=out_dir, manifest=manifest)
        for entry in manifest.get("files", []):
            path = out_dir / entry["path"]
            bundle.tables[entry["name"]] = np.loadtxt(
                path, delimiter=",", skiprows=1 if entry["header"] else 0,
                ndmin=2)
        return bundle


def _new_bundle(out_dir, command: str, cfg: Optional[ExperimentConfig]) -> ResultBundle:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "version": __version__}
    if cfg is not None:
        manifest["config"] = cfg.to_dict()
    return ResultBundle(out_dir=out_dir, manifest=manifest)


def _write_table(bundle: ResultBundle, name: str, header: str,
                 rows: np.ndarray) -> Path:
    path = bundle.out_dir / f"{name}.csv"
    np.savetxt(path, np.atleast_2d(rows), delimiter=",", header=header,
               comments="")
    bundle.add_csv(name, path)
    return path


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------


def cmd_sample(cfg: ExperimentConfig, out_dir, extended: bool = False) -> ResultBundle:
    bundle = _new_bundle(out_dir, "sample", cfg)
    tinfo = build_target(cfg, extended=extended)
    s_cfg = cfg.samplers[0]
    seeds = cfg.seed_list(cfg.repeats)

    summary_rows = []
    ess_rows = []
    timings = []
    for chain_idx, seed in enumerate(seeds):
        trace = run_sampler(tinfo, s_cfg, cfg.n_burnin, cfg.n_samples, seed)
        report = diagnostics.ess_report(trace.states, trace.sampling_seconds)
        # wall-clock stays out of the CSVs so reruns are byte-identical
        timings.append(trace.sampling_seconds)
        summary_rows.append([chain_idx, seed, trace.gamma_final,
                             trace.accept_rate,
                             report.ess_min, report.ess_median, report.ess_max])
        for j, val in enumerate(report.ess):
            ess_rows.append([chain_idx, j, val])
        if chain_idx == 0:
            trace_path = bundle.out_dir / "trace_0"
            np.savez_compressed(trace_path, states=trace.states,
                                proposals=trace.proposals,
                                proposal_means=trace.proposal_means,
                                alphas=trace.alphas, accepted=trace.accepted)
            sidecar = trace.sidecar()
            sidecar.pop("sampling_seconds")
            with open(str(trace_path) + ".json", "w") as fh:
                json.dump(sidecar, fh, indent=2)
    bundle.manifest["sampling_seconds"] = timings
    _write_table(bundle, "trace_summary",
                 "chain,seed,gamma_final,accept_rate,ess_min,ess_median,ess_max",
                 np.asarray(summary_rows))
    _write_table(bundle, "ess", "chain,component,ess", np.asarray(ess_rows))
    bundle.finalize()
    return bundle


def cmd_compare(cfg: ExperimentConfig, out_dir, extended: bool = False) -> ResultBundle:
    if len(cfg.samplers) < 2:
        raise ConfigError("samplers: compare needs at least two samplers")
    bundle = _new_bundle(out_dir, "compare", cfg)
    tinfo = build_target(cfg, extended=extended)
    seeds = cfg.seed_list(cfg.repeats)

    rows = []
    names = []
    cache = {}   # identical sampler specs share one run and one row
    for s_cfg in cfg.samplers:
        key = json.dumps(s_cfg, sort_keys=True)
        if key not in cache:
            per_seed = []
            for seed in seeds:
                trace = run_sampler(tinfo, s_cfg, cfg.n_burnin, cfg.n_samples, seed)
                rep = diagnostics.ess_report(trace.states, trace.sampling_seconds)
                per_seed.append([trace.sampling_seconds, rep.ess_min,
                                 rep.ess_median, rep.ess_max,
                                 rep.min_ess_per_second])
            cache[key] = np.mean(per_seed, axis=0)
        names.append(s_cfg["kind"])
        rows.append(cache[key])
    rows = np.asarray(rows)
    path = bundle.out_dir / "compare.csv"
    with open(path, "w") as fh:
        fh.write("method,time_s,ess_min,ess_median,ess_max,min_ess_per_s\n")
        for name, row in zip(names, rows):
            fh.write(f"{name},{row[0]:.6g},{row[1]:.6g},{row[2]:.6g},"
                     f"{row[3]:.6g},{row[4]:.6g}\n")
    bundle.manifest.setdefault("files", []).append(
        {"name": "compare", "path": "compare.csv", "header": True,
         "string_columns": [0]})
    print(f"{'Method':<12}{'Time(s)':>10}{'ESS min':>12}{'ESS med':>12}"
          f"{'ESS max':>12}{'MinESS/s':>12}")
    for name, row in zip(names, rows):
        print(f"{name:<12}{row[0]:>10.2f}{row[1]:>12.1f}{row[2]:>12.1f}"
              f"{row[3]:>12.1f}{row[4]:>12.2f}")
    bundle.finalize()
    return bundle


def cmd_variance_reduction(cfg: ExperimentConfig, out_dir,
                           extended: bool = False,
                           threads: Optional[int] = None) -> ResultBundle:
    if cfg.estimator is None:
        raise ConfigError("estimator: required for variance-reduction")
    if cfg.repeats < 2:
        raise ConfigError("repeats: variance-reduction needs at least 2")
    bundle = _new_bundle(out_dir, "variance-reduction", cfg)
    tinfo = build_target(cfg, extended=extended)
    s_cfg = cfg.samplers[0]
    est = cfg.estimator
    keep_burnin = est["fit"] == "burnin"

    def experiment(seed: int):
        trace = run_sampler(tinfo, s_cfg, cfg.n_burnin, cfg.n_samples, seed,
                            keep_burnin=keep_burnin)
        f_vals, solution, cov = build_estimation(tinfo, est, s_cfg, trace)
        report = poisson_cv.cv_estimator(trace, f_vals, solution, cov=cov,
                                         split=bool(est.get("split", False)))
        return report.plain, report.cv

    workers = cfg.threads if threads is None else threads
    vr = diagnostics.variance_ratio(experiment, cfg.repeats, seed=cfg.seed,
                                    max_workers=workers)
    path = bundle.out_dir / "variance_ratio.csv"
    vr.to_csv(path)
    bundle.add_csv("variance_ratio", path)
    bundle.manifest["repeats"] = vr.repeats
    bundle.manifest["failures"] = vr.failures

    # one representative run for the coefficient report
    trace = run_sampler(tinfo, s_cfg, cfg.n_burnin, cfg.n_samples, cfg.seed,
                        keep_burnin=keep_burnin)
    f_vals, solution, cov = build_estimation(tinfo, est, s_cfg, trace)
    rep = poisson_cv.cv_estimator(trace, f_vals, solution, cov=cov,
                                  split=bool(est.get("split", False)))
    path = bundle.out_dir / "estimator.csv"
    rep.to_csv(path)
    bundle.add_csv("estimator", path)

    print(f"variance ratios over {vr.repeats} repeats "
          f"({vr.failures} failed): min {vr.ratio.min():.3g} "
          f"median {np.median(vr.ratio):.3g} max {vr.ratio.max():.3g}")
    bundle.finalize()
    return bundle


def cmd_scaling(cfg: ExperimentConfig, out_dir) -> ResultBundle:
    if cfg.scaling is None:
        raise ConfigError("scaling: required for the scaling command")
    sc = cfg.scaling
    if len(sc["eps_grid"]) == 0 or len(sc["d_grid"]) == 0:
        raise ConfigError("scaling: eps_grid and d_grid must be non-empty")
    bundle = _new_bundle(out_dir, "scaling", cfg)
    try:
        curve = scaling.scaling_curve(sc["eps_grid"], sc["d_grid"], K=sc["K"],
                                      M=sc["M"], kappa=sc["kappa"])
    except ValueError as exc:
        raise ConfigError(f"scaling.M: {exc}") from exc
    path = bundle.out_dir / "scaling_curve.csv"
    curve.to_csv(path)
    bundle.add_csv("scaling_curve", path)
    bundle.finalize()
    return bundle


def cmd_simulate_cox(grid_size: int, sigma2: float, beta: float,
                     mean_count: float, seed: int, out_dir) -> ResultBundle:
    if not 8 <= grid_size <= 64:
        raise ConfigError("--grid-size: must lie in [8, 64]")
    bundle = _new_bundle(out_dir, "simulate-cox", None)
    sim = datasets.simulate_cox(grid_size, sigma2=sigma2, beta=beta,
                                mean_count=mean_count, seed=seed)
    files = datasets.write_cox_dataset(bundle.out_dir, sim)
    for name, path in files.items():
        bundle.add_csv(f"cox_{name}", Path(path), header=False)
    bundle.manifest["simulation"] = {
        "grid_size": grid_size, "sigma2": sigma2, "beta": beta,
        "mean_count": mean_count, "seed": seed,
        "offset": sim["offset"], "cell_area": sim["cell_area"],
        "total_count": float(sim["counts"].sum()),
    }
    bundle.finalize()
    print(f"simulated {grid_size}x{grid_size} grid "
          f"(d={grid_size * grid_size}), total count "
          f"{int(sim['counts'].sum())}")
    return bundle


def cmd_datasets(out_dir) -> ResultBundle:
    bundle = _new_bundle(out_dir, "datasets", None)
    rows = []
    print(f"{'dataset':<12}{'rows':>8}{'covariates':>12}")
    for name, (n, p) in datasets.available_datasets().items():
        X, y = datasets.load_dataset(name)
        dest = bundle.out_dir / f"{name}.csv"
        shutil.copyfile(datasets.dataset_path(name), dest)
        bundle.add_csv(name, dest, header=False)
        rows.append([n, p, int(y.sum())])
        print(f"{name:<12}{n:>8}{p:>12}")
    bundle.finalize()
    return bundle


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True):
    parser.add_argument("--config", required=config_required,
                        help="YAML or JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=None, help="override base seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for independent repeats")
    parser.add_argument("--extended", action="store_true",
                        help="run the full-size (paper-scale) variant")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    return cfg


def _out_dir(args, cfg: Optional[ExperimentConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path("results")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gimcmc",
                                     description="Gaussian-invariant MCMC harness")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("sample", "compare", "variance-reduction", "scaling"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("simulate-cox")
    p.add_argument("--grid-size", type=int, default=16)
    p.add_argument("--sigma2", type=float, default=1.91)
    p.add_argument("--beta", type=float, default=1.0 / 33.0)
    p.add_argument("--mean-count", type=float, default=126.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--extended", action="store_true")

    p = sub.add_parser("datasets")
    p.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "sample":
            cfg = _load(args)
            cmd_sample(cfg, _out_dir(args, cfg), extended=args.extended)
        elif args.command == "compare":
            cfg = _load(args)
            cmd_compare(cfg, _out_dir(args, cfg), extended=args.extended)
        elif args.command == "variance-reduction":
            cfg = _load(args)
            cmd_variance_reduction(cfg, _out_dir(args, cfg),
                                   extended=args.extended)
        elif args.command == "scaling":
            cfg = _load(args)
            cmd_scaling(cfg, _out_dir(args, cfg))
        elif args.command == "simulate-cox":
            grid = 64 if args.extended else args.grid_size
            cmd_simulate_cox(grid, args.sigma2, args.beta, args.mean_count,
                             args.seed, _out_dir(args, None))
        elif args.command == "datasets":
            cmd_datasets(_out_dir(args, None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
