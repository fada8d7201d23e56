"""Command-line front end binding configuration files to the pipeline
stages.

Stages write their artifacts plus a manifest into --out; later stages
read the earlier artifacts through the manifest. Exit codes: 0 success,
2 configuration/validation error, 3 numerical failure, 4 data error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, figures, inference, outputs
from . import experiment as ex
from .config import ExperimentConfig, derive_seeds, load_config
from .errors import ConfigError, DataError, HygroError, NumericalError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DATA = 4

STAGE_REQUIRES = {
    "basis": None,
    "forward": "basis",
    "observe": "basis",
    "infer": "observe",
    "summarize": "infer",
}


def _resolve_config(args) -> ExperimentConfig:
    """Configuration for this stage; later stages inherit the manifest's."""
    manifest_path = Path(args.out) / outputs.MANIFEST_NAME
    cli_given = args.config is not None or args.preset is not None or args.seed is not None
    if manifest_path.exists() and STAGE_REQUIRES.get(args.stage):
        manifest = outputs.load_manifest(args.out)
        cfg = ExperimentConfig.from_dict(manifest["config"])
        if cli_given:
            override = load_config(args.config, args.preset, args.seed)
            if override.to_dict() != cfg.to_dict():
                raise ConfigError(
                    "stage configuration differs from the manifest in "
                    f"{args.out}; rerun earlier stages or drop the flags"
                )
        return cfg
    return load_config(args.config, args.preset, args.seed)


def _check_stage_order(args) -> None:
    required = STAGE_REQUIRES[args.stage]
    if required is None:
        return
    try:
        manifest = outputs.load_manifest(args.out)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    if required not in manifest.get("stages", {}):
        raise ConfigError(
            f"stage {args.stage!r} requires stage {required!r} to have run in {args.out}"
        )


def cmd_basis(args) -> int:
    cfg = _resolve_config(args)
    t0 = time.perf_counter()
    setup = ex.setup_experiment(cfg)
    files = outputs.write_eigenpairs(args.out, setup.basis_full)
    files.append(outputs.write_energy_report(args.out, setup.basis_full, cfg.n_modes))
    outputs.update_manifest(
        args.out, "basis", files, time.perf_counter() - t0,
        cfg, derive_seeds(cfg.seed), __version__, config_path=args.config,
    )
    print(f"basis: {setup.basis_full.M} eigenpairs on {setup.mesh.n_elements} elements, "
          f"{cfg.n_modes}-mode energy fraction "
          f"{setup.basis_full.energy_fraction(cfg.n_modes):.4f}")
    return 0


def cmd_forward(args) -> int:
    cfg = _resolve_config(args)
    _check_stage_order(args)
    latent_path = Path(args.latent)
    if not latent_path.exists():
        raise ConfigError(f"latent vector file not found: {latent_path}")
    try:
        xi = np.loadtxt(latent_path, delimiter=",", ndmin=1)
    except ValueError as exc:
        raise DataError(f"cannot parse latent vector file: {exc}") from exc
    setup = ex.setup_experiment(cfg)
    if xi.shape != (setup.n_latent,):
        raise ConfigError(
            f"latent vector must have length {setup.n_latent}, got {xi.shape}"
        )
    t0 = time.perf_counter()
    fields = ex.realize_fields(setup, xi)
    trajectory = ex.forward_trajectory(setup, fields)
    elapsed = time.perf_counter() - t0
    files = outputs.write_trajectory(args.out, setup.mesh, trajectory)
    files.append(outputs.write_field_table(
        Path(args.out) / "fields_latent.csv", setup.mesh, fields.as_dict()
    ))
    outputs.update_manifest(
        args.out, "forward", files, elapsed, cfg, derive_seeds(cfg.seed),
        __version__, config_path=args.config,
    )
    print(f"forward: one simulation took {elapsed:.2f} s "
          f"({trajectory.n_snapshots} snapshots recorded)")
    return 0


def cmd_observe(args) -> int:
    cfg = _resolve_config(args)
    _check_stage_order(args)
    seeds = derive_seeds(cfg.seed)
    t0 = time.perf_counter()
    setup = ex.setup_experiment(cfg)
    rng_ref = np.random.default_rng(seeds["reference"])
    xi_ref = rng_ref.standard_normal(ex.W_PARAMS + setup.basis_full.M)
    discrepancy = None
    if cfg.discrepancy_draws > 0:
        discrepancy = ex.truncation_discrepancy(setup, seeds["discrepancy"], cfg.discrepancy_draws)
    obs, reference = ex.synthesize_observations(setup, xi_ref, seeds["noise"], discrepancy)
    files = outputs.write_observations(args.out, setup, obs, reference, discrepancy)
    outputs.update_manifest(
        args.out, "observe", files, time.perf_counter() - t0, cfg, seeds,
        __version__, config_path=args.config,
    )
    print(f"observe: {obs.n_values} values from {setup.sensors.shape[0]} sensors "
          f"at {setup.measurement_times_s.size} times, {cfg.n_replicates} replicates")
    return 0


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    _check_stage_order(args)
    seeds = derive_seeds(cfg.seed)
    t0 = time.perf_counter()
    setup = ex.setup_experiment(cfg)
    obs, _ = outputs.load_observations(args.out, setup)

    def log_density(xi):
        return inference.log_posterior(
            xi, obs, lambda v: ex.predict(setup, v), cfg.likelihood_weight
        )

    init = np.zeros(setup.n_latent)
    if cfg.map_init and cfg.likelihood_weight != 0.0:
        init = ex.optimize_start(log_density, init, cfg.map_maxfun)
    if cfg.proposal_scale is not None:
        scale, start = cfg.proposal_scale, init
    else:
        scale, start = inference.tune_proposal_scale(
            log_density, init, seeds["tuning"], n_warmup=cfg.n_warmup
        )
    progress = args.progress_every if args.progress_every is not None else cfg.progress_every
    chain = inference.metropolis_hastings(
        log_density, start, cfg.n_samples, scale, seeds["chain"], progress_every=progress,
    )
    burn = int(cfg.burn_in_fraction * len(chain))
    files = [outputs.write_chain(Path(args.out) / "chain.csv", chain)]
    files.append(outputs.write_json(
        Path(args.out) / "diagnostics.json", inference.chain_diagnostics(chain, burn)
    ))
    outputs.update_manifest(
        args.out, "infer", files, time.perf_counter() - t0, cfg, seeds,
        __version__, config_path=args.config,
    )
    print(f"infer: {len(chain)} samples, acceptance {chain.acceptance_rate:.3f}, "
          f"proposal scale {chain.proposal_scale:.4g}")
    return 0


def cmd_summarize(args) -> int:
    cfg = _resolve_config(args)
    _check_stage_order(args)
    seeds = derive_seeds(cfg.seed)
    t0 = time.perf_counter()
    setup = ex.setup_experiment(cfg)
    manifest = outputs.load_manifest(args.out)
    chain = outputs.load_chain(Path(args.out) / "chain.csv")
    ref_fields, ref_response, probe_var = outputs.load_reference_view(args.out, setup)
    summary = ex.summarize_posterior(
        setup, chain, ref_fields, ref_response, seeds["prior"],
        threads=args.threads,
        probe_variance=probe_var if cfg.discrepancy_draws > 0 else None,
    )
    burn = int(cfg.burn_in_fraction * len(chain))
    files = outputs.write_field_summaries(args.out, setup.mesh, summary)
    files += outputs.write_envelopes(args.out, setup, summary)
    metrics = outputs.summary_metrics(summary, inference.chain_diagnostics(chain, burn))
    files.append(outputs.write_json(Path(args.out) / "summary.json", metrics))
    files += figures.render_report(args.out, setup.mesh, setup.basis_full, chain, summary, burn)
    outputs.update_manifest(
        args.out, "summarize", files, time.perf_counter() - t0, cfg, seeds,
        __version__, config_path=args.config,
    )
    print(f"summarize: lambda_0 RMSE ratio "
          f"{metrics['rmse_ratio_lambda_0']:.3f}, response coverage "
          f"{metrics['response_coverage']:.3f}")
    return 0


def cmd_pipeline(args) -> int:
    for stage in ("basis", "observe", "infer", "summarize"):
        stage_args = argparse.Namespace(**vars(args))
        stage_args.stage = stage
        rc = STAGE_COMMANDS[stage](stage_args)
        if rc != 0:
            return rc
    return 0


STAGE_COMMANDS = {
    "basis": cmd_basis,
    "forward": cmd_forward,
    "observe": cmd_observe,
    "infer": cmd_infer,
    "summarize": cmd_summarize,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hygrobayes",
        description="Bayesian updating of heterogeneous material fields in "
                    "coupled heat and moisture transport",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file overriding the preset")
        p.add_argument("--preset", choices=("paper-full", "paper-desk"),
                       help="named base configuration")
        p.add_argument("--out", required=True, help="artifact output directory")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for summary replays")

    p = sub.add_parser("basis", help="eigenexpansion of the covariance grid")
    common(p)
    p = sub.add_parser("forward", help="one forward solve from a latent vector file")
    common(p)
    p.add_argument("--latent", required=True, help="CSV file with the latent vector")
    p = sub.add_parser("observe", help="synthesize the virtual measurements")
    common(p)
    p = sub.add_parser("infer", help="sample the posterior")
    common(p)
    p.add_argument("--progress-every", type=int, default=None,
                   help="stream progress to stderr every N steps")
    p = sub.add_parser("summarize", help="posterior summaries, envelopes and figures")
    common(p)
    p = sub.add_parser("pipeline", help="run basis, observe, infer and summarize")
    common(p)
    p.add_argument("--progress-every", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "progress_every"):
        args.progress_every = None
    try:
        return STAGE_COMMANDS[args.stage](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HygroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
