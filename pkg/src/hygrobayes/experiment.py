"""Virtual-experiment orchestration: reference realization, noisy
observation synthesis, posterior sampling and posterior summaries.

The reference ("truth") realization always uses the full eigenbasis of
the covariance grid; inference runs on the truncated basis, so the data
contain fluctuations the inferred fields cannot represent, exactly as a
real measurement would.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fem, inference, randfield
from .config import ExperimentConfig, HOUR, derive_seeds
from .errors import ConfigError, NumericalError
from .material import PARAMETER_ORDER
from .mesh import Mesh, build_mesh, locate_points
from .randfield import (
    CovarianceSpec,
    KLEBasis,
    LatentVector,
    ParameterFields,
    assemble_covariance_matrix,
    realize_parameter_fields,
    solve_kle,
)

logger = logging.getLogger(__name__)

W_PARAMS = len(PARAMETER_ORDER)


@dataclass
class ExperimentSetup:
    """Everything the pipeline derives once from a configuration."""

    config: ExperimentConfig
    mesh: Mesh
    basis_full: KLEBasis
    basis: KLEBasis
    moments: dict[str, randfield.LognormalMoments]
    sensors: np.ndarray            # (n_sensors, 2)
    sensor_elements: np.ndarray
    sensor_weights: np.ndarray     # (n_sensors, 3)
    measurement_times_s: np.ndarray
    record_times_s: np.ndarray
    solver: fem.SolverConfig

    @property
    def n_latent(self) -> int:
        return W_PARAMS + self.basis.M


def setup_experiment(config: ExperimentConfig) -> ExperimentSetup:
    mesh = build_mesh(config.width_m, config.height_m, config.nx, config.ny)
    cov = assemble_covariance_matrix(
        mesh.centroids, CovarianceSpec(config.l_x1_m, config.l_x2_m)
    )
    basis_full = solve_kle(cov, mesh.n_elements, grid=mesh.centroids)
    if config.n_modes > mesh.n_elements:
        raise ConfigError(
            f"n_modes={config.n_modes} exceeds the {mesh.n_elements}-point grid"
        )
    basis = basis_full.truncate(config.n_modes)
    moments = {
        name: randfield.moments_to_gaussian(*config.prior[name])
        for name in PARAMETER_ORDER
    }

    ys = config.height_m * (np.arange(config.sensors_per_column) + 1.0) / (
        config.sensors_per_column + 1.0
    )
    sensors = np.array(
        [(c * config.width_m, y) for c in config.sensor_columns for y in ys]
    )
    sensor_elements, sensor_weights = locate_points(mesh, sensors)

    measurement_times_s = np.asarray(config.measurement_times_h, dtype=float) * HOUR
    grid = np.arange(0.0, config.t_end_h + 1e-12, config.record_every_h) * HOUR
    record_times_s = np.unique(np.concatenate([grid, measurement_times_s]))

    solver = fem.SolverConfig(
        dt=config.dt_h * HOUR,
        t_end=config.t_end_h * HOUR,
        picard_tol=config.picard_tol,
        picard_max=config.picard_max,
    )
    return ExperimentSetup(
        config,
        mesh,
        basis_full,
        basis,
        moments,
        sensors,
        sensor_elements,
        sensor_weights,
        measurement_times_s,
        record_times_s,
        solver,
    )


def initial_state(setup: ExperimentSetup) -> fem.SimState:
    """Uniform initial state with the loading applied to the edges."""
    c = setup.config
    n = setup.mesh.n_nodes
    state = fem.SimState(
        np.full(n, c.theta_initial_c), np.full(n, c.phi_initial), 0.0
    )
    return fem.apply_boundary_values(
        setup.mesh, state, c.theta_exterior_c, c.phi_exterior,
        c.theta_interior_c, c.phi_interior,
    )


def forward_trajectory(
    setup: ExperimentSetup, fields: ParameterFields, record_times=None
) -> fem.Trajectory:
    # One canonical record grid everywhere: record times clip individual
    # steps, so reference and prediction runs must share the grid to see
    # bit-identical time stepping.
    times = setup.record_times_s if record_times is None else record_times
    return fem.solve(setup.mesh, fields, initial_state(setup), setup.solver, times)


def _interp_snapshots(traj: fem.Trajectory, times) -> tuple[np.ndarray, np.ndarray]:
    """Linear-in-time interpolation of the nodal fields, (nt, N) each."""
    times = np.asarray(times, dtype=float)
    if times.min() < traj.times[0] - 1e-9 or times.max() > traj.times[-1] + 1e-9:
        raise ConfigError("requested times outside the recorded trajectory")
    idx = np.clip(np.searchsorted(traj.times, times), 1, traj.times.size - 1)
    t0, t1 = traj.times[idx - 1], traj.times[idx]
    w = np.where(t1 > t0, (times - t0) / np.where(t1 > t0, t1 - t0, 1.0), 0.0)
    theta = (1 - w)[:, None] * traj.theta[idx - 1] + w[:, None] * traj.theta[idx]
    phi = (1 - w)[:, None] * traj.phi[idx - 1] + w[:, None] * traj.phi[idx]
    return theta, phi


def _sensor_values(mesh: Mesh, nodal: np.ndarray, elements, weights) -> np.ndarray:
    """Barycentric interpolation of (nt, N) nodal data at sensors -> (nt, ns)."""
    tri = mesh.elements[elements]              # (ns, 3)
    return np.einsum("tsk,sk->ts", nodal[:, tri], weights)


def observation_operator(mesh: Mesh, trajectory: fem.Trajectory, sensors, times) -> np.ndarray:
    """Predicted observation vector in the canonical layout.

    Layout: index = (time_idx * n_sensors + sensor_idx) * 2 + field_idx,
    with field 0 = temperature, field 1 = moisture. Linear interpolation
    in space (barycentric in the containing triangle) and in time.
    """
    elements, weights = locate_points(mesh, sensors)
    theta, phi = _interp_snapshots(trajectory, times)
    th = _sensor_values(mesh, theta, elements, weights)   # (nt, ns)
    ph = _sensor_values(mesh, phi, elements, weights)
    return np.stack([th, ph], axis=2).ravel()


def _observe(setup: ExperimentSetup, trajectory: fem.Trajectory) -> np.ndarray:
    """observation_operator with the setup's precomputed sensor weights."""
    theta, phi = _interp_snapshots(trajectory, setup.measurement_times_s)
    th = _sensor_values(setup.mesh, theta, setup.sensor_elements, setup.sensor_weights)
    ph = _sensor_values(setup.mesh, phi, setup.sensor_elements, setup.sensor_weights)
    return np.stack([th, ph], axis=2).ravel()


def probe_series(setup: ExperimentSetup, trajectory: fem.Trajectory) -> np.ndarray:
    """Sensor-point responses over all snapshots, (nt, n_sensors, 2)."""
    th = _sensor_values(setup.mesh, trajectory.theta, setup.sensor_elements, setup.sensor_weights)
    ph = _sensor_values(setup.mesh, trajectory.phi, setup.sensor_elements, setup.sensor_weights)
    return np.stack([th, ph], axis=2)


def realize_fields(setup: ExperimentSetup, xi: np.ndarray, full_basis: bool = False) -> ParameterFields:
    basis = setup.basis_full if full_basis else setup.basis
    return realize_parameter_fields(
        basis, setup.moments, LatentVector(xi, n_modes=basis.M)
    )


def predict(setup: ExperimentSetup, xi: np.ndarray) -> np.ndarray:
    """Forward map of the inference: latent vector -> observation vector."""
    fields = realize_fields(setup, xi)
    return _observe(setup, forward_trajectory(setup, fields))


@dataclass(frozen=True)
class Reference:
    """The truth realization behind the virtual experiment."""

    xi: np.ndarray
    fields: ParameterFields
    trajectory: fem.Trajectory
    z_clean: np.ndarray


@dataclass(frozen=True)
class DiscrepancyModel:
    """Variance allowance for the truncated forward model.

    obs_variance: per observation entry (n_times * n_sensors * 2,)
    probe_variance: per (record time, field), pooled over sensors
    """

    obs_variance: np.ndarray
    probe_variance: np.ndarray


def truncation_discrepancy(setup: ExperimentSetup, seed: int, n_draws: int) -> DiscrepancyModel:
    """Estimate the truncated model's representation error at the sensors.

    For a handful of seeded prior draws, compares the response of the
    full-basis realization with its truncation to the inference basis
    (same latent coordinates), and pools the squared differences per
    (time, field) group. A truncated model cannot reproduce the
    unresolved fluctuations' imprint on the data; ignoring that yields
    an overconfident posterior.
    """
    n_sensors = setup.sensors.shape[0]
    zeros = DiscrepancyModel(
        np.zeros(setup.measurement_times_s.size * n_sensors * 2),
        np.zeros((setup.record_times_s.size, 2)),
    )
    if n_draws < 1:
        return zeros
    rng = np.random.default_rng(seed)
    z_diffs, probe_diffs = [], []
    attempts = 0
    while len(z_diffs) < n_draws and attempts < 3 * n_draws:
        attempts += 1
        xi_full = rng.standard_normal(W_PARAMS + setup.basis_full.M)
        xi_trunc = xi_full[: W_PARAMS + setup.basis.M]
        try:
            traj_full = forward_trajectory(setup, realize_fields(setup, xi_full, full_basis=True))
            traj_trunc = forward_trajectory(setup, realize_fields(setup, xi_trunc))
        except NumericalError:
            continue
        z_diffs.append(_observe(setup, traj_full) - _observe(setup, traj_trunc))
        probe_diffs.append(probe_series(setup, traj_full) - probe_series(setup, traj_trunc))
    if not z_diffs:
        return zeros
    sq = np.asarray(z_diffs) ** 2                            # (K, 84)
    grouped = sq.reshape(len(z_diffs), setup.measurement_times_s.size, n_sensors, 2)
    var_tf = grouped.mean(axis=(0, 2))                       # (n_times, 2)
    obs_variance = np.repeat(var_tf[:, None, :], n_sensors, axis=1).ravel()
    probe_variance = (np.asarray(probe_diffs) ** 2).mean(axis=(0, 2))  # (nt, 2)
    return DiscrepancyModel(obs_variance, probe_variance)


def synthesize_observations(
    setup: ExperimentSetup,
    xi_ref: np.ndarray,
    noise_seed: int,
    discrepancy: DiscrepancyModel | None = None,
) -> tuple[inference.ObservationSet, Reference]:
    """Noisy replicate measurements of the full-basis reference run.

    The observation set carries the replicate mean as data vector and a
    conditioned covariance: shrunk empirical replicate covariance plus
    the truncation-discrepancy allowance.
    """
    c = setup.config
    fields = realize_fields(setup, xi_ref, full_basis=True)
    trajectory = forward_trajectory(setup, fields)
    z_clean = _observe(setup, trajectory)

    n_sensors = setup.sensors.shape[0]
    sigma = np.tile([c.sigma_theta_c, c.sigma_phi], setup.measurement_times_s.size * n_sensors)
    rng = np.random.default_rng(noise_seed)
    replicates = z_clean + sigma * rng.standard_normal((c.n_replicates, z_clean.size))
    z = replicates.mean(axis=0)
    cov = inference.regularize_covariance(
        np.cov(replicates, rowvar=False), shrinkage=c.cov_shrinkage
    )
    if discrepancy is not None:
        cov = cov + c.discrepancy_factor * np.diag(discrepancy.obs_variance)
    obs = inference.ObservationSet(setup.sensors, setup.measurement_times_s, z, cov)
    return obs, Reference(np.asarray(xi_ref, dtype=float), fields, trajectory, z_clean)


@dataclass(frozen=True)
class FieldErrors:
    rmse: float
    mare: float  # mean absolute relative error


def field_error_summary(field_samples, reference) -> FieldErrors:
    """Errors of the sample-mean field against a reference field."""
    samples = np.atleast_2d(np.asarray(field_samples, dtype=float))
    reference = np.asarray(reference, dtype=float)
    mean_field = samples.mean(axis=0)
    rmse = float(np.sqrt(np.mean((mean_field - reference) ** 2)))
    mare = float(np.mean(np.abs(mean_field - reference) / reference))
    return FieldErrors(rmse, mare)


@dataclass
class PosteriorSummary:
    """Posterior field statistics, response envelopes and error metrics."""

    parameter_names: tuple
    field_mean: dict[str, np.ndarray]
    field_q05: dict[str, np.ndarray]
    field_q50: dict[str, np.ndarray]
    field_q95: dict[str, np.ndarray]
    prior_field_mean: dict[str, np.ndarray]
    reference_fields: dict[str, np.ndarray]
    field_errors: dict[str, dict[str, FieldErrors]]
    probe_times_s: np.ndarray
    sensors: np.ndarray
    response_mean: np.ndarray      # (nt, ns, 2)
    response_q05: np.ndarray
    response_q95: np.ndarray
    prior_response_mean: np.ndarray
    prior_response_q05: np.ndarray
    prior_response_q95: np.ndarray
    reference_response: np.ndarray
    band_margin: np.ndarray        # (nt, 2) model-error widening per field
    coverage: float
    band_width: float
    prior_band_width: float
    n_posterior_responses: int
    n_prior_responses: int
    n_prior_skipped: int
    latent_mean: np.ndarray
    latent_std: np.ndarray


def _response_stack(setup, latents, threads: int = 1) -> np.ndarray:
    """Probe responses for a stack of latent vectors, (S, nt, ns, 2)."""

    def one(xi):
        traj = forward_trajectory(setup, realize_fields(setup, xi))
        return probe_series(setup, traj)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.stack(list(pool.map(one, latents)))
    return np.stack([one(xi) for xi in latents])


def summarize_posterior(
    setup: ExperimentSetup,
    chain: inference.Chain,
    reference_fields,
    reference_response: np.ndarray,
    prior_seed: int,
    threads: int = 1,
    probe_variance: np.ndarray | None = None,
) -> PosteriorSummary:
    """Posterior field statistics, envelopes and errors vs the reference.

    reference_fields: mapping parameter name -> per-element reference
    values; reference_response: (nt, ns, 2) probe series of the truth
    run; probe_variance: optional (nt, 2) model-error allowance used to
    widen the response bands into predictive bands.
    """
    c = setup.config
    burn = int(c.burn_in_fraction * len(chain))
    kept = chain.samples[burn:]
    thin = max(1, kept.shape[0] // c.n_response_samples)
    thinned = kept[::thin][: c.n_response_samples]

    # per-parameter field statistics over the retained samples
    field_stack = {name: [] for name in PARAMETER_ORDER}
    for xi in thinned:
        f = realize_fields(setup, xi)
        for name in PARAMETER_ORDER:
            field_stack[name].append(getattr(f, name))
    field_stack = {k: np.asarray(v) for k, v in field_stack.items()}

    # prior draws on the same latent space (fields always realizable;
    # only the forward replays below can fail)
    rng = np.random.default_rng(prior_seed)
    prior_latents = rng.standard_normal((c.n_prior_samples, setup.n_latent))
    prior_fields = {name: [] for name in PARAMETER_ORDER}
    for xi in prior_latents:
        f = realize_fields(setup, xi)
        for name in PARAMETER_ORDER:
            prior_fields[name].append(getattr(f, name))
    prior_fields = {k: np.asarray(v) for k, v in prior_fields.items()}

    field_errors = {
        name: {
            "posterior": field_error_summary(field_stack[name], reference_fields[name]),
            "prior": field_error_summary(prior_fields[name], reference_fields[name]),
        }
        for name in PARAMETER_ORDER
    }

    # response envelopes: replay the thinned posterior and the prior draws
    post_resp = _response_stack(setup, thinned, threads)
    prior_resp_list, n_prior_skipped = [], 0
    for xi in prior_latents:
        try:
            prior_resp_list.append(
                probe_series(setup, forward_trajectory(setup, realize_fields(setup, xi)))
            )
        except NumericalError as exc:
            n_prior_skipped += 1
            logger.warning("prior response replay failed, skipping draw: %s", exc)
    prior_resp = np.stack(prior_resp_list)

    # predictive bands: the sample quantiles widened by the model-error
    # allowance the likelihood already acknowledges (z such that
    # P(|N(0,1)| < z) = 0.9, matching the 5-95% band)
    margin = np.zeros((setup.record_times_s.size, 1, 2))
    if probe_variance is not None:
        margin = 1.6448536269514722 * np.sqrt(
            c.discrepancy_factor * np.asarray(probe_variance)
        )[:, None, :]
    q05, q95 = np.quantile(post_resp, [0.05, 0.95], axis=0)
    p05, p95 = np.quantile(prior_resp, [0.05, 0.95], axis=0)
    q05, q95 = q05 - margin, q95 + margin
    p05, p95 = p05 - margin, p95 + margin
    covered = (reference_response >= q05) & (reference_response <= q95)

    return PosteriorSummary(
        parameter_names=PARAMETER_ORDER,
        field_mean={k: v.mean(axis=0) for k, v in field_stack.items()},
        field_q05={k: np.quantile(v, 0.05, axis=0) for k, v in field_stack.items()},
        field_q50={k: np.quantile(v, 0.50, axis=0) for k, v in field_stack.items()},
        field_q95={k: np.quantile(v, 0.95, axis=0) for k, v in field_stack.items()},
        prior_field_mean={k: v.mean(axis=0) for k, v in prior_fields.items()},
        reference_fields=dict(reference_fields),
        field_errors=field_errors,
        probe_times_s=setup.record_times_s,
        sensors=setup.sensors,
        response_mean=post_resp.mean(axis=0),
        response_q05=q05,
        response_q95=q95,
        prior_response_mean=prior_resp.mean(axis=0),
        prior_response_q05=p05,
        prior_response_q95=p95,
        reference_response=reference_response,
        band_margin=margin[:, 0, :],
        coverage=float(np.mean(covered)),
        band_width=float(np.mean(q95 - q05)),
        prior_band_width=float(np.mean(p95 - p05)),
        n_posterior_responses=post_resp.shape[0],
        n_prior_responses=prior_resp.shape[0],
        n_prior_skipped=n_prior_skipped,
        latent_mean=kept.mean(axis=0),
        latent_std=kept.std(axis=0, ddof=1) if kept.shape[0] > 1 else np.zeros(setup.n_latent),
    )


def optimize_start(log_density, init: np.ndarray, maxfun: int) -> np.ndarray:
    """Deterministic ascent of the log density to seed the chain.

    Random-walk proposals travel far too slowly to reach a sharp
    posterior mode from the prior mean within a desk-scale chain, so the
    burn-in starts from a quasi-Newton estimate of the mode instead.
    """
    from scipy.optimize import minimize

    def objective(xi):
        v = log_density(xi)
        return -v if np.isfinite(v) else 1e30

    res = minimize(
        objective, init, method="L-BFGS-B", options={"maxfun": int(maxfun)}
    )
    return res.x if np.isfinite(objective(res.x)) else init


def run_experiment(
    config: ExperimentConfig, threads: int = 1
) -> tuple[inference.Chain, PosteriorSummary]:
    """End-to-end virtual experiment: synthesize data, sample, summarize."""
    setup = setup_experiment(config)
    seeds = derive_seeds(config.seed)

    rng_ref = np.random.default_rng(seeds["reference"])
    xi_ref = rng_ref.standard_normal(W_PARAMS + setup.basis_full.M)
    discrepancy = None
    if config.discrepancy_draws > 0:
        discrepancy = truncation_discrepancy(
            setup, seeds["discrepancy"], config.discrepancy_draws
        )
    obs, reference = synthesize_observations(setup, xi_ref, seeds["noise"], discrepancy)

    def log_density(xi):
        return inference.log_posterior(
            xi, obs, lambda v: predict(setup, v), config.likelihood_weight
        )

    init = np.zeros(setup.n_latent)
    if config.map_init and config.likelihood_weight != 0.0:
        init = optimize_start(log_density, init, config.map_maxfun)
    if config.proposal_scale is not None:
        scale, start = config.proposal_scale, init
    else:
        scale, start = inference.tune_proposal_scale(
            log_density, init, seeds["tuning"], n_warmup=config.n_warmup
        )
    chain = inference.metropolis_hastings(
        log_density,
        start,
        config.n_samples,
        scale,
        seeds["chain"],
        progress_every=config.progress_every,
    )
    summary = summarize_posterior(
        setup,
        chain,
        {k: getattr(reference.fields, k) for k in PARAMETER_ORDER},
        probe_series(setup, reference.trajectory),
        seeds["prior"],
        threads,
        discrepancy.probe_variance if discrepancy is not None else None,
    )
    return chain, summary
