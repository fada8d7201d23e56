"""Acceptance suite.

Each test prints one `[acceptance] criterion N: PASS/FAIL` line (run
with `pytest tests/test_acceptance.py -v -s` to see them live). The
desk-scale inference runs once as a session fixture through the real
CLI pipeline; the determinism criterion reruns it and compares bytes.
"""

import json
import time

import numpy as np
import pytest

from hygrobayes import experiment as ex
from hygrobayes import fem, inference
from hygrobayes.cli import main as cli_main
from hygrobayes.config import PRESETS
from hygrobayes.mesh import build_mesh
from hygrobayes.randfield import (
    CovarianceSpec,
    LatentVector,
    assemble_covariance_matrix,
    moments_to_gaussian,
    realize_parameter_fields,
    solve_kle,
)

TABLE = {
    "w_f": (200.0, 40.0), "w_80": (100.0, 10.0), "lambda_0": (0.3, 0.1),
    "b_tcs": (10.0, 2.0), "mu": (12.0, 5.0), "a": (0.6, 0.2),
    "c_s": (900.0, 100.0), "rho_s": (1650.0, 50.0),
}


def _report(n: int, ok: bool, detail: str):
    print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_moment_conversion():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for name, (mu_q, sigma_q) in TABLE.items():
        m = moments_to_gaussian(mu_q, sigma_q)
        draws = np.exp(m.mu_g + m.sigma_g * rng.standard_normal(1_000_000))
        worst = max(
            worst,
            abs(draws.mean() - mu_q) / mu_q,
            abs(draws.std(ddof=1) - sigma_q) / sigma_q,
        )
    elapsed = time.perf_counter() - t0
    ok = worst < 0.01 and elapsed < 5.0
    _report(1, ok, f"worst moment error {worst:.4%}, {elapsed:.2f} s")
    assert worst < 0.01
    assert elapsed < 5.0


def test_criterion_2_kle_correctness():
    mesh = build_mesh(0.5, 0.06, 11, 7)  # 120 elements -> 120-point grid
    assert mesh.n_elements == 120
    C = assemble_covariance_matrix(mesh.centroids, CovarianceSpec(0.1, 0.04))
    basis = solve_kle(C, 120, grid=mesh.centroids)
    recon = (basis.eigenvectors * basis.eigenvalues) @ basis.eigenvectors.T
    residual = np.linalg.norm(C - recon) / np.linalg.norm(C)
    positive = bool(np.all(basis.eigenvalues > 0.0))
    descending = bool(np.all(np.diff(basis.eigenvalues) <= 1e-12))
    ok = residual < 1e-8 and positive and descending
    _report(2, ok, f"reconstruction residual {residual:.2e}, "
                   f"positive={positive}, descending={descending}")
    assert residual < 1e-8
    assert positive and descending


def test_criterion_3_truncation_error_curves():
    t0 = time.perf_counter()
    setup = ex.setup_experiment(PRESETS["paper-desk"])
    n_full = setup.basis_full.M
    rng = np.random.default_rng(20250811)
    xis = rng.standard_normal((100, 8 + n_full))

    m = setup.moments["lambda_0"]
    sq = np.sqrt(setup.basis_full.eigenvalues)
    V = setup.basis_full.eigenvectors
    full_fields = np.exp(
        m.mu_g + m.sigma_g * (xis[:, 2][:, None] + xis[:, 8:] @ (sq[:, None] * V.T))
    )
    errors = []
    for M in range(1, 21):
        approx = np.exp(
            m.mu_g + m.sigma_g * (
                xis[:, 2][:, None] + xis[:, 8 : 8 + M] @ (sq[:M, None] * V[:, :M].T)
            )
        )
        errors.append(float(np.mean(np.abs(full_fields - approx) / full_fields)))
    errors = np.asarray(errors)
    slope = np.polyfit(np.arange(1, 21), errors, 1)[0]

    # response-field error at M=7, t = 200 h, desk mesh, 20 realizations
    t200 = 200.0 * 3600.0
    basis7 = setup.basis_full.truncate(7)
    resp_errors, k = [], 0
    while len(resp_errors) < 20 and k < xis.shape[0]:
        xi = xis[k]
        k += 1
        xi7 = np.concatenate([xi[:8], xi[8 : 8 + 7]])
        try:
            f_full = ex.realize_fields(setup, xi, full_basis=True)
            f7 = realize_parameter_fields(basis7, setup.moments, LatentVector(xi7, n_modes=7))
            tr_full = ex.forward_trajectory(setup, f_full, [t200])
            tr7 = ex.forward_trajectory(setup, f7, [t200])
        except Exception:
            continue  # draws outside the isotherm's validity are skipped
        e_th = np.abs(tr_full.theta[0] - tr7.theta[0]) / np.abs(tr_full.theta[0])
        e_ph = np.abs(tr_full.phi[0] - tr7.phi[0]) / np.abs(tr_full.phi[0])
        resp_errors.append(float(np.mean(np.concatenate([e_th, e_ph]))))
    response_error = float(np.mean(resp_errors))
    elapsed = time.perf_counter() - t0

    ok = slope <= 0.0 and response_error < errors[6] and elapsed < 600.0
    _report(3, ok, f"input slope {slope:.2e}, response error {response_error:.5f} "
                   f"< input error {errors[6]:.5f} at M=7, {elapsed:.1f} s")
    assert slope <= 0.0
    assert response_error < errors[6]
    assert elapsed < 600.0


def test_criterion_4_forward_solver_verification():
    # (a) frozen-coefficient conduction vs the analytic series
    from tests.test_fem import run_strip, strip_series

    t_final = 0.05
    mesh_c, theta_c = run_strip(nx=21, dt=2.5e-3, t_final=t_final)
    mesh_f, theta_f = run_strip(nx=41, dt=6.25e-4, t_final=t_final)
    err_c = np.max(np.abs(theta_c - strip_series(mesh_c.nodes[:, 0], t_final)))
    err_f = np.max(np.abs(theta_f - strip_series(mesh_f.nodes[:, 0], t_final)))

    # (b) equilibrium fixed point
    from tests.test_fem import PAPER_PARAMS

    mesh = build_mesh(0.5, 0.06, 10, 8)
    fields = fem.uniform_fields(PAPER_PARAMS, mesh.n_elements)
    n = mesh.n_nodes
    state = fem.SimState(np.full(n, 14.0), np.full(n, 0.6), 0.0)
    cfg = fem.SolverConfig(dt=3600.0, t_end=3600.0, picard_tol=1e-12)
    drift = float(
        max(
            np.max(np.abs(fem.step(mesh, fields, state, cfg).theta - 14.0)),
            np.max(np.abs(fem.step(mesh, fields, state, cfg).phi - 0.6)),
        )
    )

    # (c) steady-state boundary flux balance
    bc_state = fem.SimState(np.full(n, 14.0), np.full(n, 0.5), 0.0)
    bc_state = fem.apply_boundary_values(mesh, bc_state, 5.0, 0.5, 24.0, 0.8)
    long_cfg = fem.SolverConfig(dt=40 * 3600.0, t_end=4000 * 3600.0,
                                picard_tol=1e-13, picard_max=60)
    prev = bc_state
    while prev.t < long_cfg.t_end - 1.0:
        nxt = fem.step(mesh, fields, prev, long_cfg)
        if max(np.max(np.abs(nxt.theta - prev.theta)),
               np.max(np.abs(nxt.phi - prev.phi))) < 1e-11:
            prev = nxt
            break
        prev = nxt
    f_left, f_right = fem.boundary_heat_flux(mesh, fields, prev)
    imbalance = abs(f_left + f_right) / max(abs(f_left), abs(f_right))

    ok = err_f < 0.01 and err_f < err_c and drift < 1e-12 and imbalance < 1e-6
    _report(4, ok, f"series error {err_f:.2e} (coarse {err_c:.2e}), "
                   f"equilibrium drift {drift:.1e}, flux imbalance {imbalance:.1e}")
    assert err_f < 0.01
    assert err_f < err_c
    assert drift < 1e-12
    assert imbalance < 1e-6


def test_criterion_5_sampler_statistics():
    chain = inference.metropolis_hastings(
        lambda x: -0.5 * float(x @ x), np.zeros(1), 100_000, 2.4, seed=7
    )
    var = float(np.var(chain.samples[:, 0]))

    sigma2 = 0.5
    z = 1.3
    obs = inference.ObservationSet(
        np.zeros((1, 2)), np.zeros(1), np.array([z, 0.0]), np.diag([sigma2, 1e6])
    )

    def density(xi):
        return inference.log_posterior(xi, obs, lambda v: np.array([v[0], 0.0]))

    toy = inference.metropolis_hastings(density, np.zeros(1), 100_000, 1.5, seed=13)
    kept = toy.samples[20_000:, 0]
    post_mean = z / (1.0 + sigma2)
    post_var = sigma2 / (1.0 + sigma2)
    tau = inference.autocorrelation_time(kept)
    se = np.sqrt(post_var * tau / kept.size)
    mean_err_se = abs(kept.mean() - post_mean) / se

    ok = 0.95 < var < 1.05 and mean_err_se < 3.0
    _report(5, ok, f"unit-normal variance {var:.4f}, "
                   f"conjugate mean off by {mean_err_se:.2f} standard errors")
    assert 0.95 < var < 1.05
    assert mean_err_se < 3.0


@pytest.fixture(scope="session")
def desk_pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk") / "run"
    t0 = time.perf_counter()
    rc = cli_main(["pipeline", "--preset", "paper-desk", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert rc == 0
    return out, elapsed


def test_criterion_6_desk_scale_inference(desk_pipeline):
    out, elapsed = desk_pipeline
    metrics = json.loads((out / "summary.json").read_text())
    ratio = metrics["rmse_ratio_lambda_0"]
    coverage = metrics["response_coverage"]
    width = metrics["band_width_posterior"]
    prior_width = metrics["band_width_prior"]
    ok = (
        ratio <= 0.5
        and coverage >= 0.9
        and width < prior_width
        and elapsed <= 1800.0
    )
    _report(6, ok, f"lambda_0 RMSE ratio {ratio:.3f} (<=0.5), coverage "
                   f"{coverage:.3f} (>=0.9), band width {width:.3f} < prior "
                   f"{prior_width:.3f}, {elapsed/60:.1f} min")
    assert ratio <= 0.5
    assert coverage >= 0.9
    assert width < prior_width
    assert elapsed <= 1800.0


def test_criterion_7_pipeline_determinism(desk_pipeline, tmp_path_factory):
    out1, _ = desk_pipeline
    out2 = tmp_path_factory.mktemp("desk_again") / "run"
    rc = cli_main(["pipeline", "--preset", "paper-desk", "--out", str(out2)])
    assert rc == 0
    rel1 = sorted(p.relative_to(out1) for p in out1.rglob("*.csv"))
    rel2 = sorted(p.relative_to(out2) for p in out2.rglob("*.csv"))
    same_sets = rel1 == rel2 and len(rel1) > 0
    mismatched = [
        str(rel) for rel in rel1
        if (out1 / rel).read_bytes() != (out2 / rel).read_bytes()
    ] if same_sets else ["<file sets differ>"]
    ok = same_sets and not mismatched
    _report(7, ok, f"{len(rel1)} CSV artifacts byte-identical"
                   if ok else f"mismatch: {mismatched[:3]}")
    assert same_sets
    assert not mismatched
