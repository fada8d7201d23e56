"""Transient solver for the coupled nonlinear heat/moisture balance on a
triangulated rectangle.

Space: linear triangles with element-wise constant material parameters
and coefficients (evaluated at the element-mean state of the latest
iterate). Time: backward Euler with an inner Picard loop that refreshes
the coefficients until the relative increment drops below tolerance.
Dirichlet values are whatever the incoming state carries on the two
vertical boundary node sets; they are held fixed by symmetrized row/
column elimination, which keeps the linear systems symmetric.

The vapour flux delta_p * grad(phi * p_sat(theta)) is linearized per
element as delta_p * (p_sat * grad phi + phi * p_sat' * grad theta),
producing the four coupling blocks of the monolithic 2N system.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from types import SimpleNamespace

import numpy as np

from . import material
from .errors import ConfigError, DivergedStepError, NumericalError
from .mesh import Mesh
from .randfield import ParameterFields


@dataclass(frozen=True)
class SimState:
    """Nodal temperature [degC] and moisture [-] at time t [s]."""

    theta: np.ndarray
    phi: np.ndarray
    t: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.phi))):
            raise NumericalError("state contains non-finite values")
        if not np.all((self.phi > 0.0) & (self.phi < 1.0)):
            raise NumericalError("nodal moisture left the physical range (0, 1)")


@dataclass(frozen=True)
class SolverConfig:
    dt: float                  # time step [s]
    t_end: float               # horizon [s]
    picard_tol: float = 1e-6   # relative increment tolerance
    picard_max: int = 25

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ConfigError("time step and horizon must be positive")
        if self.picard_tol <= 0.0 or self.picard_max < 1:
            raise ConfigError("Picard tolerance and iteration budget must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Recorded snapshots: times (nt,), theta/phi (nt, N)."""

    times: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    @property
    def n_snapshots(self) -> int:
        return self.times.shape[0]


def uniform_fields(params: material.MaterialParams, n_elements: int) -> ParameterFields:
    """Spatially constant parameter fields from one parameter set."""
    return ParameterFields(
        **{
            name: np.full(n_elements, getattr(params, name), dtype=float)
            for name in material.PARAMETER_ORDER
        }
    )


def apply_boundary_values(
    mesh: Mesh,
    state: SimState,
    theta_left: float,
    phi_left: float,
    theta_right: float,
    phi_right: float,
) -> SimState:
    """Copy of the state with Dirichlet values written to the edge sets."""
    theta = state.theta.copy()
    phi = state.phi.copy()
    theta[mesh.dirichlet_left] = theta_left
    theta[mesh.dirichlet_right] = theta_right
    phi[mesh.dirichlet_left] = phi_left
    phi[mesh.dirichlet_right] = phi_right
    return SimState(theta, phi, state.t)


class _Workspace:
    """Per-mesh assembly cache: scatter indices of the 2N x 2N block system."""

    def __init__(self, mesh: Mesh):
        n = mesh.n_nodes
        tri = mesh.elements
        rows = np.broadcast_to(tri[:, :, None], (tri.shape[0], 3, 3))
        cols = np.broadcast_to(tri[:, None, :], (tri.shape[0], 3, 3))
        two_n = 2 * n

        def flat(r, c):
            return (r * two_n + c).ravel()
        self.idx = np.concatenate(
            [
                flat(rows, cols),          # theta-theta
                flat(rows, cols + n),      # theta-phi
                flat(rows + n, cols),      # phi-theta
                flat(rows + n, cols + n),  # phi-phi
            ]
        )
        self.two_n = two_n
        self.dirichlet = np.concatenate(
            [
                mesh.dirichlet_left,
                mesh.dirichlet_right,
                mesh.dirichlet_left + n,
                mesh.dirichlet_right + n,
            ]
        )


def _workspace(mesh: Mesh) -> _Workspace:
    ws = getattr(mesh, "_fem_workspace", None)
    if ws is None:
        ws = _Workspace(mesh)
        mesh._fem_workspace = ws
    return ws


def _element_coefficients(mesh: Mesh, fields: ParameterFields, theta_n, phi_n):
    """Transport/storage coefficients at the element-mean state."""
    s = SimpleNamespace(
        theta=theta_n[mesh.elements].mean(axis=1),
        phi=phi_n[mesh.elements].mean(axis=1),
    )
    lam = material.thermal_conductivity(fields, s)
    delta_p = material.vapour_permeability(fields, s)
    h_v = material.evaporation_enthalpy(s)
    p_sat = material.saturation_pressure(s)
    dp_sat = material.saturation_pressure_slope(s)
    d_liq = material.liquid_conduction(fields, s)
    cap_theta = material.enthalpy_capacity(fields)
    cap_phi = material.moisture_capacity(fields, s)
    return SimpleNamespace(
        k_tt=lam + h_v * delta_p * s.phi * dp_sat,
        k_tf=h_v * delta_p * p_sat,
        k_ft=delta_p * s.phi * dp_sat,
        k_ff=d_liq + delta_p * p_sat,
        cap_theta=cap_theta,
        cap_phi=cap_phi,
    )


def assemble_system(mesh: Mesh, fields: ParameterFields, state: SimState):
    """Discrete operators at the given state.

    Returns (capacity, conduction) where capacity is the lumped 2N
    storage vector and conduction the assembled 2N x 2N flux operator
    (all four coupling blocks included).
    """
    ws = _workspace(mesh)
    c = _element_coefficients(mesh, fields, state.theta, state.phi)
    S = mesh.unit_stiffness
    vals = np.concatenate(
        [
            (c.k_tt[:, None, None] * S).ravel(),
            (c.k_tf[:, None, None] * S).ravel(),
            (c.k_ft[:, None, None] * S).ravel(),
            (c.k_ff[:, None, None] * S).ravel(),
        ]
    )
    K = np.bincount(ws.idx, weights=vals, minlength=ws.two_n**2).reshape(
        ws.two_n, ws.two_n
    )
    capacity = np.concatenate([mesh.lump(c.cap_theta), mesh.lump(c.cap_phi)])
    return capacity, K


def _apply_dirichlet(A: np.ndarray, rhs: np.ndarray, bc_idx: np.ndarray, bc_val: np.ndarray):
    rhs -= A[:, bc_idx] @ bc_val
    A[bc_idx, :] = 0.0
    A[:, bc_idx] = 0.0
    A[bc_idx, bc_idx] = 1.0
    rhs[bc_idx] = bc_val


def step(mesh: Mesh, fields: ParameterFields, state: SimState, config: SolverConfig) -> SimState:
    """One backward-Euler step with Picard-refreshed coefficients."""
    ws = _workspace(mesh)
    n = mesh.n_nodes
    u_old = np.concatenate([state.theta, state.phi])
    bc_idx = ws.dirichlet
    bc_val = u_old[bc_idx]

    theta_k, phi_k = state.theta, state.phi
    for _ in range(config.picard_max):
        capacity, K = assemble_system(mesh, fields, SimState(theta_k, phi_k, state.t))
        A = K
        diag = np.arange(ws.two_n)
        A[diag, diag] += capacity / config.dt
        rhs = capacity * u_old / config.dt
        _apply_dirichlet(A, rhs, bc_idx, bc_val)
        u_new = np.linalg.solve(A, rhs)
        theta_new, phi_new = u_new[:n], u_new[n:]

        incr = max(
            np.max(np.abs(theta_new - theta_k)) / max(np.max(np.abs(theta_new)), 1e-8),
            np.max(np.abs(phi_new - phi_k)) / max(np.max(np.abs(phi_new)), 1e-8),
        )
        theta_k, phi_k = theta_new, phi_new
        if incr < config.picard_tol:
            break
    else:
        raise DivergedStepError(
            f"Picard loop did not converge at t={state.t + config.dt:.6g} s "
            f"(last increment {incr:.3e}, budget {config.picard_max})"
        )
    return SimState(theta_k, phi_k, state.t + config.dt)


def solve(
    mesh: Mesh,
    fields: ParameterFields,
    initial: SimState,
    config: SolverConfig,
    record_times,
) -> Trajectory:
    """Advance to t_end, recording snapshots exactly at the given times.

    The stepper shortens individual steps to land on record times, so no
    temporal interpolation happens at recording.
    """
    record_times = np.sort(np.asarray(record_times, dtype=float))
    if record_times.size and (
        record_times[0] < initial.t - 1e-9 or record_times[-1] > config.t_end + 1e-9
    ):
        raise ConfigError("record times must lie within [t0, t_end]")

    times, thetas, phis = [], [], []
    k = 0

    def record(s: SimState):
        nonlocal k
        while k < record_times.size and abs(record_times[k] - s.t) <= 1e-9 * max(1.0, s.t):
            times.append(record_times[k])
            thetas.append(s.theta.copy())
            phis.append(s.phi.copy())
            k += 1

    state = initial
    record(state)
    t_eps = 1e-9 * max(1.0, config.t_end)
    while state.t < config.t_end - t_eps:
        dt = min(config.dt, config.t_end - state.t)
        if k < record_times.size:
            dt = min(dt, record_times[k] - state.t)
        state = step(mesh, fields, state, replace(config, dt=dt))
        record(state)

    nt = len(times)
    return Trajectory(
        np.asarray(times),
        np.asarray(thetas).reshape(nt, mesh.n_nodes),
        np.asarray(phis).reshape(nt, mesh.n_nodes),
    )


def boundary_heat_flux(mesh: Mesh, fields: ParameterFields, state: SimState) -> tuple[float, float]:
    """Discrete heat-equation reactions summed over each Dirichlet side.

    At steady state the interior residual vanishes, so the two numbers
    are the total fluxes through the left and right boundaries (opposite
    signs when balanced).
    """
    _, K = assemble_system(mesh, fields, state)
    r = K @ np.concatenate([state.theta, state.phi])
    return float(r[mesh.dirichlet_left].sum()), float(r[mesh.dirichlet_right].sum())
