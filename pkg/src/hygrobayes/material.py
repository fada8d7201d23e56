"""Nonlinear transport coefficients and storage terms for coupled
heat and moisture transport in porous building materials.

All functions are plain formula evaluations and broadcast over numpy
arrays: the parameter container may hold scalars (one spatial point)
or per-element arrays (a heterogeneous field), and the local state may
be scalar or nodal/elemental vectors.

Units follow the building-physics convention: temperature ``theta`` in
degC, relative humidity ``phi`` dimensionless in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateParametersError, SingularStateError

# Margin before the phi = b pole at which evaluation refuses to proceed.
# Clamping instead would silently mask solver divergence.
PHI_POLE_MARGIN = 1e-9

ABSOLUTE_ZERO_C = -273.15


@dataclass(frozen=True)
class MaterialParams:
    """The eight material properties at one spatial point.

    w_f: free water saturation [kg m^-3]
    w_80: water content at 0.8 relative humidity [kg m^-3]
    lambda_0: dry thermal conductivity [W m^-1 K^-1]
    b_tcs: thermal conductivity supplement [-]
    mu: vapour diffusion resistance factor [-]
    a: water absorption coefficient [kg m^-2 s^-0.5]
    c_s: specific heat capacity [J kg^-1 K^-1]
    rho_s: bulk density [kg m^-3]
    """

    w_f: float
    w_80: float
    lambda_0: float
    b_tcs: float
    mu: float
    a: float
    c_s: float
    rho_s: float

    def __post_init__(self):
        for name in PARAMETER_ORDER:
            if not np.all(np.asarray(getattr(self, name)) > 0.0):
                raise DegenerateParametersError(
                    f"material parameter {name!r} must be strictly positive"
                )
        if not np.all(np.asarray(self.w_80) < np.asarray(self.w_f)):
            raise DegenerateParametersError("w_80 must be smaller than w_f")


@dataclass(frozen=True)
class LocalState:
    """Local thermodynamic state: temperature theta [degC], moisture phi [-]."""

    theta: float | np.ndarray
    phi: float | np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi)
        # phi = 0 (bone dry) is admitted so the dry limits of the
        # coefficient laws are expressible; the pole guard sits at phi = b.
        if not np.all((phi >= 0.0) & (phi < 1.0)):
            raise SingularStateError("relative humidity must lie in [0, 1)")


# Canonical parameter ordering used everywhere a latent shift vector or a
# moment table is indexed by parameter.
PARAMETER_ORDER = ("w_f", "w_80", "lambda_0", "b_tcs", "mu", "a", "c_s", "rho_s")


def approx_factor_b(p) -> float | np.ndarray:
    """Approximation factor b [-] of the moisture storage function.

    b = 0.8 (w_80 - w_f) / (w_80 - 0.8 w_f), valid (b > 1) only for
    w_80 < 0.8 w_f; the denominator changes sign at w_80 = 0.8 w_f.
    """
    w_f = np.asarray(p.w_f, dtype=float)
    w_80 = np.asarray(p.w_80, dtype=float)
    denom = w_80 - 0.8 * w_f
    # denom >= 0 covers both the pole and the unphysical b <= 1 branch.
    if np.any(denom >= -1e-12 * w_f):
        raise DegenerateParametersError(
            "approximation factor undefined: requires w_80 < 0.8 w_f"
        )
    b = 0.8 * (w_80 - w_f) / denom
    return b if b.ndim else float(b)


def _check_below_pole(phi, b):
    if np.any(np.asarray(phi) >= np.asarray(b) - PHI_POLE_MARGIN):
        raise SingularStateError(
            "moisture reached the pole of the storage/transport laws (phi >= b)"
        )


def thermal_conductivity(p, s) -> float | np.ndarray:
    """Moisture-dependent thermal conductivity [W m^-1 K^-1]."""
    b = approx_factor_b(p)
    phi = np.asarray(s.phi, dtype=float)
    _check_below_pole(phi, b)
    lam = p.lambda_0 * (1.0 + p.b_tcs * p.w_f * (b - 1.0) * phi / (p.rho_s * (b - phi)))
    return lam if np.ndim(lam) else float(lam)


def evaporation_enthalpy(s) -> float | np.ndarray:
    """Evaporation enthalpy of water [J kg^-1], from absolute temperature."""
    T = np.asarray(s.theta, dtype=float) - ABSOLUTE_ZERO_C
    if np.any(T <= 0.0):
        raise SingularStateError("absolute temperature must be positive")
    h_v = 2.5008e6 * (273.15 / T) ** (0.167 + 3.67e-4 * T)
    return h_v if h_v.ndim else float(h_v)


def vapour_permeability(p, s) -> float | np.ndarray:
    """Water vapour permeability [kg m^-1 s^-1 Pa^-1]."""
    theta = np.asarray(s.theta, dtype=float)
    if np.any(theta <= ABSOLUTE_ZERO_C):
        raise SingularStateError("temperature below absolute zero")
    delta_p = 1.9446e-12 / np.asarray(p.mu, dtype=float) * (theta + 273.15) ** 0.81
    return delta_p if delta_p.ndim else float(delta_p)


def saturation_pressure(s) -> float | np.ndarray:
    """Water vapour saturation pressure [Pa]; strictly increasing in theta."""
    theta = np.asarray(s.theta, dtype=float)
    if np.any(theta <= -234.18):
        raise SingularStateError("temperature at or below the saturation-law pole")
    p_sat = 611.0 * np.exp(17.08 * theta / (234.18 + theta))
    return p_sat if p_sat.ndim else float(p_sat)


def saturation_pressure_slope(s) -> float | np.ndarray:
    """d p_sat / d theta [Pa K^-1], used to linearize the vapour flux."""
    theta = np.asarray(s.theta, dtype=float)
    p_sat = saturation_pressure(s)
    slope = p_sat * 17.08 * 234.18 / (234.18 + theta) ** 2
    return slope if np.ndim(slope) else float(slope)


def liquid_conduction(p, s) -> float | np.ndarray:
    """Liquid conduction coefficient [kg m^-1 s^-1]."""
    b = approx_factor_b(p)
    phi = np.asarray(s.phi, dtype=float)
    w_f = np.asarray(p.w_f, dtype=float)
    _check_below_pole(phi, b)
    if np.any(np.abs(w_f - 1.0) < 1e-12):
        raise DegenerateParametersError("liquid conduction undefined for w_f = 1")
    a = np.asarray(p.a, dtype=float)
    d_phi = (
        3.8
        * (a**2 / w_f)
        * 10.0 ** (3.0 * w_f * (b - 1.0) * phi / ((b - phi) * (w_f - 1.0)))
        * b
        * (b - 1.0)
        / (b - phi) ** 2
    )
    return d_phi if d_phi.ndim else float(d_phi)


def enthalpy_capacity(p) -> float | np.ndarray:
    """Volumetric heat capacity dH/dtheta = rho_s c_s [J m^-3 K^-1]."""
    cap = np.asarray(p.rho_s, dtype=float) * np.asarray(p.c_s, dtype=float)
    return cap if cap.ndim else float(cap)


def moisture_content(p, s) -> float | np.ndarray:
    """Equilibrium water content w(phi) = w_f (b-1) phi / (b - phi) [kg m^-3]."""
    b = approx_factor_b(p)
    phi = np.asarray(s.phi, dtype=float)
    _check_below_pole(phi, b)
    w = np.asarray(p.w_f, dtype=float) * (b - 1.0) * phi / (b - phi)
    return w if w.ndim else float(w)


def moisture_capacity(p, s) -> float | np.ndarray:
    """Moisture storage capacity dw/dphi = w_f (b-1) b / (b - phi)^2 [kg m^-3]."""
    b = approx_factor_b(p)
    phi = np.asarray(s.phi, dtype=float)
    _check_below_pole(phi, b)
    dw = np.asarray(p.w_f, dtype=float) * (b - 1.0) * b / (b - phi) ** 2
    return dw if dw.ndim else float(dw)
