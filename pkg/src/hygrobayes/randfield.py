"""Lognormal random-field machinery: separable exponential covariance,
discrete eigenexpansion of the covariance operator, and synthesis of
fully correlated per-parameter fields from a latent standard-normal
vector.

The latent vector layout is fixed: the first W entries are per-parameter
mean shifts (one per material property, in ``material.PARAMETER_ORDER``),
the remaining M entries are the expansion coefficients shared by all
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg

from .errors import ConfigError
from .material import PARAMETER_ORDER

W_PARAMS = len(PARAMETER_ORDER)


@dataclass(frozen=True)
class CovarianceSpec:
    """Correlation lengths of the separable exponential kernel [m]."""

    l_x1: float
    l_x2: float

    def __post_init__(self):
        if self.l_x1 <= 0.0 or self.l_x2 <= 0.0:
            raise ConfigError("correlation lengths must be strictly positive")


def covariance(x, xp, spec: CovarianceSpec):
    """Normalized separable exponential kernel, in (0, 1].

    Parameters
    ----------
    x, xp : array_like, shape (..., 2)
        Point coordinates; broadcasting applies.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d1 = np.abs(x[..., 0] - xp[..., 0]) / spec.l_x1
    d2 = np.abs(x[..., 1] - xp[..., 1]) / spec.l_x2
    c = np.exp(-d1 - d2)
    return c if c.ndim else float(c)


def assemble_covariance_matrix(grid, spec: CovarianceSpec) -> np.ndarray:
    """Dense covariance matrix over evaluation points.

    Parameters
    ----------
    grid : array_like, shape (n, 2)
        Evaluation points (element centroids in the default pipeline).

    Returns
    -------
    (n, n) symmetric matrix with unit diagonal.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != 2 or grid.shape[0] == 0:
        raise ConfigError("grid must be a non-empty (n, 2) array")
    return covariance(grid[:, None, :], grid[None, :, :], spec)


@dataclass(frozen=True)
class KLEBasis:
    """Truncated spectral basis of a discretized covariance operator.

    eigenvalues : (M,) positive, descending
    eigenvectors : (n, M) orthonormal under the Euclidean dot product
    grid : (n, 2) evaluation points the basis lives on
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    grid: np.ndarray

    @property
    def M(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_points(self) -> int:
        return self.eigenvectors.shape[0]

    def truncate(self, M: int) -> "KLEBasis":
        """View of the leading M modes (shares storage)."""
        if not 1 <= M <= self.M:
            raise ConfigError(f"truncation order must be in [1, {self.M}], got {M}")
        return KLEBasis(self.eigenvalues[:M], self.eigenvectors[:, :M], self.grid)

    def energy_fraction(self, M: int | None = None) -> float:
        """Captured variance fraction sum(s_i, i<=M) / sum(all available)."""
        s = self.eigenvalues
        m = self.M if M is None else M
        return float(np.sum(s[:m]) / np.sum(s))


def solve_kle(C: np.ndarray, M: int, grid=None) -> KLEBasis:
    """Solve the symmetric eigenproblem of a covariance matrix.

    Returns the leading M eigenpairs in descending eigenvalue order.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise ConfigError("covariance matrix must be square")
    if not np.allclose(C, C.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise ConfigError("covariance matrix must be symmetric")
    if not 1 <= M <= n:
        raise ConfigError(f"truncation order must be in [1, {n}], got {M}")
    vals, vecs = scipy.linalg.eigh(C)
    order = np.argsort(vals)[::-1]
    vals = vals[order][:M]
    vecs = vecs[:, order][:, :M]
    if grid is None:
        grid = np.zeros((n, 2))
    return KLEBasis(np.ascontiguousarray(vals), np.ascontiguousarray(vecs), np.asarray(grid, dtype=float))


def sample_gaussian_field(basis: KLEBasis, xi_kle) -> np.ndarray:
    """Standard Gaussian field realization sum_i sqrt(s_i) xi_i psi_i."""
    xi_kle = np.asarray(xi_kle, dtype=float)
    if xi_kle.shape != (basis.M,):
        raise ConfigError(f"expected {basis.M} expansion coefficients, got {xi_kle.shape}")
    return basis.eigenvectors @ (np.sqrt(basis.eigenvalues) * xi_kle)


@dataclass(frozen=True)
class LognormalMoments:
    """Lognormal target moments and the underlying Gaussian moments.

    mu_q, sigma_q are in the units of the material parameter; mu_g,
    sigma_g are the moments of the Gaussian exponent.
    """

    mu_q: float
    sigma_q: float
    mu_g: float
    sigma_g: float


def moments_to_gaussian(mu_q: float, sigma_q: float) -> LognormalMoments:
    """Convert lognormal (mean, std) to the Gaussian exponent moments.

    sigma_g^2 = ln(1 + (sigma_q/mu_q)^2), mu_g = ln(mu_q) - sigma_g^2/2.
    """
    if mu_q <= 0.0:
        raise ConfigError("lognormal prior mean must be strictly positive")
    if sigma_q < 0.0:
        raise ConfigError("lognormal prior std must be nonnegative")
    sigma_g_sq = np.log1p((sigma_q / mu_q) ** 2)
    mu_g = np.log(mu_q) - 0.5 * sigma_g_sq
    return LognormalMoments(mu_q, sigma_q, float(mu_g), float(np.sqrt(sigma_g_sq)))


@dataclass(frozen=True)
class LatentVector:
    """Latent standard-normal coordinates of one material realization.

    Layout: xi[:W] are the per-parameter shifts (PARAMETER_ORDER),
    xi[W:] the M shared expansion coefficients, L = W + M total.
    """

    xi: np.ndarray
    n_modes: int
    n_params: int = W_PARAMS

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if self.xi.shape != (self.n_params + self.n_modes,):
            raise ConfigError(
                f"latent vector must have length {self.n_params + self.n_modes}, "
                f"got {self.xi.shape}"
            )

    @property
    def shifts(self) -> np.ndarray:
        return self.xi[: self.n_params]

    @property
    def modes(self) -> np.ndarray:
        return self.xi[self.n_params :]


@dataclass(frozen=True)
class ParameterFields:
    """Per-element values of all eight material parameters.

    Attribute names mirror ``MaterialParams`` so the coefficient
    functions evaluate directly on a heterogeneous field.
    """

    w_f: np.ndarray
    w_80: np.ndarray
    lambda_0: np.ndarray
    b_tcs: np.ndarray
    mu: np.ndarray
    a: np.ndarray
    c_s: np.ndarray
    rho_s: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_ORDER}

    @property
    def n_points(self) -> int:
        return self.w_f.shape[0]


def realize_parameter_fields(
    basis: KLEBasis,
    moments: Mapping[str, LognormalMoments],
    xi: LatentVector,
) -> ParameterFields:
    """Synthesize all parameter fields from one latent vector.

    Each parameter q gets exp(mu_g + sigma_g * (shift_q + g)) where g is
    the shared standard Gaussian fluctuation field of the basis.
    """
    if xi.n_modes != basis.M:
        raise ConfigError(f"latent vector carries {xi.n_modes} modes, basis has {basis.M}")
    g = sample_gaussian_field(basis, xi.modes)
    fields = {}
    for k, name in enumerate(PARAMETER_ORDER):
        m = moments[name]
        fields[name] = np.exp(m.mu_g + m.sigma_g * (xi.shifts[k] + g))
    return ParameterFields(**fields)


def truncation_error(reference: np.ndarray, approx: np.ndarray) -> float:
    """Mean relative point-wise error between field realizations.

    Parameters
    ----------
    reference, approx : (n_realizations, n_points)
        Realizations built from the same latent draws at full and
        truncated resolution.
    """
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    approx = np.atleast_2d(np.asarray(approx, dtype=float))
    if reference.shape != approx.shape:
        raise ConfigError("reference and approximation shapes must match")
    return float(np.mean(np.abs(reference - approx) / reference))
