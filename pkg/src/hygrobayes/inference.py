"""Posterior evaluation over the latent vector and random-walk
Metropolis sampling.

The log posterior is log prior + log likelihood up to an additive
constant; the sampler only ever uses differences, so normalization
constants are dropped throughout. A forward-model failure (any
NumericalError from the solver or the coefficient laws) maps to a log
likelihood of -inf, which rejects the proposal without aborting the
chain.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, DataError, NumericalError

logger = logging.getLogger(__name__)


class ObservationSet:
    """Sensor data bundle entering the likelihood.

    Layout of ``values``: entries ordered by (time, sensor, field) with
    the field index alternating temperature (0) and moisture (1), i.e.
    index = (time_idx * n_sensors + sensor_idx) * 2 + field_idx.
    """

    def __init__(self, sensors, times, values, cov):
        self.sensors = np.atleast_2d(np.asarray(sensors, dtype=float))
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        m = self.values.shape[0]
        if m != self.sensors.shape[0] * self.times.shape[0] * 2:
            raise DataError(
                f"observation vector has {m} entries, expected "
                f"{self.sensors.shape[0]} sensors x {self.times.shape[0]} times x 2 fields"
            )
        if self.cov.shape != (m, m):
            raise DataError("observation covariance shape does not match the data")
        if not np.allclose(self.cov, self.cov.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(self.cov).max())):
            raise DataError("observation covariance must be symmetric")
        try:
            self._chol = scipy.linalg.cho_factor(self.cov, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise DataError("observation covariance is not positive definite") from exc

    @property
    def n_values(self) -> int:
        return self.values.shape[0]

    def mahalanobis_sq(self, predicted: np.ndarray) -> float:
        r = np.asarray(predicted, dtype=float) - self.values
        return float(r @ scipy.linalg.cho_solve(self._chol, r))


def regularize_covariance(
    cov: np.ndarray, rel_nugget: float = 1e-10, shrinkage: float = 0.0
) -> np.ndarray:
    """Conditioned covariance estimate.

    Shrinks the off-diagonal part toward zero (an n_replicates ~ dim
    sample covariance is barely invertible and its smallest Wishart
    eigenvalues wildly overweight the misfit) and adds a trace-scaled
    diagonal nugget.
    """
    cov = np.asarray(cov, dtype=float)
    if not 0.0 <= shrinkage <= 1.0:
        raise ConfigError("covariance shrinkage must lie in [0, 1]")
    if shrinkage > 0.0:
        diag = np.diag(np.diag(cov))
        cov = (1.0 - shrinkage) * cov + shrinkage * diag
    nugget = rel_nugget * np.trace(cov) / cov.shape[0]
    if nugget <= 0.0:
        nugget = rel_nugget
    return cov + nugget * np.eye(cov.shape[0])


def log_prior(xi) -> float:
    """Standard-normal log density over the latent vector, up to a constant."""
    xi = np.asarray(xi, dtype=float)
    return float(-0.5 * xi @ xi)


def log_likelihood(xi, obs: ObservationSet, forward) -> float:
    """Gaussian misfit -0.5 (Y(xi)-z)^T C_obs^-1 (Y(xi)-z).

    ``forward`` maps the latent vector to the predicted observation
    vector in the ObservationSet layout. Solver failures yield -inf.
    """
    try:
        predicted = forward(np.asarray(xi, dtype=float))
    except NumericalError as exc:
        logger.warning("forward solve failed, rejecting sample: %s", exc)
        return float("-inf")
    return -0.5 * obs.mahalanobis_sq(predicted)


def log_posterior(xi, obs: ObservationSet, forward, likelihood_weight: float = 1.0) -> float:
    """Unnormalized log posterior; weight 0 tempers down to the prior."""
    lp = log_prior(xi)
    if likelihood_weight == 0.0:
        return lp
    return lp + likelihood_weight * log_likelihood(xi, obs, forward)


@dataclass(frozen=True)
class Chain:
    """Markov chain of latent vectors with acceptance bookkeeping."""

    samples: np.ndarray        # (n, L)
    logpost: np.ndarray        # (n,)
    accepted: np.ndarray       # (n,) bool; entry 0 is the (kept) start
    proposal_scale: float
    seed: int

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def acceptance_rate(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.mean(self.accepted[1:]))


def metropolis_hastings(
    log_density,
    init,
    n_samples: int,
    proposal_scale: float,
    seed: int,
    progress_every: int = 0,
    progress_stream=None,
) -> Chain:
    """Gaussian random-walk Metropolis sampler.

    Proposals xi' = xi + scale * eta with eta ~ N(0, I); the symmetric
    proposal needs no Hastings correction. The chain is reproducible
    from (init, seed).
    """
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    if proposal_scale <= 0.0:
        raise ConfigError("proposal scale must be positive")
    init = np.asarray(init, dtype=float)
    lp0 = log_density(init)
    if not np.isfinite(lp0):
        raise ConfigError(f"initial point has non-finite log density {lp0}")

    rng = np.random.default_rng(seed)
    dim = init.shape[0]
    samples = np.empty((n_samples, dim))
    logpost = np.empty(n_samples)
    accepted = np.zeros(n_samples, dtype=bool)
    samples[0] = init
    logpost[0] = lp0
    accepted[0] = True

    stream = progress_stream if progress_stream is not None else sys.stderr
    for i in range(1, n_samples):
        proposal = samples[i - 1] + proposal_scale * rng.standard_normal(dim)
        lp = log_density(proposal)
        delta = lp - logpost[i - 1]
        if np.isfinite(lp) and np.log(rng.uniform()) < delta:
            samples[i] = proposal
            logpost[i] = lp
            accepted[i] = True
        else:
            samples[i] = samples[i - 1]
            logpost[i] = logpost[i - 1]
        if progress_every and i % progress_every == 0:
            rate = np.mean(accepted[1 : i + 1])
            print(f"step {i}/{n_samples} acceptance {rate:.3f}", file=stream)
    return Chain(samples, logpost, accepted, float(proposal_scale), int(seed))


def tune_proposal_scale(
    log_density,
    init,
    seed: int,
    initial_scale: float | None = None,
    n_warmup: int = 500,
    batch: int = 50,
    target_low: float = 0.2,
    target_high: float = 0.5,
) -> tuple[float, np.ndarray]:
    """Warm-up run adapting the step size into a target acceptance band.

    Returns the tuned scale and the final warm-up state; all warm-up
    samples are discarded.
    """
    init = np.asarray(init, dtype=float)
    scale = initial_scale if initial_scale is not None else 2.38 / np.sqrt(init.shape[0])
    state = init
    seq = np.random.SeedSequence(seed)
    for sub in seq.spawn(max(1, n_warmup // batch)):
        chain = metropolis_hastings(
            log_density, state, batch, scale, int(sub.generate_state(1)[0] % 2**31)
        )
        rate = chain.acceptance_rate
        if rate < target_low:
            scale *= 0.7
        elif rate > target_high:
            scale *= 1.4
        state = chain.samples[-1]
    return float(scale), state


def autocorrelation_time(x: np.ndarray) -> float:
    """Integrated autocorrelation time via the initial-positive-sequence rule."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = np.mean(x * x)
    if var <= 0.0 or not np.isfinite(var):
        # constant chain: a single effective sample
        return float(n)
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n] / n
    rho = acov / acov[0]
    tau = 1.0
    for k in range(1, n):
        if rho[k] <= 0.0:
            break
        tau += 2.0 * rho[k]
    return float(max(tau, 1.0))


def chain_diagnostics(chain: Chain, burn_in: int) -> dict:
    """Acceptance rate, posterior moments, autocorrelation and ESS."""
    if burn_in < 0 or burn_in >= len(chain):
        raise ConfigError("burn-in must be smaller than the chain length")
    kept = chain.samples[burn_in:]
    n, dim = kept.shape
    tau = np.array([autocorrelation_time(kept[:, j]) for j in range(dim)])
    std = kept.std(axis=0, ddof=1) if n > 1 else np.zeros(dim)
    return {
        "n_samples": len(chain),
        "burn_in": int(burn_in),
        "acceptance_rate": chain.acceptance_rate,
        "mean": kept.mean(axis=0).tolist(),
        "std": std.tolist(),
        "autocorrelation_time": tau.tolist(),
        "effective_sample_size": (n / tau).tolist(),
        "proposal_scale": chain.proposal_scale,
        "seed": chain.seed,
    }


def gelman_rubin(chains: list[Chain], burn_in: int) -> np.ndarray:
    """Potential scale reduction factor per coordinate across chains."""
    if len(chains) < 2:
        raise ConfigError("need at least two chains")
    kept = np.stack([c.samples[burn_in:] for c in chains])  # (m, n, L)
    m, n, _ = kept.shape
    chain_means = kept.mean(axis=1)
    chain_vars = kept.var(axis=1, ddof=1)
    within = chain_vars.mean(axis=0)
    between = n * chain_means.var(axis=0, ddof=1)
    var_est = (n - 1) / n * within + between / n
    return np.sqrt(var_est / within)
