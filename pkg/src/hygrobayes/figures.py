"""Report figures rendered alongside the delimited outputs.

All figures are written as PNG with stripped metadata so reruns are
byte-identical. The summarize stage calls these; the library never
opens interactive windows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import HOUR

plt.rcParams["figure.dpi"] = 130
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3

_SAVE_KW = dict(metadata={"Date": None})


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def _tripcolor(ax, mesh, values, title, cmap="viridis", vmin=None, vmax=None):
    t = ax.tripcolor(
        mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.elements,
        facecolors=np.asarray(values), cmap=cmap, vmin=vmin, vmax=vmax,
    )
    ax.set_title(title)
    ax.set_aspect("equal")
    ax.grid(False)
    return t


def field_comparison(path, mesh, reference, posterior_mean, name="lambda_0") -> Path:
    """Reference field, posterior-mean field and their difference."""
    fig, axes = plt.subplots(3, 1, figsize=(6.5, 6.0))
    vmin = min(reference.min(), posterior_mean.min())
    vmax = max(reference.max(), posterior_mean.max())
    t0 = _tripcolor(axes[0], mesh, reference, f"{name}: reference", vmin=vmin, vmax=vmax)
    fig.colorbar(t0, ax=axes[0])
    t1 = _tripcolor(axes[1], mesh, posterior_mean, f"{name}: posterior mean", vmin=vmin, vmax=vmax)
    fig.colorbar(t1, ax=axes[1])
    diff = posterior_mean - reference
    lim = np.abs(diff).max()
    t2 = _tripcolor(axes[2], mesh, diff, f"{name}: posterior mean - reference",
                    cmap="coolwarm", vmin=-lim, vmax=lim)
    fig.colorbar(t2, ax=axes[2])
    fig.tight_layout()
    return _save(fig, path)


def field_cut(path, mesh, summary, y_cut: float, name="lambda_0") -> Path:
    """Bands of the posterior and prior fields along a horizontal cut."""
    cents = mesh.centroids
    row = np.abs(cents[:, 1] - y_cut)
    sel = row <= row.min() + 1e-12  # nearest centroid row(s)
    order = np.argsort(cents[sel, 0])
    x = cents[sel, 0][order]

    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    prior_mean = summary.prior_field_mean[name][sel][order]
    ax.fill_between(
        x, summary.field_q05[name][sel][order], summary.field_q95[name][sel][order],
        color="0.55", alpha=0.6, label="posterior 5-95%",
    )
    ax.plot(x, summary.field_mean[name][sel][order], color="0.25", lw=1.2, label="posterior mean")
    ax.plot(x, prior_mean, color="0.6", ls="--", lw=1.0, label="prior mean")
    ax.plot(x, summary.reference_fields[name][sel][order], color="k", lw=2.0, label="reference")
    ax.set_xlabel("x$_1$ [m]")
    ax.set_ylabel(name)
    ax.set_title(f"{name} along x$_2$ = {y_cut:g} m")
    ax.legend(fontsize=7)
    return _save(fig, path)


def envelope(path, summary, sensor: int, field: int, label: str) -> Path:
    """Prior and posterior response bands vs the reference at one probe."""
    t = summary.probe_times_s / HOUR
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.fill_between(
        t, summary.prior_response_q05[:, sensor, field],
        summary.prior_response_q95[:, sensor, field],
        color="0.75", alpha=0.8, label="prior 5-95%",
    )
    ax.fill_between(
        t, summary.response_q05[:, sensor, field],
        summary.response_q95[:, sensor, field],
        color="0.45", alpha=0.8, label="posterior 5-95%",
    )
    ax.plot(t, summary.reference_response[:, sensor, field], "k-", lw=1.8, label="reference")
    ax.set_xlabel("time [h]")
    ax.set_ylabel(label)
    ax.set_title(f"probe {sensor}")
    ax.legend(fontsize=7)
    return _save(fig, path)


def chain_trace(path, chain, burn_in: int) -> Path:
    fig, axes = plt.subplots(2, 1, figsize=(6.0, 4.2), sharex=True)
    axes[0].plot(chain.logpost, lw=0.5, color="0.3")
    axes[0].axvline(burn_in, color="r", ls=":", lw=1.0)
    axes[0].set_ylabel("log posterior")
    axes[1].plot(chain.samples[:, :4], lw=0.5)
    axes[1].axvline(burn_in, color="r", ls=":", lw=1.0)
    axes[1].set_ylabel("first latent coords")
    axes[1].set_xlabel("step")
    axes[0].set_title(
        f"acceptance {chain.acceptance_rate:.2f}, proposal scale {chain.proposal_scale:.3g}"
    )
    fig.tight_layout()
    return _save(fig, path)


def eigen_spectrum(path, basis) -> Path:
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    k = np.arange(1, basis.M + 1)
    ax.semilogy(k, basis.eigenvalues, "o-", ms=2.5, lw=0.8)
    ax.set_xlabel("mode")
    ax.set_ylabel("eigenvalue")
    ax.set_title("covariance spectrum")
    return _save(fig, path)


def render_report(outdir, mesh, basis, chain, summary, burn_in: int) -> list[Path]:
    """All report figures for a finished run."""
    figdir = Path(outdir) / "figures"
    mid_sensor = summary.sensors.shape[0] // 2
    y_cut = float(np.median(mesh.centroids[:, 1]))
    return [
        field_comparison(figdir / "fig_lambda0_fields.png", mesh,
                         summary.reference_fields["lambda_0"],
                         summary.field_mean["lambda_0"]),
        field_cut(figdir / "fig_lambda0_cut.png", mesh, summary, y_cut),
        envelope(figdir / "fig_envelope_theta.png", summary, mid_sensor, 0,
                 "temperature [degC]"),
        envelope(figdir / "fig_envelope_phi.png", summary, mid_sensor, 1,
                 "relative humidity [-]"),
        chain_trace(figdir / "fig_chain.png", chain, burn_in),
        eigen_spectrum(figdir / "fig_eigenvalues.png", basis),
    ]
