"""Deterministic artifact writers and readers.

All CSVs are UTF-8 with LF newlines and repr-formatted floats (shortest
round-trip), so a rerun with identical seeds produces byte-identical
files. Wall-clock timings live only in the manifest, never in data
artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import HOUR, ExperimentConfig
from .errors import DataError
from .inference import Chain
from .material import PARAMETER_ORDER

MANIFEST_NAME = "manifest.json"


def fmt(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) if isinstance(v, float) or isinstance(v, np.floating) else v for v in row])
    return path


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_matrix_csv(path: Path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot parse matrix file {path}: {exc}") from exc
    return data


# ---------------------------------------------------------------- manifest

def update_manifest(outdir: Path, stage: str, files, elapsed_s: float,
                    config: ExperimentConfig, seeds: dict, version: str,
                    config_path: str | None = None) -> Path:
    outdir = Path(outdir)
    path = outdir / MANIFEST_NAME
    manifest = {}
    if path.exists():
        manifest = json.loads(path.read_text())
    manifest["version"] = version
    manifest["out_dir"] = str(outdir)
    if config_path is not None:
        manifest["config_path"] = str(config_path)
    manifest.setdefault("stages", {})[stage] = {
        "files": sorted(str(Path(f).relative_to(outdir)) for f in files),
        "elapsed_s": round(float(elapsed_s), 3),
    }
    manifest["config"] = config.to_dict()
    manifest["seeds"] = seeds
    return write_json(path, manifest)


def load_manifest(outdir: Path) -> dict:
    path = Path(outdir) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no manifest found in {outdir}; run earlier stages first")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupted manifest {path}: {exc}") from exc


# ------------------------------------------------------------------- basis

def write_eigenpairs(outdir: Path, basis) -> list[Path]:
    total = float(np.sum(basis.eigenvalues))
    cumulative = np.cumsum(basis.eigenvalues) / total
    f1 = write_csv(
        Path(outdir) / "eigenvalues.csv",
        ["mode", "eigenvalue", "energy_fraction", "cumulative_fraction"],
        [
            (i + 1, float(v), float(v / total), float(c))
            for i, (v, c) in enumerate(zip(basis.eigenvalues, cumulative))
        ],
    )
    header = ["element", "x1", "x2"] + [f"psi_{i+1}" for i in range(basis.M)]
    rows = [
        (e, float(basis.grid[e, 0]), float(basis.grid[e, 1]), *map(float, basis.eigenvectors[e]))
        for e in range(basis.n_points)
    ]
    f2 = write_csv(Path(outdir) / "eigenvectors.csv", header, rows)
    return [f1, f2]


def write_energy_report(outdir: Path, basis, n_modes: int) -> Path:
    return write_json(
        Path(outdir) / "energy.json",
        {
            "n_points": basis.n_points,
            "n_modes": int(n_modes),
            "captured_fraction": basis.energy_fraction(n_modes),
            "trace": float(np.sum(basis.eigenvalues)),
            "leading_eigenvalues": [float(v) for v in basis.eigenvalues[:20]],
        },
    )


# ----------------------------------------------------------------- fields

def write_field_table(path: Path, mesh, fields_dict) -> Path:
    header = ["element", "x1", "x2", *PARAMETER_ORDER]
    cents = mesh.centroids
    rows = [
        (e, float(cents[e, 0]), float(cents[e, 1]),
         *(float(fields_dict[name][e]) for name in PARAMETER_ORDER))
        for e in range(mesh.n_elements)
    ]
    return write_csv(path, header, rows)


# ------------------------------------------------------------- trajectory

def write_trajectory(outdir: Path, mesh, trajectory) -> list[Path]:
    files = []
    for k, t in enumerate(trajectory.times):
        hours = t / HOUR
        path = Path(outdir) / f"snapshot_{hours:08.2f}h.csv"
        rows = [
            (i, float(mesh.nodes[i, 0]), float(mesh.nodes[i, 1]),
             float(trajectory.theta[k, i]), float(trajectory.phi[k, i]))
            for i in range(mesh.n_nodes)
        ]
        files.append(write_csv(path, ["node", "x1", "x2", "theta", "phi"], rows))
    return files


# ----------------------------------------------------------- observations

def write_observations(outdir: Path, setup, obs, reference, discrepancy) -> list[Path]:
    outdir = Path(outdir)
    files = []
    n_sensors = setup.sensors.shape[0]
    rows = []
    for k, t in enumerate(setup.measurement_times_s):
        for s in range(n_sensors):
            for f, fname in enumerate(("theta", "phi")):
                idx = (k * n_sensors + s) * 2 + f
                rows.append(
                    (idx, float(t / HOUR), s,
                     float(setup.sensors[s, 0]), float(setup.sensors[s, 1]),
                     fname, float(obs.values[idx]), float(reference.z_clean[idx]))
                )
    files.append(write_csv(
        outdir / "observations.csv",
        ["index", "time_h", "sensor", "x1", "x2", "field", "z", "z_clean"],
        rows,
    ))
    m = obs.cov.shape[0]
    files.append(write_csv(
        outdir / "cobs.csv",
        [f"c{j}" for j in range(m)],
        [tuple(map(float, obs.cov[i])) for i in range(m)],
    ))
    files.append(write_csv(
        outdir / "reference_latent.csv",
        ["index", "value"],
        [(i, float(v)) for i, v in enumerate(reference.xi)],
    ))
    files.append(write_field_table(
        outdir / "fields_reference.csv", setup.mesh,
        {name: getattr(reference.fields, name) for name in PARAMETER_ORDER},
    ))
    ref_resp = _probe_series_rows(setup, reference)
    files.append(write_csv(
        outdir / "reference_response.csv",
        ["time_h", "sensor", "theta", "phi"],
        ref_resp,
    ))
    pv = discrepancy.probe_variance if discrepancy is not None else np.zeros((setup.record_times_s.size, 2))
    files.append(write_csv(
        outdir / "discrepancy_probe.csv",
        ["time_h", "var_theta", "var_phi"],
        [(float(t / HOUR), float(pv[k, 0]), float(pv[k, 1]))
         for k, t in enumerate(setup.record_times_s)],
    ))
    return files


def _probe_series_rows(setup, reference):
    from .experiment import probe_series

    resp = probe_series(setup, reference.trajectory)
    rows = []
    for k, t in enumerate(setup.record_times_s):
        for s in range(setup.sensors.shape[0]):
            rows.append((float(t / HOUR), s, float(resp[k, s, 0]), float(resp[k, s, 1])))
    return rows


def load_observations(outdir: Path, setup):
    """Rebuild the ObservationSet and reference view from stage artifacts."""
    from .inference import ObservationSet

    obs_path = Path(outdir) / "observations.csv"
    cov_path = Path(outdir) / "cobs.csv"
    if not obs_path.exists() or not cov_path.exists():
        raise DataError(f"observation artifacts missing in {outdir}")
    values = []
    with open(obs_path, encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            values.append((int(rec["index"]), float(rec["z"]), float(rec["z_clean"])))
    values.sort()
    z = np.array([v[1] for v in values])
    z_clean = np.array([v[2] for v in values])
    cov = load_matrix_csv(cov_path)
    obs = ObservationSet(setup.sensors, setup.measurement_times_s, z, cov)
    return obs, z_clean


def load_reference_view(outdir: Path, setup):
    """Reference fields and probe response as written by the observe stage."""
    outdir = Path(outdir)
    fields = {}
    path = outdir / "fields_reference.csv"
    if not path.exists():
        raise DataError(f"reference field artifact missing in {outdir}")
    table = load_matrix_csv(path)
    for j, name in enumerate(PARAMETER_ORDER):
        fields[name] = table[:, 3 + j]
    resp_table = load_matrix_csv(outdir / "reference_response.csv")
    nt, ns = setup.record_times_s.size, setup.sensors.shape[0]
    if resp_table.shape[0] != nt * ns:
        raise DataError("reference response artifact does not match the configuration")
    response = resp_table[:, 2:4].reshape(nt, ns, 2)
    pv = load_matrix_csv(outdir / "discrepancy_probe.csv")[:, 1:3]
    return fields, response, pv


# ------------------------------------------------------------------ chain

def write_chain(path: Path, chain: Chain) -> Path:
    dim = chain.samples.shape[1]
    header = ["step", "accepted", "logpost"] + [f"xi_{j+1}" for j in range(dim)]
    rows = [
        (i, int(chain.accepted[i]), float(chain.logpost[i]), *map(float, chain.samples[i]))
        for i in range(len(chain))
    ]
    return write_csv(path, header, rows)


def load_chain(path: Path, proposal_scale: float = float("nan"), seed: int = 0) -> Chain:
    table = load_matrix_csv(path)
    if table.shape[1] < 4:
        raise DataError(f"chain file {path} has too few columns")
    return Chain(
        samples=table[:, 3:],
        logpost=table[:, 2],
        accepted=table[:, 1].astype(bool),
        proposal_scale=proposal_scale,
        seed=seed,
    )


# ---------------------------------------------------------------- summary

def write_field_summaries(outdir: Path, mesh, summary) -> list[Path]:
    outdir = Path(outdir)
    files = []
    for tag, table in [
        ("mean", summary.field_mean),
        ("q05", summary.field_q05),
        ("q50", summary.field_q50),
        ("q95", summary.field_q95),
        ("prior_mean", summary.prior_field_mean),
    ]:
        files.append(write_field_table(outdir / f"fields_{tag}.csv", mesh, table))
    return files


def write_envelopes(outdir: Path, setup, summary) -> list[Path]:
    outdir = Path(outdir)
    files = []
    for f, fname in enumerate(("theta", "phi")):
        rows = []
        for k, t in enumerate(summary.probe_times_s):
            for s in range(summary.sensors.shape[0]):
                rows.append((
                    float(t / HOUR), s,
                    float(summary.sensors[s, 0]), float(summary.sensors[s, 1]),
                    float(summary.reference_response[k, s, f]),
                    float(summary.response_mean[k, s, f]),
                    float(summary.response_q05[k, s, f]),
                    float(summary.response_q95[k, s, f]),
                    float(summary.prior_response_mean[k, s, f]),
                    float(summary.prior_response_q05[k, s, f]),
                    float(summary.prior_response_q95[k, s, f]),
                ))
        files.append(write_csv(
            outdir / f"envelopes_{fname}.csv",
            ["time_h", "sensor", "x1", "x2", "reference",
             "post_mean", "post_q05", "post_q95",
             "prior_mean", "prior_q05", "prior_q95"],
            rows,
        ))
    return files


def summary_metrics(summary, diagnostics: dict) -> dict:
    errors = {
        name: {
            "posterior_rmse": summary.field_errors[name]["posterior"].rmse,
            "posterior_mare": summary.field_errors[name]["posterior"].mare,
            "prior_rmse": summary.field_errors[name]["prior"].rmse,
            "prior_mare": summary.field_errors[name]["prior"].mare,
        }
        for name in summary.parameter_names
    }
    return {
        "field_errors": errors,
        "rmse_ratio_lambda_0": (
            summary.field_errors["lambda_0"]["posterior"].rmse
            / summary.field_errors["lambda_0"]["prior"].rmse
        ),
        "response_coverage": summary.coverage,
        "band_width_posterior": summary.band_width,
        "band_width_prior": summary.prior_band_width,
        "n_posterior_responses": summary.n_posterior_responses,
        "n_prior_responses": summary.n_prior_responses,
        "n_prior_skipped": summary.n_prior_skipped,
        "latent_mean": [float(v) for v in summary.latent_mean],
        "latent_std": [float(v) for v in summary.latent_std],
        "chain": diagnostics,
    }
