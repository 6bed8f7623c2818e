"""Design artifacts and CSV/JSON exports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bellman import CostCoefficients
from .design import DesignResult
from .discretization import Discretization
from .grid import Axis, GridSpec
from .montecarlo import EmpiricalReport, full_grid_policy

FORMAT_VERSION = 1


class ArtifactVersionError(ValueError):
    pass


@dataclass
class DesignArtifact:
    """Everything needed to run a designed policy without rebuilding kernels.

    Policy tables are stored on the full grid.
    """

    coeffs: CostCoefficients
    grid: GridSpec
    stop: np.ndarray  # (N+1, G)
    decision: np.ndarray  # (N+1, G)
    estimate: np.ndarray  # (N+1, G, M)
    rho: np.ndarray  # (N+1, G)
    alpha: np.ndarray
    beta: np.ndarray
    dual: float
    expected_runlength: float
    converged: bool
    min_samples: int
    config_text: str = ""

    @property
    def N(self) -> int:
        return self.stop.shape[0] - 1


def artifact_from_design(disc: Discretization, result: DesignResult, config_text: str = "") -> DesignArtifact:
    stop, decision, estimate = full_grid_policy(disc, result.policy)
    rho = np.stack([disc.unfold(result.table.rho[n]) for n in range(disc.N + 1)])
    perf = result.errors.perf
    runlength = perf.expected_runlength if perf is not None else float("nan")
    return DesignArtifact(result.coeffs, disc.grid, stop, decision, np.asarray(estimate), rho,
                          np.asarray(result.errors.alpha), np.asarray(result.errors.beta), result.dual,
                          runlength, result.converged, result.policy.min_samples, config_text)


def save_artifact(art: DesignArtifact, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    axes = np.array([[a.lower, a.upper, a.count] for a in art.grid.axes], dtype=float)
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh, format_version=FORMAT_VERSION, lam=art.coeffs.lam, mu=art.coeffs.mu, axes=axes,
            stop=art.stop, decision=art.decision, estimate=art.estimate, rho=art.rho, alpha=art.alpha,
            beta=art.beta, dual=art.dual, expected_runlength=art.expected_runlength, converged=art.converged,
            min_samples=art.min_samples, config_text=np.array(art.config_text))
    return path


def load_artifact(path) -> DesignArtifact:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no design artifact at {path}")
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"]) if "format_version" in z else -1
        if version != FORMAT_VERSION:
            raise ArtifactVersionError(f"artifact format {version}, expected {FORMAT_VERSION}")
        grid = GridSpec(tuple(Axis(float(lo), float(hi), int(k)) for lo, hi, k in z["axes"]))
        return DesignArtifact(
            CostCoefficients(z["lam"], z["mu"]), grid, z["stop"], z["decision"], z["estimate"], z["rho"],
            z["alpha"], z["beta"], float(z["dual"]), float(z["expected_runlength"]), bool(z["converged"]),
            int(z["min_samples"]), str(z["config_text"]))


# exports


def _g(v) -> str:
    """Six significant digits, stable across platforms."""
    return f"{float(v):.6g}"


def report_rows(report: EmpiricalReport, scheme: str, alpha_bar=None, beta_bar=None) -> list[dict]:
    M = report.alpha.size
    rows = []
    for m in range(M):
        rows.append({"scheme": scheme, "quantity": "alpha", "hypothesis": m + 1,
                     "constraint": "" if alpha_bar is None else _g(alpha_bar[m]),
                     "value": _g(report.alpha[m]), "se": _g(report.alpha_se[m])})
    for m in range(M):
        rows.append({"scheme": scheme, "quantity": "beta", "hypothesis": m + 1,
                     "constraint": "" if beta_bar is None else _g(beta_bar[m]),
                     "value": _g(report.beta[m]), "se": _g(report.beta_se[m])})
    for m in range(M):
        rows.append({"scheme": scheme, "quantity": "runlength", "hypothesis": m + 1, "constraint": "",
                     "value": _g(report.runlength_given[m]), "se": _g(report.runlength_given_se[m])})
    rows.append({"scheme": scheme, "quantity": "runlength", "hypothesis": "all", "constraint": "",
                 "value": _g(report.runlength), "se": _g(report.runlength_se)})
    return rows


REPORT_COLUMNS = ["scheme", "quantity", "hypothesis", "constraint", "value", "se"]


def write_report(report: EmpiricalReport, out_dir, scheme: str, alpha_bar=None, beta_bar=None) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{scheme}_report.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        w.writerows(report_rows(report, scheme, alpha_bar, beta_bar))
    json_path = out_dir / f"{scheme}_report.json"
    payload = report.to_dict()
    payload["scheme"] = scheme
    json_path.write_text(json.dumps(payload, indent=2))
    return csv_path, json_path


def region_labels(stop: np.ndarray, decision: np.ndarray) -> np.ndarray:
    """``continue`` or ``stop-m`` (1-based) for every (stage, node)."""
    labels = np.char.add("stop-", (decision + 1).astype(str))
    return np.where(stop, labels, "continue")


def write_regions(stop, decision, grid: GridSpec, path, stages: Optional[range] = None) -> Path:
    """One row per (stage, grid node) with its region label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = grid.points()
    labels = region_labels(np.asarray(stop), np.asarray(decision))
    stages = range(labels.shape[0]) if stages is None else stages
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"t{d + 1}" for d in range(grid.ndim)] + ["region"])
        for n in stages:
            for i in range(pts.shape[0]):
                w.writerow([n] + [_g(v) for v in pts[i]] + [labels[n, i]])
    return path


def write_trace(result: DesignResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not result.trace:
        raise ValueError("design result has no iteration trace")
    M = result.trace[0].lam.size
    header = (["iter"] + [f"lam_{m + 1}" for m in range(M)] + [f"mu_{m + 1}" for m in range(M)]
              + [f"alpha_{m + 1}" for m in range(M)] + [f"beta_{m + 1}" for m in range(M)] + ["L"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in result.trace:
            w.writerow([row.iteration] + [_g(v) for v in np.concatenate([row.lam, row.mu, row.alpha, row.beta])]
                       + [_g(row.dual)])
    return path
