"""Spectral post-processing of the reduced generator.

Eigenvalues are reported sorted by descending real part; the leading one
is the estimate of the trivial eigenvalue and its deviation from zero is a
convergence diagnostic, not forced.  Implied timescales are -1/Re(kappa),
with an infinite sentinel for eigenvalues indistinguishable from zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ClusteringError

ZERO_EIGENVALUE_TOL = 1e-12


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # complex, descending real part
    timescales: np.ndarray  # -1/Re; np.inf where |Re| < tol
    eigenvectors: np.ndarray  # (r_p, n_ev) coordinates in the whitened basis
    eigenfunction_values: np.ndarray  # (m, n_ev) evaluations at the data
    mode: str

    @property
    def n_ev(self):
        return len(self.eigenvalues)


def spectrum(rg, n_ev):
    """Leading eigenpairs of the reduced matrix plus eigenfunction values.

    Reversible matrices get a symmetric solve (real spectrum); general
    ones a full eigensolve with conjugate pairs kept adjacent.  The
    eigenfunction value of eigenvector v at sample l is the l-th row of
    the sample factor (un-reweighted when importance weights were used)
    times v.
    """
    r_p = rg.M.shape[0]
    if n_ev > r_p:
        raise ValueError(f"requested {n_ev} eigenpairs from a rank-{r_p} model")
    if rg.mode == "rev":
        vals, vecs = np.linalg.eigh(0.5 * (rg.M + rg.M.T))
        vals = vals[::-1].astype(complex)
        vecs = vecs[:, ::-1]
    else:
        vals, vecs = np.linalg.eig(rg.M)
        order = np.argsort(-vals.real)
        vals, vecs = vals[order], vecs[:, order]
    vals, vecs = vals[:n_ev], vecs[:, :n_ev]
    with np.errstate(divide="ignore"):
        ts = np.where(np.abs(vals.real) < ZERO_EIGENVALUE_TOL, np.inf, -1.0 / vals.real)
    V = rg.svd.V
    if rg.weights is not None:
        # Rows of V carry sqrt(w); undo it to get plain eigenfunction
        # values.  Samples with zero weight contributed nothing to the
        # estimator and get value 0 here.
        w = np.asarray(rg.weights)
        inv = np.zeros_like(w)
        inv[w > 0] = 1.0 / np.sqrt(w[w > 0])
        V = V * inv[:, None]
    func_vals = V @ vecs
    if rg.mode == "rev":
        vecs = vecs.real.astype(float)
        func_vals = func_vals.real.astype(float)
    return SpectrumReport(
        eigenvalues=vals,
        timescales=ts,
        eigenvectors=vecs,
        eigenfunction_values=func_vals,
        mode=rg.mode,
    )


def rescale_timescales(report, reference_t1):
    """Multiply all timescales so the first nontrivial one matches a
    reference value exactly; ratios between timescales are unchanged."""
    t1 = report.timescales[1]
    if not np.isfinite(t1):
        raise ValueError("first nontrivial timescale is not finite")
    ratio = reference_t1 / t1
    return replace(report, timescales=report.timescales * ratio)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # (m,) integers in [1, n_clusters]
    centers: np.ndarray  # (n_clusters, n_coords) in eigenfunction coordinates


def cluster(report, n_clusters, seed=0, n_restarts=20):
    """K-means metastable decomposition in eigenfunction coordinates.

    Clusters the real parts of the leading ``n_clusters`` eigenfunction
    coordinates; deterministic given the seed.
    """
    if n_clusters > report.n_ev:
        raise ValueError("more clusters than eigenfunctions")
    coords = report.eigenfunction_values[:, :n_clusters].real
    return cluster_coordinates(coords, n_clusters, seed=seed, n_restarts=n_restarts)


def cluster_coordinates(coords, n_clusters, seed=0, n_restarts=20):
    """K-means on raw coordinate rows; re-seeds (up to 5 times) if any
    cluster comes back empty, raises ClusteringError on degenerate input."""
    from sklearn.cluster import KMeans

    coords = np.asarray(coords, dtype=np.float64)
    if np.allclose(coords, coords[0], atol=1e-14):
        if n_clusters == 1:
            return ClusterAssignment(np.ones(len(coords), dtype=int), coords[:1].copy())
        raise ClusteringError("all samples identical in eigenfunction coordinates")
    for attempt in range(5):
        km = KMeans(
            n_clusters=n_clusters,
            n_init=n_restarts,
            random_state=seed + attempt,
        ).fit(coords)
        labels = km.labels_ + 1
        if len(np.unique(labels)) == n_clusters:
            return ClusterAssignment(labels, km.cluster_centers_)
    raise ClusteringError("k-means kept producing empty clusters")


# -- CSV artifacts ----------------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def write_eigenvalues_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "re", "im", "timescale"])
        for k, (val, ts) in enumerate(zip(report.eigenvalues, report.timescales)):
            writer.writerow([k, _fmt(val.real), _fmt(val.imag), _fmt(ts)])


def write_eigenfunctions_csv(report, path):
    n_ev = report.n_ev
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample"] + [f"ef{k}" for k in range(n_ev)])
        for l, row in enumerate(report.eigenfunction_values):
            writer.writerow([l] + [_fmt(np.real(x)) for x in row])


def write_clusters_csv(assignment, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "label"])
        for l, lab in enumerate(assignment.labels):
            writer.writerow([l, int(lab)])


def read_eigenfunctions_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
    return data
