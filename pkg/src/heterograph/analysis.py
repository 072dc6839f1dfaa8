"""Numerical checks of the robustness, two-hop and spectral results, plus
degree-bucket diagnostics for trained models.

Everything here is a pure function of its inputs.  The symmetric
eigensolver is a cyclic Jacobi iteration with strictly sequential sweeps,
so spectra are reproducible bit for bit on a given platform.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GraphError, unnormalized_laplacian
from .synth import compatibility_from_h


class SingularConfiguration(ValueError):
    """Raised when a closed form hits a vanishing denominator."""


class EigenNotConverged(RuntimeError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"Jacobi did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


# --- perturbation thresholds ------------------------------------------------

_SING_TOL = 1e-12


@dataclass(frozen=True)
class PerturbationReport:
    """Minimal class-count perturbations that flip a one-hot, degree-``d`` node.

    ``delta1_abs`` belongs to the layer with self-loops, ``delta2_abs`` to the
    one without.  ``less_robust`` names the layer with the smaller threshold.
    """

    h: float
    d: float
    num_classes: int
    delta1_abs: float
    delta2_abs: float
    crossover_h: float
    less_robust: str
    singular: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["singular"] = list(self.singular)
        return out


def _self_loop_den(h, d, k) -> float:
    return (d + 1) * (k - 1 + (k * h - 1) * d)


def _singular_flags(h, d, k) -> tuple[str, ...]:
    flags = []
    if abs(_self_loop_den(h, d, k)) <= _SING_TOL * max(1.0, (d + 1) * (k + d)):
        flags.append("self_loop")
    if abs(1.0 - h * k) <= _SING_TOL:
        flags.append("no_self_loop")
    return tuple(flags)


def crossover_h(d: float, num_classes: int) -> float:
    return (1 - num_classes + 2 * d) / (2 * num_classes * d)


def gcn_perturbation_thresholds(h: float, d: float, num_classes: int) -> PerturbationReport:
    if d < 1 or num_classes < 2 or not 0.0 <= h <= 1.0:
        raise ValueError(f"need d >= 1, num_classes >= 2 and h in [0, 1]; got h={h}, d={d}, k={num_classes}")
    k = num_classes
    delta1 = abs((-h * k * d - k + d + 1) / (k - 1))
    delta2 = abs((1 - h * k) * d / (k - 1))
    singular = _singular_flags(h, d, k)
    if "no_self_loop" in singular:
        delta2 = 0.0
    if math.isclose(delta1, delta2, rel_tol=1e-12, abs_tol=1e-12):
        weaker = "tie"
    else:
        weaker = "self_loop" if delta1 < delta2 else "no_self_loop"
    return PerturbationReport(h, d, k, delta1, delta2, crossover_h(d, k), weaker, singular)


def aggregated_class_matrix(h: float, d: float, num_classes: int, self_loops: bool = True) -> np.ndarray:
    """Expected aggregated one-hot features of one node per class, stacked by class.

    Diagonal ``h*d (+1)`` and off-diagonal ``(1-h)*d/(k-1)``.
    """
    k = num_classes
    M = np.full((k, k), (1 - h) * d / (k - 1))
    np.fill_diagonal(M, h * d + (1.0 if self_loops else 0.0))
    return M


def closed_form_inverse(h: float, d: float, num_classes: int, self_loops: bool = True) -> np.ndarray:
    """Inverse of :func:`aggregated_class_matrix` via the rank-one update formula."""
    k = num_classes
    flags = _singular_flags(h, d, k)
    key = "self_loop" if self_loops else "no_self_loop"
    if key in flags:
        raise SingularConfiguration(f"{key} matrix is singular at h={h}, d={d}, k={k}")
    if self_loops:
        scale = 1.0 / _self_loop_den(h, d, k)
        diag, off = (k - 1) + (k - 2 + h) * d, (h - 1) * d
    else:
        scale = 1.0 / ((1 - h * k) * d)
        diag, off = -(k - 2 + h), 1 - h
    inv = np.full((k, k), off * scale)
    np.fill_diagonal(inv, diag * scale)
    return inv


@dataclass(frozen=True)
class WeightCheck:
    residual_self_loop: float
    residual_no_self_loop: float
    inverse_self_loop: np.ndarray = field(repr=False)
    inverse_no_self_loop: np.ndarray = field(repr=False)

    @property
    def max_residual(self) -> float:
        return max(self.residual_self_loop, self.residual_no_self_loop)


def verify_optimal_weight(h: float, d: float, num_classes: int) -> WeightCheck:
    """Multiply each class matrix by its closed-form inverse; report ``max|M M^-1 - I|``."""
    eye = np.eye(num_classes)
    res, invs = [], []
    for loops in (True, False):
        inv = closed_form_inverse(h, d, num_classes, loops)
        M = aggregated_class_matrix(h, d, num_classes, loops)
        res.append(float(np.abs(M @ inv - eye).max()))
        invs.append(inv)
    return WeightCheck(res[0], res[1], invs[0], invs[1])


# --- two-hop compatibility ------------------------------------------------

def two_hop_compatibility(h: float, num_classes: int) -> tuple[np.ndarray, float]:
    """``P @ P`` and its smallest diagonal-minus-off-diagonal margin within a row."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    P = compatibility_from_h(h, num_classes)
    P2 = P @ P
    off = P2.copy()
    np.fill_diagonal(off, -np.inf)
    margin = float(np.min(np.diag(P2) - off.max(axis=1)))
    return P2, margin


# --- smoothness -------------------------------------------------------------

def _as_csr(L) -> sp.csr_matrix:
    return L.tocsr() if sp.issparse(L) else sp.csr_matrix(np.asarray(L, dtype=np.float64))


def _edge_smoothness(L: sp.csr_matrix, s: np.ndarray) -> float:
    coo = L.tocoo()
    off = coo.row != coo.col
    rows, cols, w = coo.row[off], coo.col[off], -coo.data[off]
    return float(np.sum(w * (s[rows] - s[cols]) ** 2))


def smoothness(L, s) -> float:
    """Total squared variation of ``s`` over edges, counting both directions.

    Equals ``2 s^T L s`` for ``L = D - A``.  Computed by the quadratic form and
    by walking the stored off-diagonal entries; a disagreement raises.
    """
    L = _as_csr(L)
    s = np.asarray(s, dtype=np.float64)
    if L.shape != (s.size, s.size):
        raise ValueError(f"Laplacian is {L.shape}, signal has length {s.size}")
    quad = 2.0 * float(s @ (L @ s))
    walk = _edge_smoothness(L, s)
    if not math.isclose(quad, walk, rel_tol=1e-12, abs_tol=1e-9):
        raise ArithmeticError(f"smoothness routes disagree: {quad} vs {walk}")
    return walk


def _binary(s, n: int | None = None) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1 or (n is not None and s.size != n):
        raise ValueError("signal must be a vector with one entry per node")
    if not np.isin(s, (0, 1)).all():
        raise ValueError("signal must be binary (0/1)")
    return s.astype(np.float64)


def homophily_from_smoothness(graph: Graph, s) -> float:
    s = _binary(s, graph.n)
    if graph.num_edges == 0:
        raise GraphError("homophily undefined on a graph without edges")
    return 1.0 - smoothness(unnormalized_laplacian(graph), s) / (2 * graph.num_edges)


# --- spectra ----------------------------------------------------------------

@dataclass(frozen=True)
class Eigen:
    values: np.ndarray
    vectors: np.ndarray
    sweeps: int
    residual: float  # off-diagonal Frobenius norm at exit
    scale: float     # Frobenius norm of the input


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100) -> Eigen:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps visit (p, q) pairs in row-major order and stop once the
    off-diagonal Frobenius norm drops below ``tol * ||A||_F``.
    Eigenvalues come back ascending, eigenvectors as columns.
    """
    a = np.array(A.toarray() if sp.issparse(A) else A, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ValueError("jacobi_eigh needs a square symmetric matrix")
    scale = float(np.linalg.norm(a))
    v = np.eye(n)

    def off_norm() -> float:
        off = a.copy()
        np.fill_diagonal(off, 0.0)
        return float(np.linalg.norm(off))

    target = tol * scale
    sweeps = 0
    res = off_norm()
    while res > target:
        if sweeps == max_sweeps:
            raise EigenNotConverged(sweeps, res)
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        res = off_norm()
    order = np.argsort(np.diag(a), kind="stable")
    return Eigen(np.diag(a)[order].copy(), v[:, order], sweeps, res, scale)


def laplacian_spectrum(L, solver: str = "jacobi") -> Eigen:
    if solver == "jacobi":
        return jacobi_eigh(L)
    if solver == "lapack":
        dense = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=np.float64)
        w, v = np.linalg.eigh(dense)
        off = v.T @ dense @ v
        np.fill_diagonal(off, 0.0)
        return Eigen(w, v, 0, float(np.linalg.norm(off)), float(np.linalg.norm(dense)))
    raise ValueError(f"unknown solver {solver!r}")


MAX_SPECTRAL_N = 2000


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)   # (signals, n)
    tail_energy: np.ndarray = field(repr=False)    # (signals, n); column M = sum_{i >= M} c_i^2
    smoothness: np.ndarray = field(repr=False, default=None)
    homophily: np.ndarray = field(repr=False, default=None)
    signal_norm2: np.ndarray = field(repr=False, default=None)
    residual: float = 0.0
    scale: float = 0.0
    sweeps: int = 0

    @property
    def parseval_error(self) -> float:
        """``max |sum_i c_i^2 - ||s||^2|`` over the signals."""
        return float(np.max(np.abs(self.tail_energy[:, 0] - self.signal_norm2)))

    def summary(self) -> dict:
        return {
            "n": int(self.eigenvalues.size),
            "signals": int(self.coefficients.shape[0]),
            "lambda_min": float(self.eigenvalues[0]),
            "lambda_max": float(self.eigenvalues[-1]),
            "sweeps": self.sweeps,
            "residual": self.residual,
            "relative_residual": self.residual / self.scale if self.scale else 0.0,
            "smoothness": [float(x) for x in self.smoothness],
            "homophily": [None if not np.isfinite(x) else float(x) for x in self.homophily],
            "parseval_error": self.parseval_error,
        }


def spectral_energy(L, signals, solver: str = "jacobi", eig: Eigen | None = None) -> SpectralReport:
    """Eigenbasis coefficients and tail energies of each row of ``signals``."""
    L = _as_csr(L)
    n = L.shape[0]
    if n > MAX_SPECTRAL_N:
        raise ValueError(f"dense spectral analysis is limited to n <= {MAX_SPECTRAL_N}, got {n}")
    S = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    if S.shape[1] != n:
        raise ValueError(f"signals have length {S.shape[1]}, Laplacian is {n}x{n}")
    eig = eig or laplacian_spectrum(L, solver)
    coef = S @ eig.vectors
    tails = np.cumsum((coef ** 2)[:, ::-1], axis=1)[:, ::-1]
    smooth = np.array([smoothness(L, s) for s in S])
    m = L.diagonal().sum() / 2.0
    homo = 1.0 - smooth / (2 * m) if m > 0 else np.full(len(S), np.nan)
    return SpectralReport(eig.values, eig.vectors, coef, tails, smooth, homo, np.sum(S * S, axis=1),
                          eig.residual, eig.scale, eig.sweeps)


def energy_dominance(graph: Graph, s, t, report: SpectralReport | None = None) -> int | None:
    """Smallest cutoff ``M`` in ``1..n-1`` where ``s`` carries strictly more tail energy than ``t``."""
    s, t = _binary(s, graph.n), _binary(t, graph.n)
    if report is None:
        report = spectral_energy(unnormalized_laplacian(graph), np.vstack([s, t]))
        ts, tt = report.tail_energy[0], report.tail_energy[1]
    else:
        coef = np.vstack([s, t]) @ report.eigenvectors
        tails = np.cumsum((coef ** 2)[:, ::-1], axis=1)[:, ::-1]
        ts, tt = tails[0], tails[1]
    hits = np.flatnonzero(ts[1:] > tt[1:])
    found = int(hits[0]) + 1 if hits.size else None
    if graph.num_edges and found is None:
        hs, ht = homophily_from_smoothness(graph, s), homophily_from_smoothness(graph, t)
        assert not hs < ht, f"no dominating cutoff although h_s={hs} < h_t={ht}"
    return found


# --- degree buckets -----------------------------------------------------------

@dataclass(frozen=True)
class Bucket:
    lo: int
    hi: float  # exclusive, may be inf
    count: int
    accuracy: float


def degree_bucket_accuracy(predictions, labels, graph: Graph, boundaries, subset=None) -> list[Bucket]:
    """Accuracy per degree range ``[b_i, b_{i+1})``; the last range is open.

    Buckets without nodes are left out rather than reported as zero.
    """
    b = [int(x) for x in boundaries]
    if not b or any(x >= y for x, y in zip(b, b[1:])):
        raise ValueError(f"boundaries must be strictly increasing, got {boundaries}")
    idx = np.arange(graph.n) if subset is None else np.asarray(subset)
    deg = graph.degrees[idx]
    if deg.size and deg.min() < b[0]:
        raise ValueError(f"degree {int(deg.min())} lies below the first boundary {b[0]}")
    correct = np.asarray(predictions)[idx] == np.asarray(labels)[idx]
    edges = b + [math.inf]
    out = []
    for lo, hi in zip(edges, edges[1:]):
        sel = (deg >= lo) & (deg < hi)
        if sel.any():
            out.append(Bucket(lo, hi, int(sel.sum()), float(correct[sel].mean())))
    return out


def bucket_gap(buckets: list[Bucket]) -> float:
    """Accuracy of the highest populated bucket minus that of the lowest."""
    if len(buckets) < 2:
        raise ValueError("need at least two populated buckets")
    return buckets[-1].accuracy - buckets[0].accuracy


def quantile_boundaries(degrees, quantiles=(0.5, 0.9)) -> list[int]:
    """Integer bucket boundaries at degree quantiles, starting from the minimum degree."""
    degrees = np.asarray(degrees)
    cuts = sorted({int(np.ceil(np.quantile(degrees, q))) for q in quantiles})
    lo = int(degrees.min())
    return [lo] + [c for c in cuts if c > lo]


# --- report files ---------------------------------------------------------------

def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_threshold_csv(reports: list[PerturbationReport], path) -> None:
    cols = ("h", "d", "num_classes", "delta1_abs", "delta2_abs", "crossover_h", "less_robust", "singular")
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            w.writerow([repr(r.h), repr(r.d), r.num_classes, repr(r.delta1_abs), repr(r.delta2_abs),
                        repr(r.crossover_h), r.less_robust, ";".join(r.singular)])


def write_tail_energy_csv(report: SpectralReport, path, names=None) -> None:
    names = list(names) if names is not None else [f"s{i}" for i in range(report.tail_energy.shape[0])]
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["M", "eigenvalue", *names])
        for M in range(report.eigenvalues.size):
            w.writerow([M, repr(float(report.eigenvalues[M])),
                        *(repr(float(x)) for x in report.tail_energy[:, M])])


def write_bucket_csv(rows, path) -> None:
    """``rows`` are ``(tag, Bucket)`` pairs; ``tag`` labels the run."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["run", "lo", "hi", "count", "accuracy"])
        for tag, b in rows:
            w.writerow([tag, b.lo, "inf" if math.isinf(b.hi) else int(b.hi), b.count, repr(b.accuracy)])
