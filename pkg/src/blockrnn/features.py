"""Recurrence-feature classification and Monte-Carlo spectrum studies.

A recurrent matrix drives two kinds of recurring dynamics, read off its
spectrum:

* Type R-n: a real eigenvalue lambda of algebraic multiplicity n
  (geometric progressions lambda^j);
* Type C-n: a conjugate complex pair gamma * e^{+-i theta} of multiplicity n
  (gamma^j-damped rotations by j*theta).

Near-zero eigenvalues produce no recurring pattern and are reported as the
nullity. Classification clusters nearby computed eigenvalues so that trained
matrices (whose multiple eigenvalues are never exactly equal) report their
intended multiplicities; "strict" mode (tol_cluster=0) disables clustering
for exact-multiplicity counting on random matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import eigen
from .linalg import BlockDiagonalMatrix, Rng, as_matrix

__all__ = [
    "RecurrenceFeature",
    "FeatureReport",
    "FeatureHistogram",
    "classify_features",
    "real_eigen_fraction_mc",
    "feature_type_prevalence_mc",
    "snapshot_histogram",
    "jordan_block",
    "rotation_feature_block",
    "feature_matrix",
    "canonical_matrix",
    "report_to_json",
    "report_from_json",
    "report_to_text",
]

DEFAULT_TOL_ZERO = 1e-8
DEFAULT_TOL_CLUSTER = 1e-6


@dataclass(frozen=True)
class RecurrenceFeature:
    """One irreducible recurrent-dynamics pattern.

    kind "R": real eigenvalue ``lam`` with multiplicity ``order``.
    kind "C": conjugate pair with modulus ``gamma`` > 0 and angle
    ``theta`` in (0, pi), multiplicity ``order``.
    """

    kind: str
    order: int
    lam: float | None = None
    gamma: float | None = None
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("R", "C"):
            raise ValueError(f"kind must be 'R' or 'C', got {self.kind!r}")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.kind == "R" and (self.lam is None or self.gamma is not None or self.theta is not None):
            raise ValueError("R features carry lam only")
        if self.kind == "C" and (self.lam is not None or self.gamma is None or self.theta is None):
            raise ValueError("C features carry gamma and theta only")

    @property
    def modulus(self) -> float:
        return abs(self.lam) if self.kind == "R" else self.gamma

    @property
    def dims(self) -> int:
        """State dimensions this feature occupies."""
        return self.order if self.kind == "R" else 2 * self.order

    def label(self) -> str:
        return f"{self.kind}-{self.order}"


@dataclass
class FeatureReport:
    """Classification of one recurrent matrix: features plus nullity."""

    features: list[RecurrenceFeature]
    nullity: int
    source_dim: int

    def check_dims(self) -> None:
        total = sum(f.dims for f in self.features) + self.nullity
        if total != self.source_dim:
            raise ValueError(
                f"dimension accounting broken: features+nullity span {total}, "
                f"source dim {self.source_dim}"
            )

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for f in self.features:
            out[f.label()] = out.get(f.label(), 0) + 1
        return out

    def order_one_fraction(self) -> float:
        if not self.features:
            return 1.0
        return sum(1 for f in self.features if f.order == 1) / len(self.features)


def _feature_sort_key(f: RecurrenceFeature):
    if f.kind == "R":
        angle = 0.0 if f.lam >= 0 else math.pi
    else:
        angle = f.theta
    return (-f.modulus, angle, f.kind)


def _cluster_1d(values: list[float], gap: float) -> list[list[float]]:
    """Single-linkage clustering on a line: split sorted values at gaps > gap.

    gap == 0 means strict multiplicity-1 counting: nothing merges, not even
    exactly repeated values.
    """
    if not values:
        return []
    vs = sorted(values)
    if gap == 0.0:
        return [[v] for v in vs]
    groups = [[vs[0]]]
    for v in vs[1:]:
        if v - groups[-1][-1] <= gap:
            groups[-1].append(v)
        else:
            groups.append([v])
    return groups


def _cluster_pairs(points: list[complex], gap: float) -> list[list[complex]]:
    """Single-linkage clustering of complex points (union-find, O(n^2)).

    gap == 0 keeps every point separate (strict counting), mirroring
    _cluster_1d.
    """
    if gap == 0.0:
        return [[z] for z in sorted(points, key=lambda z: (z.real, z.imag))]
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(points[i] - points[j]) <= gap:
                pi, pj = find(i), find(j)
                if pi != pj:
                    parent[pj] = pi
    groups: dict[int, list[complex]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(points[i])
    # Deterministic group order (by first member's sort position).
    return [groups[k] for k in sorted(groups, key=lambda k: (points[k].real, points[k].imag))]


def classify_features(
    w,
    tol_zero: float = DEFAULT_TOL_ZERO,
    tol_cluster: float = DEFAULT_TOL_CLUSTER,
) -> FeatureReport:
    """Classify a recurrent matrix into R-n / C-n features plus nullity.

    Accepts a dense square matrix or a :class:`BlockDiagonalMatrix`; the
    latter is classified block by block and the reports concatenated (blocks
    are decoupled by construction, so the spectrum is the union).

    Both tolerances are relative to ``||w||_F``. ``tol_zero`` cuts the
    nullity: eigenvalues of modulus <= tol_zero * scale produce no feature.
    ``tol_cluster`` merges nearby eigenvalues into one feature of higher
    order; it also snaps conjugate pairs with tiny imaginary part onto the
    real axis first, because the computed eigenvalues of an order-n real
    cluster can split off the axis by ~eps^(1/n), far beyond the eigen
    solver's own snap. Pass ``tol_cluster=0`` for strict (multiplicity-1)
    counting.
    """
    if isinstance(w, BlockDiagonalMatrix):
        feats: list[RecurrenceFeature] = []
        nullity = 0
        for i in range(w.num_blocks):
            sub = classify_features(w.blocks[i], tol_zero=tol_zero, tol_cluster=tol_cluster)
            feats.extend(sub.features)
            nullity += sub.nullity
        feats.sort(key=_feature_sort_key)
        report = FeatureReport(feats, nullity, w.dim)
        report.check_dims()
        return report

    m = as_matrix(w)
    d = m.shape[0]
    scale = float(np.linalg.norm(m))
    if scale == 0.0:
        return FeatureReport([], d, d)

    pairs = eigen.eigenvalues(m)
    zero_cut = tol_zero * scale
    resnap = tol_cluster * scale

    reals: list[float] = []
    cplx: list[complex] = []
    nullity = 0
    for p in pairs:
        if p.modulus <= zero_cut:
            nullity += p.count()
        elif p.im <= resnap:
            # Real, or close enough to the axis that clustering would have
            # merged the pair with its reflection anyway.
            reals.extend([p.re] * p.count())
        else:
            cplx.append(complex(p.re, p.im))

    feats = []
    for grp in _cluster_1d(reals, resnap):
        feats.append(RecurrenceFeature("R", len(grp), lam=float(np.mean(grp))))
    for grp in _cluster_pairs(cplx, resnap):
        gamma = float(np.mean([abs(z) for z in grp]))
        theta = float(np.mean([math.atan2(z.imag, z.real) for z in grp]))
        feats.append(RecurrenceFeature("C", len(grp), gamma=gamma, theta=theta))
    feats.sort(key=_feature_sort_key)
    report = FeatureReport(feats, nullity, d)
    report.check_dims()
    return report


# ---------------------------------------------------------------------------
# Canonical constructions (used by initialization schemes and tests)


def jordan_block(lam: float, n: int) -> np.ndarray:
    """J_n(lambda): lambda on the diagonal, ones on the superdiagonal."""
    m = np.eye(n) * lam
    for i in range(n - 1):
        m[i, i + 1] = 1.0
    return m


def rotation_feature_block(gamma: float, theta: float, order: int = 1) -> np.ndarray:
    """C_n(gamma, theta): the real analogue of a Jordan block for a pair.

    2n x 2n, with C(gamma, theta) repeated on the block diagonal and I_2 on
    the block superdiagonal.
    """
    c = eigen.rotation_matrix(gamma, theta)
    m = np.zeros((2 * order, 2 * order))
    for i in range(order):
        m[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = c
        if i + 1 < order:
            m[2 * i : 2 * i + 2, 2 * i + 2 : 2 * i + 4] = np.eye(2)
    return m


def feature_matrix(f: RecurrenceFeature) -> np.ndarray:
    if f.kind == "R":
        return jordan_block(f.lam, f.order)
    return rotation_feature_block(f.gamma, f.theta, f.order)


def canonical_matrix(features: list[RecurrenceFeature], nullity: int = 0) -> np.ndarray:
    """Direct sum of the features' canonical blocks plus a zero block."""
    mats = [feature_matrix(f) for f in features]
    d = sum(m.shape[0] for m in mats) + nullity
    out = np.zeros((d, d))
    at = 0
    for m in mats:
        n = m.shape[0]
        out[at : at + n, at : at + n] = m
        at += n
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo studies


def _all_real(m: np.ndarray, tol_zero: float) -> bool:
    snap = tol_zero * float(np.linalg.norm(m))
    return all(p.im <= snap for p in eigen.eigenvalues(m))


def real_eigen_fraction_mc(d: int, trials: int, rng: Rng, tol_zero: float = DEFAULT_TOL_ZERO) -> float:
    """Fraction of iid N(0,1) d x d matrices with an all-real spectrum.

    Each trial draws from its own substream, so the estimate does not depend
    on evaluation order and trials can be resumed or parallelized.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = 0
    for t in range(trials):
        m = rng.substream(t).gaussian(0.0, 1.0, (d, d))
        if _all_real(m, tol_zero):
            hits += 1
    return hits / trials


def feature_type_prevalence_mc(
    d: int,
    trials: int,
    rng: Rng,
    tol_cluster: float = 0.0,
    symmetrize: bool = False,
) -> dict[tuple[str, int], float]:
    """Per-trial prevalence of each (kind, order) over random matrices.

    Returns the fraction of trials whose classification contains at least one
    feature of the given kind and order. Default clustering is strict
    (tol_cluster=0): continuous random matrices have simple eigenvalues with
    probability one, so any order > 1 frequency indicates a classifier bug.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    counts: dict[tuple[str, int], int] = {}
    for t in range(trials):
        m = rng.substream(t).gaussian(0.0, 1.0, (d, d))
        if symmetrize:
            m = 0.5 * (m + m.T)
        rep = classify_features(m, tol_cluster=tol_cluster)
        for key in {(f.kind, f.order) for f in rep.features}:
            counts[key] = counts.get(key, 0) + 1
    return {k: v / trials for k, v in sorted(counts.items())}


# ---------------------------------------------------------------------------
# Snapshot histograms and serialization


@dataclass
class FeatureHistogram:
    """Summary of one FeatureReport, e.g. one training snapshot."""

    snapshot_index: int
    counts: dict[str, int]
    nullity: int
    gamma_percentiles: list[float] | None
    theta_percentiles: list[float] | None

    def to_json(self) -> dict:
        return {
            "snapshot": self.snapshot_index,
            "counts": dict(sorted(self.counts.items())),
            "nullity": self.nullity,
            "gamma_percentiles": self.gamma_percentiles,
            "theta_percentiles": self.theta_percentiles,
        }


def _five_number(values: list[float]) -> list[float]:
    return [float(x) for x in np.percentile(values, [0, 25, 50, 75, 100])]


def snapshot_histogram(reports: list[FeatureReport], indices: list[int] | None = None) -> list[FeatureHistogram]:
    """Per-snapshot feature counts plus gamma/theta five-number summaries.

    Percentile fields are None when a report has no C features.
    """
    if not reports:
        raise ValueError("need at least one report")
    if indices is None:
        indices = list(range(len(reports)))
    if len(indices) != len(reports):
        raise ValueError("indices and reports must align")
    out = []
    for idx, rep in zip(indices, reports):
        gammas = [f.gamma for f in rep.features if f.kind == "C"]
        thetas = [f.theta for f in rep.features if f.kind == "C"]
        out.append(
            FeatureHistogram(
                snapshot_index=idx,
                counts=rep.counts(),
                nullity=rep.nullity,
                gamma_percentiles=_five_number(gammas) if gammas else None,
                theta_percentiles=_five_number(thetas) if thetas else None,
            )
        )
    return out


def report_to_json(report: FeatureReport) -> dict:
    feats = []
    for f in report.features:
        if f.kind == "R":
            feats.append({"kind": "R", "order": f.order, "lambda": f.lam})
        else:
            feats.append({"kind": "C", "order": f.order, "gamma": f.gamma, "theta": f.theta})
    return {"features": feats, "nullity": report.nullity, "dim": report.source_dim}


def report_from_json(obj) -> FeatureReport:
    if isinstance(obj, str):
        obj = json.loads(obj)
    feats = []
    for f in obj["features"]:
        if f["kind"] == "R":
            feats.append(RecurrenceFeature("R", int(f["order"]), lam=float(f["lambda"])))
        else:
            feats.append(
                RecurrenceFeature(
                    "C", int(f["order"]), gamma=float(f["gamma"]), theta=float(f["theta"])
                )
            )
    rep = FeatureReport(feats, int(obj["nullity"]), int(obj["dim"]))
    rep.check_dims()
    return rep


def report_to_text(report: FeatureReport) -> str:
    """Human-readable report, parameters to 12 significant digits."""
    lines = [f"dim {report.source_dim}", f"nullity {report.nullity}"]
    for f in report.features:
        if f.kind == "R":
            lines.append(f"R-{f.order} lambda={f.lam:.12g}")
        else:
            lines.append(f"C-{f.order} gamma={f.gamma:.12g} theta={f.theta:.12g}")
    return "\n".join(lines) + "\n"
