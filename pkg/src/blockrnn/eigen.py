"""Eigenvalues of small real matrices and constructive real block-diagonalization.

Every real square matrix is similar over R to a block-diagonal matrix whose
blocks are 1x1 (real eigenvalues) and 2x2 scaled rotations

    C(gamma, theta) = gamma * [[cos theta, sin theta], [-sin theta, cos theta]]

(one per conjugate complex pair gamma * e^{+-i theta}). This module computes
eigenvalues for analysis-sized matrices (d <= 64 by default) and, for matrices
with well-separated spectra, the similarity basis realizing that form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix

__all__ = [
    "ComplexPair",
    "RealBlockForm",
    "EigenError",
    "ClusteredEigenvaluesError",
    "eigenvalues",
    "real_block_diagonalize",
    "spectral_radius",
    "rotation_matrix",
]

DEFAULT_TOL = 1e-10
MAX_ANALYSIS_DIM = 64


class EigenError(RuntimeError):
    """Eigen-solver failure (non-convergence, singular basis, ...)."""


class ClusteredEigenvaluesError(EigenError):
    """Eigenvalues too close for the requested decomposition."""


@dataclass(frozen=True)
class ComplexPair:
    """One real eigenvalue (im == 0) or one conjugate pair (im > 0).

    A pair with im > 0 stands for both gamma*e^{i theta} and its conjugate,
    so it accounts for two dimensions of the source matrix.
    """

    re: float
    im: float

    @property
    def is_real(self) -> bool:
        return self.im == 0.0

    @property
    def modulus(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def angle(self) -> float:
        """Argument of the im >= 0 representative, in [0, pi]."""
        return math.atan2(self.im, self.re)

    def count(self) -> int:
        """Dimensions accounted for: 1 if real, 2 if a conjugate pair."""
        return 1 if self.is_real else 2


def rotation_matrix(gamma: float, theta: float) -> np.ndarray:
    """The 2x2 scaled-rotation block C(gamma, theta)."""
    c, s = math.cos(theta), math.sin(theta)
    return gamma * np.array([[c, s], [-s, c]])


def _eig2x2(m: np.ndarray) -> list[ComplexPair]:
    # Closed form via the characteristic polynomial; exact for the 2x2 case.
    a, b = m[0, 0], m[0, 1]
    c, d = m[1, 0], m[1, 1]
    half_tr = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0.0:
        r = math.sqrt(disc)
        return [ComplexPair(half_tr + r, 0.0), ComplexPair(half_tr - r, 0.0)]
    return [ComplexPair(half_tr, math.sqrt(-disc))]


def _sort_key(p: ComplexPair):
    # Modulus descending, then angle ascending. (modulus, angle) determines
    # the value, so no further tiebreak is needed.
    return (-p.modulus, p.angle)


def eigenvalues(m, tol: float = DEFAULT_TOL, max_dim: int = MAX_ANALYSIS_DIM) -> list[ComplexPair]:
    """Eigenvalues of a real square matrix as canonical ComplexPair values.

    Uses the closed form for d <= 2 and the balanced Hessenberg + Francis
    double-shift QR iteration (LAPACK dgeev) above that. Imaginary parts below
    ``tol * ||m||_F`` are snapped to exactly zero; conjugate pairs are merged
    into a single entry with im > 0. Result is sorted by modulus descending,
    then angle ascending.

    Raises
    ------
    ValueError
        Non-square input, or dimension above ``max_dim`` (this solver is for
        analysis-sized matrices, not the training hot path).
    EigenError
        If the QR iteration fails to converge within its sweep cap.
    """
    m = as_matrix(m)
    d = m.shape[0]
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"eigenvalues needs a square matrix, got {m.shape}")
    if d > max_dim:
        raise ValueError(f"dimension {d} exceeds analysis cap {max_dim}")

    if d == 1:
        return [ComplexPair(float(m[0, 0]), 0.0)]
    if d == 2:
        return sorted(_eig2x2(m), key=_sort_key)

    try:
        w = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"QR iteration did not converge: {exc}") from exc

    snap = tol * float(np.linalg.norm(m))
    out: list[ComplexPair] = []
    pos = 0
    neg = 0
    for z in w:
        im = float(z.imag)
        if abs(im) <= snap:
            out.append(ComplexPair(float(z.real), 0.0))
        elif im > 0:
            out.append(ComplexPair(float(z.real), im))
            pos += 1
        else:
            neg += 1
    if pos != neg:
        # Real input: LAPACK returns exact conjugates, so this cannot happen
        # unless the snap threshold split a pair. Treat as near-real.
        raise EigenError("conjugate pairing failed; eigenvalues straddle the snap tolerance")
    out.sort(key=_sort_key)
    return out


def spectral_radius(m) -> float:
    """max |lambda| over the spectrum."""
    return max(p.modulus for p in eigenvalues(m))


@dataclass
class RealBlockForm:
    """Result of :func:`real_block_diagonalize`.

    ``basis @ block_matrix() @ inv(basis)`` reconstructs the source matrix.
    ``blocks`` holds 1x1 blocks ``[[lambda]]`` for real eigenvalues, 2x2
    scaled rotations for conjugate pairs, and (in merged-real mode) 2x2
    diagonal blocks ``diag(lambda_i, lambda_j)``.
    """

    basis: np.ndarray
    blocks: list[np.ndarray]

    def block_matrix(self) -> np.ndarray:
        d = sum(b.shape[0] for b in self.blocks)
        out = np.zeros((d, d))
        at = 0
        for b in self.blocks:
            n = b.shape[0]
            out[at : at + n, at : at + n] = b
            at += n
        return out

    def reconstruct(self) -> np.ndarray:
        """B @ diag(blocks) @ B^{-1}."""
        bd = self.block_matrix()
        # solve on the right: (B @ bd) @ B^{-1}  ==  solve(B^T, (B @ bd)^T)^T
        return np.linalg.solve(self.basis.T, (self.basis @ bd).T).T


def _inverse_iteration(a: np.ndarray, shift: complex, iters: int = 3) -> np.ndarray:
    """Eigenvector of ``a`` for the eigenvalue nearest ``shift``.

    Standard inverse iteration: repeatedly solve (a - shift I) v = v_prev and
    normalize. The shift is nudged off the exact eigenvalue so the solve stays
    well-posed; the near-singularity is what amplifies the eigendirection.
    """
    d = a.shape[0]
    scale = max(float(np.linalg.norm(a)), 1.0)
    complex_shift = bool(np.iscomplex(shift))
    eye = np.eye(d)
    # Deterministic generic start vector (no RNG needed here).
    v = np.linspace(1.0, 2.0, d).astype(complex if complex_shift else float)
    v /= np.linalg.norm(v)
    nudge = 1e-12 * scale
    for attempt in range(6):
        try:
            lu = a - (shift + nudge) * eye
            w = v
            for _ in range(iters):
                w = np.linalg.solve(lu, w)
                w = w / np.linalg.norm(w)
            return w
        except np.linalg.LinAlgError:
            nudge *= 100.0
    raise EigenError("inverse iteration could not factor the shifted matrix")


def real_block_diagonalize(
    m,
    tol: float = DEFAULT_TOL,
    pair_reals: bool = False,
) -> RealBlockForm:
    """Similarity transform to real block-diagonal (1x1 / 2x2) form.

    Requires simple, well-separated eigenvalues: every pair must differ by
    more than ``tol * ||m||_F``. For each real eigenvalue an inverse-iteration
    eigenvector becomes one basis column; for each conjugate pair u + iv the
    two columns (u, v) carry the exact scaled-rotation block C(gamma, theta).

    With ``pair_reals=True``, consecutive real eigenvalues (in the canonical
    modulus-descending order) are merged into 2x2 diagonal blocks so that the
    form consists of 2x2 blocks only; this requires an even number of real
    eigenvalues.

    Raises
    ------
    ClusteredEigenvaluesError
        When eigenvalues violate the separation precondition (the message
        names the cluster).
    EigenError
        When the assembled basis is numerically singular or reconstruction
        misses ``100 * tol`` relative error.
    """
    m = as_matrix(m)
    d = m.shape[0]
    if m.shape[0] != m.shape[1]:
        raise ValueError("real_block_diagonalize needs a square matrix")
    pairs = eigenvalues(m, tol=tol)

    scale = max(float(np.linalg.norm(m)), 1e-300)
    # Separation check over the full multiset (conjugates included).
    full = []
    for p in pairs:
        full.append(complex(p.re, p.im))
        if not p.is_real:
            full.append(complex(p.re, -p.im))
    for i in range(len(full)):
        for j in range(i + 1, len(full)):
            if abs(full[i] - full[j]) <= tol * scale:
                raise ClusteredEigenvaluesError(
                    f"eigenvalues {full[i]:.6g} and {full[j]:.6g} are closer "
                    f"than {tol:g} * ||m||; separation precondition violated"
                )

    cols: list[np.ndarray] = []
    blocks: list[np.ndarray] = []
    reals: list[float] = []
    real_cols: list[np.ndarray] = []
    for p in pairs:
        if p.is_real:
            v = _inverse_iteration(m, p.re)
            v = np.real(v)
            v = v / np.linalg.norm(v)
            # Sign convention: largest-magnitude entry positive.
            k = int(np.argmax(np.abs(v)))
            if v[k] < 0:
                v = -v
            reals.append(p.re)
            real_cols.append(v)
        else:
            w = _inverse_iteration(m, complex(p.re, p.im))
            # Phase convention: rotate so the largest-|entry| is real positive.
            k = int(np.argmax(np.abs(w)))
            w = w * (abs(w[k]) / w[k])
            u, v = np.real(w), np.imag(w)
            cols.append(u)
            cols.append(v)
            blocks.append(np.array([[p.re, p.im], [-p.im, p.re]]))

    if pair_reals:
        if len(reals) % 2 != 0:
            raise ValueError(
                "pure-2x2 form needs an even number of real eigenvalues "
                f"(got {len(reals)})"
            )
        for i in range(0, len(reals), 2):
            cols.append(real_cols[i])
            cols.append(real_cols[i + 1])
            blocks.append(np.diag([reals[i], reals[i + 1]]))
    else:
        for lam, v in zip(reals, real_cols):
            cols.append(v)
            blocks.append(np.array([[lam]]))

    basis = np.column_stack(cols)
    form = RealBlockForm(basis=basis, blocks=blocks)

    # The residual gate catches both inaccurate eigenvectors and an
    # ill-conditioned basis (near-defective input slips past the separation
    # check with tiny tol).
    try:
        recon = form.reconstruct()
    except np.linalg.LinAlgError as exc:
        raise EigenError("assembled basis is singular") from exc
    rel = float(np.linalg.norm(recon - m)) / scale
    if not np.isfinite(rel) or rel > 100.0 * tol:
        raise EigenError(
            f"reconstruction residual {rel:.3g} exceeds {100.0 * tol:g}; "
            "basis too ill-conditioned (matrix may be near-defective)"
        )
    return form
