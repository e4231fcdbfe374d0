"""Exact mappings between classical time-series models and linear RNNs.

ARMA(1,1), written y_t = Phi y_{t-1} + e_t - Theta e_{t-1} with invertible
MA part, has the one-step-ahead conditional-mean recursion

    h_t = Theta h_{t-1} + (Phi - Theta) y_{t-1},

which is a K=1 identity-activation recurrent cell with W_h = Theta and
W_x = Phi - Theta fed x_t = y_{t-1}. VECH-GARCH(1,1) likewise maps onto an
identity cell in the half-vectorized second-moment coordinates. Both maps
are structural: no estimation is performed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import ParaRnnCell
from .eigen import spectral_radius
from .linalg import as_matrix

__all__ = [
    "ArmaSpec",
    "GarchVechSpec",
    "arma_to_linear_rnn",
    "garch_vech_to_linear_rnn",
    "vech",
    "unvech",
    "arma_states_recursive",
    "arma_states_truncated_ar",
    "arma_equivalence_residual",
]

# Specs whose MA spectral radius exceeds this are rejected as non-invertible.
SPECTRAL_RADIUS_MAX = 1.0 - 1e-9


def _square(m, name: str) -> np.ndarray:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got {m.shape}")
    return m


@dataclass(frozen=True)
class ArmaSpec:
    """Vector ARMA(1,1) coefficients (scalar = 1x1)."""

    phi: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        phi = _square(self.phi, "phi")
        theta = _square(self.theta, "theta")
        if phi.shape != theta.shape:
            raise ValueError(f"phi {phi.shape} and theta {theta.shape} differ in size")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return self.phi.shape[0]


def _triangular_root(m: int) -> int:
    # m = t(t+1)/2 -> t; error if m is not a triangular number
    t = int((np.sqrt(8 * m + 1) - 1) / 2)
    for cand in (t - 1, t, t + 1):
        if cand >= 1 and cand * (cand + 1) // 2 == m:
            return cand
    raise ValueError(f"size {m} is not d(d+1)/2 for any integer d")


@dataclass(frozen=True)
class GarchVechSpec:
    """VECH-GARCH(1,1) coefficients on vech(y y^T) of length d(d+1)/2."""

    phi: np.ndarray
    theta: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        phi = _square(self.phi, "phi")
        theta = _square(self.theta, "theta")
        b = np.ascontiguousarray(np.asarray(self.b, dtype=np.float64).reshape(-1))
        m = phi.shape[0]
        if theta.shape[0] != m or b.shape[0] != m:
            raise ValueError("phi, theta, b must share the vech dimension")
        _triangular_root(m)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "b", b)

    @property
    def vech_dim(self) -> int:
        return self.phi.shape[0]

    @property
    def series_dim(self) -> int:
        return _triangular_root(self.phi.shape[0])


def arma_to_linear_rnn(cfg: ArmaSpec) -> ParaRnnCell:
    """Identity-activation cell computing the ARMA(1,1) mean recursion.

    Feeding x_t = y_{t-1} (with y_0 = 0) yields
    h_t = sum_{j>=0} Theta^j (Phi - Theta) y_{t-1-j}.
    Rejects non-invertible MA parts.
    """
    rho = spectral_radius(cfg.theta)
    if rho > SPECTRAL_RADIUS_MAX:
        raise ValueError(
            f"theta spectral radius {rho:.12g} too close to 1; AR(inf) form diverges"
        )
    d = cfg.dim
    wh = cfg.theta.reshape(1, d, d).copy()
    wx = cfg.phi - cfg.theta
    return ParaRnnCell(wh, wx, np.zeros(d), activation="identity")


def garch_vech_to_linear_rnn(cfg: GarchVechSpec) -> ParaRnnCell:
    """Identity cell for h_t = Phi h_{t-1} + Theta x_t + b, x_t = vech(y y^T)."""
    m = cfg.vech_dim
    wh = cfg.phi.reshape(1, m, m).copy()
    return ParaRnnCell(wh, cfg.theta.copy(), cfg.b.copy(), activation="identity")


def vech(m, tol: float = 1e-12) -> np.ndarray:
    """Stack the lower triangle of a symmetric matrix column by column."""
    m = _square(m, "vech input")
    asym = np.max(np.abs(m - m.T)) if m.shape[0] > 1 else 0.0
    if asym > tol:
        raise ValueError(f"matrix asymmetric by {asym:.3g} (tolerance {tol:.3g})")
    d = m.shape[0]
    return np.concatenate([m[j:, j] for j in range(d)])


def unvech(v) -> np.ndarray:
    """Inverse of :func:`vech`; rebuilds the full symmetric matrix."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    d = _triangular_root(v.shape[0])
    out = np.zeros((d, d))
    pos = 0
    for j in range(d):
        n = d - j
        out[j:, j] = v[pos:pos + n]
        out[j, j:] = v[pos:pos + n]
        pos += n
    return out


def arma_states_recursive(cfg: ArmaSpec, series) -> np.ndarray:
    """h_t for t = 1..T via the cell recursion, x_t = y_{t-1}, y_0 = 0.

    ``series`` holds y_1..y_T as (T,) or (T, d); returns states of the same
    dimensionality.
    """
    y = _series_2d(cfg, series)
    cell = arma_to_linear_rnn(cfg)
    t_len, d = y.shape
    states = np.zeros((t_len, d))
    h = np.zeros(d)
    prev = np.zeros(d)
    for t in range(t_len):
        h, _ = cell.step(h, prev)
        states[t] = h
        prev = y[t]
    return states


def arma_states_truncated_ar(cfg: ArmaSpec, series) -> np.ndarray:
    """Direct evaluation of h_t = sum_{j=0}^{t-2} Theta^j (Phi-Theta) y_{t-1-j}."""
    y = _series_2d(cfg, series)
    t_len, d = y.shape
    wx = cfg.phi - cfg.theta
    states = np.zeros((t_len, d))
    for t in range(1, t_len):
        term = wx.copy()
        acc = np.zeros(d)
        for j in range(t):
            acc += term @ y[t - 1 - j]
            term = cfg.theta @ term
        states[t] = acc
    return states


def arma_equivalence_residual(cfg: ArmaSpec, series) -> float:
    """Max absolute gap between the cell recursion and the AR(inf) sum."""
    a = arma_states_recursive(cfg, series)
    b = arma_states_truncated_ar(cfg, series)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def _series_2d(cfg: ArmaSpec, series) -> np.ndarray:
    y = np.asarray(series, dtype=np.float64)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y.ndim != 2 or y.shape[1] != cfg.dim:
        raise ValueError(f"series shape {np.asarray(series).shape} does not match dim {cfg.dim}")
    return y
