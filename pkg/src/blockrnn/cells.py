"""Recurrent cell types with block-diagonal recurrent weights.

Each cell owns its parameters and exposes a single-step ``step`` method used
by tests and by the closed-form examples; full-sequence forward/backward
passes live in :mod:`blockrnn.net`, which feeds the kernels directly.
"""

from __future__ import annotations

import numpy as np

from ._kernels_py import _act, _dact_from_out
from .linalg import BlockDiagonalMatrix

__all__ = [
    "ACTIVATIONS",
    "act_code",
    "act_apply",
    "act_deriv_from_output",
    "ParaRnnCell",
    "ParaLstmCell",
    "ParaGruCell",
]

# Kernel activation codes; order is part of the kernel ABI.
ACTIVATIONS = ("identity", "tanh", "relu", "sigmoid")


def act_code(tag: str) -> int:
    try:
        return ACTIVATIONS.index(tag)
    except ValueError:
        raise ValueError(f"unknown activation {tag!r}, expected one of {ACTIVATIONS}") from None


def act_apply(x, tag: str) -> np.ndarray:
    return _act(np.asarray(x, dtype=np.float64), act_code(tag))


def act_deriv_from_output(y, tag: str) -> np.ndarray:
    """Activation derivative evaluated from the activation's output value."""
    return _dact_from_out(np.asarray(y, dtype=np.float64), act_code(tag))


def _as_bdm(w) -> BlockDiagonalMatrix:
    return w if isinstance(w, BlockDiagonalMatrix) else BlockDiagonalMatrix(w)


def _check_affine(wh: BlockDiagonalMatrix, wx, b, who: str):
    wx = np.ascontiguousarray(wx, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    d = wh.dim
    if wx.ndim != 2 or wx.shape[0] != d:
        raise ValueError(f"{who}: input weight must be ({d}, d_in), got {wx.shape}")
    if b.shape != (d,):
        raise ValueError(f"{who}: bias must have shape ({d},), got {b.shape}")
    return wx, b


class ParaRnnCell:
    """h_t = act(W_h h_{t-1} + W_x x_t + b) with block-diagonal W_h.

    Segment k of the state only ever sees segment k of the previous state:
    the cell is K independent small recurrences coupled through nothing but
    the shared input.
    """

    kind = "rnn"

    def __init__(self, wh, wx, b, activation: str = "tanh"):
        self.wh = _as_bdm(wh)
        self.wx, self.b = _check_affine(self.wh, wx, b, "ParaRnnCell")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    @property
    def d(self) -> int:
        return self.wh.dim

    @property
    def d_in(self) -> int:
        return self.wx.shape[1]

    @property
    def block_size(self) -> int:
        return self.wh.block_size

    @property
    def num_blocks(self) -> int:
        return self.wh.num_blocks

    def step(self, h_prev, x_t):
        """One time step. Returns (h_t, pre_activation)."""
        h_prev = np.asarray(h_prev, dtype=np.float64)
        x_t = np.asarray(x_t, dtype=np.float64)
        hbar = self.wh.apply(h_prev) + x_t @ self.wx.T + self.b
        return act_apply(hbar, self.activation), hbar

    def param_tensors(self) -> dict[str, np.ndarray]:
        return {"wh": self.wh.blocks, "wx": self.wx, "b": self.b}


class ParaLstmCell:
    """LSTM whose four recurrent matrices share one block partition.

        f_t = sig(W_f h_{t-1} + U_f x_t + b_f)      forget gate
        i_t = sig(W_i h_{t-1} + U_i x_t + b_i)      input gate
        o_t = sig(W_o h_{t-1} + U_o x_t + b_o)      output gate
        g_t = tanh(W_c h_{t-1} + U_c x_t + b_c)     candidate
        c_t = f_t * c_{t-1} + i_t * g_t
        h_t = o_t * tanh(c_t)
    """

    kind = "lstm"
    gates = ("f", "i", "o", "c")

    def __init__(self, wf, wi, wo, wc, uf, ui, uo, uc, bf, bi, bo, bc):
        self.wf, self.wi, self.wo, self.wc = (_as_bdm(w) for w in (wf, wi, wo, wc))
        shapes = {w.blocks.shape for w in (self.wf, self.wi, self.wo, self.wc)}
        if len(shapes) != 1:
            raise ValueError("all four recurrent matrices must share the block partition")
        self.uf, self.bf = _check_affine(self.wf, uf, bf, "ParaLstmCell[f]")
        self.ui, self.bi = _check_affine(self.wi, ui, bi, "ParaLstmCell[i]")
        self.uo, self.bo = _check_affine(self.wo, uo, bo, "ParaLstmCell[o]")
        self.uc, self.bc = _check_affine(self.wc, uc, bc, "ParaLstmCell[c]")
        if len({u.shape[1] for u in (self.uf, self.ui, self.uo, self.uc)}) != 1:
            raise ValueError("gate input weights must share d_in")

    @property
    def d(self) -> int:
        return self.wf.dim

    @property
    def d_in(self) -> int:
        return self.uf.shape[1]

    @property
    def block_size(self) -> int:
        return self.wf.block_size

    @property
    def num_blocks(self) -> int:
        return self.wf.num_blocks

    def step(self, h_prev, c_prev, x_t):
        """One time step. Returns (h_t, c_t, gate dict)."""
        h_prev = np.asarray(h_prev, dtype=np.float64)
        c_prev = np.asarray(c_prev, dtype=np.float64)
        x_t = np.asarray(x_t, dtype=np.float64)
        f = act_apply(self.wf.apply(h_prev) + x_t @ self.uf.T + self.bf, "sigmoid")
        i = act_apply(self.wi.apply(h_prev) + x_t @ self.ui.T + self.bi, "sigmoid")
        o = act_apply(self.wo.apply(h_prev) + x_t @ self.uo.T + self.bo, "sigmoid")
        g = np.tanh(self.wc.apply(h_prev) + x_t @ self.uc.T + self.bc)
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        return h, c, {"f": f, "i": i, "o": o, "g": g}

    def param_tensors(self) -> dict[str, np.ndarray]:
        return {
            "wh_f": self.wf.blocks, "wh_i": self.wi.blocks,
            "wh_o": self.wo.blocks, "wh_c": self.wc.blocks,
            "wx_f": self.uf, "wx_i": self.ui, "wx_o": self.uo, "wx_c": self.uc,
            "b_f": self.bf, "b_i": self.bi, "b_o": self.bo, "b_c": self.bc,
        }

    def recurrent_matrices(self) -> dict[str, BlockDiagonalMatrix]:
        return {"f": self.wf, "i": self.wi, "o": self.wo, "c": self.wc}


class ParaGruCell:
    """GRU with block-diagonal recurrent weights (carry-through convention):

        z_t = sig(W_z h_{t-1} + U_z x_t + b_z)          update gate
        r_t = sig(W_r h_{t-1} + U_r x_t + b_r)          reset gate
        n_t = tanh(W_n (r_t * h_{t-1}) + U_n x_t + b_n) candidate
        h_t = (1 - z_t) * h_{t-1} + z_t * n_t

    A closed update gate (z = 0) holds the previous state exactly.
    """

    kind = "gru"
    gates = ("z", "r", "n")

    def __init__(self, wz, wr, wn, uz, ur, un, bz, br, bn):
        self.wz, self.wr, self.wn = (_as_bdm(w) for w in (wz, wr, wn))
        shapes = {w.blocks.shape for w in (self.wz, self.wr, self.wn)}
        if len(shapes) != 1:
            raise ValueError("all three recurrent matrices must share the block partition")
        self.uz, self.bz = _check_affine(self.wz, uz, bz, "ParaGruCell[z]")
        self.ur, self.br = _check_affine(self.wr, ur, br, "ParaGruCell[r]")
        self.un, self.bn = _check_affine(self.wn, un, bn, "ParaGruCell[n]")
        if len({u.shape[1] for u in (self.uz, self.ur, self.un)}) != 1:
            raise ValueError("gate input weights must share d_in")

    @property
    def d(self) -> int:
        return self.wz.dim

    @property
    def d_in(self) -> int:
        return self.uz.shape[1]

    @property
    def block_size(self) -> int:
        return self.wz.block_size

    @property
    def num_blocks(self) -> int:
        return self.wz.num_blocks

    def step(self, h_prev, x_t):
        """One time step. Returns (h_t, gate dict)."""
        h_prev = np.asarray(h_prev, dtype=np.float64)
        x_t = np.asarray(x_t, dtype=np.float64)
        z = act_apply(self.wz.apply(h_prev) + x_t @ self.uz.T + self.bz, "sigmoid")
        r = act_apply(self.wr.apply(h_prev) + x_t @ self.ur.T + self.br, "sigmoid")
        n = np.tanh(self.wn.apply(r * h_prev) + x_t @ self.un.T + self.bn)
        h = (1.0 - z) * h_prev + z * n
        return h, {"z": z, "r": r, "n": n}

    def param_tensors(self) -> dict[str, np.ndarray]:
        return {
            "wh_z": self.wz.blocks, "wh_r": self.wr.blocks, "wh_n": self.wn.blocks,
            "wx_z": self.uz, "wx_r": self.ur, "wx_n": self.un,
            "b_z": self.bz, "b_r": self.br, "b_n": self.bn,
        }

    def recurrent_matrices(self) -> dict[str, BlockDiagonalMatrix]:
        return {"z": self.wz, "r": self.wr, "n": self.wn}
