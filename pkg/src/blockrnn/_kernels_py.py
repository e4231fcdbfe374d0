"""Pure-numpy sequence kernels (fallback backend).

Same contracts as the compiled backend in ``_kernels_cy``: time-major
``(T, N, d)`` layout, block weights ``(K, d_s, d_s)``, float64 throughout.
The input-side affine maps (W_x x_t + b) are precomputed by the caller into
``drive`` arrays; these kernels run only the sequential recurrences.

Activation codes: 0 identity, 1 tanh, 2 relu, 3 sigmoid.
"""

from __future__ import annotations

import numpy as np


def _act(x: np.ndarray, code: int) -> np.ndarray:
    if code == 0:
        return x.copy()
    if code == 1:
        return np.tanh(x)
    if code == 2:
        return np.maximum(x, 0.0)
    if code == 3:
        # Stable logistic, exact 0/1 in the saturated tails.
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    raise ValueError(f"unknown activation code {code}")


def _dact_from_out(y: np.ndarray, code: int) -> np.ndarray:
    # Derivative expressed through the post-activation value.
    if code == 0:
        return np.ones_like(y)
    if code == 1:
        return 1.0 - y * y
    if code == 2:
        return (y > 0.0).astype(np.float64)
    if code == 3:
        return y * (1.0 - y)
    raise ValueError(f"unknown activation code {code}")


def _blockmv(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(K,ds,ds) block weights times (N, K*ds) states -> (N, K*ds)."""
    n = h.shape[0]
    k, ds, _ = w.shape
    return np.einsum("kij,nkj->nki", w, h.reshape(n, k, ds)).reshape(n, k * ds)


def _blockmv_t(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Transposed-block product: segment k gets w[k].T @ segment k."""
    n = h.shape[0]
    k, ds, _ = w.shape
    return np.einsum("kij,nki->nkj", w, h.reshape(n, k, ds)).reshape(n, k * ds)


def rnn_forward(wh, drive, h0, act, threads=1):
    """Returns (H, Hbar): H is (T+1, N, d) with H[0] = h0, Hbar the pre-activations."""
    t_len, n, d = drive.shape
    hh = np.empty((t_len + 1, n, d))
    hbar = np.empty((t_len, n, d))
    hh[0] = h0
    for t in range(t_len):
        hbar[t] = _blockmv(wh, hh[t]) + drive[t]
        hh[t + 1] = _act(hbar[t], act)
    return hh, hbar


def rnn_backward(wh, hh, hbar, dhout, act, threads=1):
    """Reverse accumulation through rnn_forward.

    dhout: (T, N, d) gradient w.r.t. each post-activation state h_t.
    Returns (delta, dwh): delta[t] is the gradient w.r.t. the pre-activation
    at step t (what the caller needs for input/bias gradients), dwh the
    accumulated recurrent-weight gradient.
    """
    t_len, n, d = dhout.shape
    k, ds, _ = wh.shape
    delta = np.empty((t_len, n, d))
    dwh = np.zeros_like(wh)
    carry = np.zeros((n, d))
    for t in range(t_len - 1, -1, -1):
        dh = dhout[t] + carry
        delta[t] = dh * _dact_from_out(hh[t + 1], act)
        carry = _blockmv_t(wh, delta[t])
        dwh += np.einsum(
            "nki,nkj->kij",
            delta[t].reshape(n, k, ds),
            hh[t].reshape(n, k, ds),
        )
    return delta, dwh


def dense_rnn_forward(wh, drive, h0, act, threads=1):
    """Reference vanilla-RNN recurrence with a dense (d, d) weight."""
    t_len, n, d = drive.shape
    hh = np.empty((t_len + 1, n, d))
    hbar = np.empty((t_len, n, d))
    hh[0] = h0
    for t in range(t_len):
        hbar[t] = hh[t] @ wh.T + drive[t]
        hh[t + 1] = _act(hbar[t], act)
    return hh, hbar


def dense_rnn_backward(wh, hh, hbar, dhout, act, threads=1):
    t_len, n, d = dhout.shape
    delta = np.empty((t_len, n, d))
    dwh = np.zeros_like(wh)
    carry = np.zeros((n, d))
    for t in range(t_len - 1, -1, -1):
        dh = dhout[t] + carry
        delta[t] = dh * _dact_from_out(hh[t + 1], act)
        carry = delta[t] @ wh
        dwh += delta[t].T @ hh[t]
    return delta, dwh


def _sigmoid(x):
    return _act(x, 3)


def lstm_forward(wf, wi, wo, wc, df, di, do, dc, h0, c0, threads=1):
    """Gated forward pass; all four recurrent weights share the block layout.

    Gate order: forget f, input i, output o, candidate g (tanh). Returns
    (H, C, F, I, O, G, TC) where TC = tanh(C[1:]) is kept for the backward
    pass.
    """
    t_len, n, d = df.shape
    hh = np.empty((t_len + 1, n, d))
    cc = np.empty((t_len + 1, n, d))
    ff = np.empty((t_len, n, d))
    ii = np.empty((t_len, n, d))
    oo = np.empty((t_len, n, d))
    gg = np.empty((t_len, n, d))
    tc = np.empty((t_len, n, d))
    hh[0] = h0
    cc[0] = c0
    for t in range(t_len):
        ff[t] = _sigmoid(_blockmv(wf, hh[t]) + df[t])
        ii[t] = _sigmoid(_blockmv(wi, hh[t]) + di[t])
        oo[t] = _sigmoid(_blockmv(wo, hh[t]) + do[t])
        gg[t] = np.tanh(_blockmv(wc, hh[t]) + dc[t])
        cc[t + 1] = ff[t] * cc[t] + ii[t] * gg[t]
        tc[t] = np.tanh(cc[t + 1])
        hh[t + 1] = oo[t] * tc[t]
    return hh, cc, ff, ii, oo, gg, tc


def lstm_backward(wf, wi, wo, wc, hh, cc, ff, ii, oo, gg, tc, dhout, threads=1):
    """Returns per-gate pre-activation deltas plus recurrent-weight gradients.

    Output: (deltaF, deltaI, deltaO, deltaG, dwf, dwi, dwo, dwc).
    """
    t_len, n, d = dhout.shape
    k, ds, _ = wf.shape
    d_f = np.empty((t_len, n, d))
    d_i = np.empty((t_len, n, d))
    d_o = np.empty((t_len, n, d))
    d_g = np.empty((t_len, n, d))
    dwf = np.zeros_like(wf)
    dwi = np.zeros_like(wi)
    dwo = np.zeros_like(wo)
    dwc = np.zeros_like(wc)
    dh = np.zeros((n, d))
    dcarry = np.zeros((n, d))
    for t in range(t_len - 1, -1, -1):
        dht = dhout[t] + dh
        dtc = dht * oo[t]
        dct = dcarry + dtc * (1.0 - tc[t] * tc[t])
        d_o[t] = dht * tc[t] * oo[t] * (1.0 - oo[t])
        d_f[t] = dct * cc[t] * ff[t] * (1.0 - ff[t])
        d_i[t] = dct * gg[t] * ii[t] * (1.0 - ii[t])
        d_g[t] = dct * ii[t] * (1.0 - gg[t] * gg[t])
        dcarry = dct * ff[t]
        dh = (
            _blockmv_t(wf, d_f[t])
            + _blockmv_t(wi, d_i[t])
            + _blockmv_t(wo, d_o[t])
            + _blockmv_t(wc, d_g[t])
        )
        hprev = hh[t].reshape(n, k, ds)
        dwf += np.einsum("nki,nkj->kij", d_f[t].reshape(n, k, ds), hprev)
        dwi += np.einsum("nki,nkj->kij", d_i[t].reshape(n, k, ds), hprev)
        dwo += np.einsum("nki,nkj->kij", d_o[t].reshape(n, k, ds), hprev)
        dwc += np.einsum("nki,nkj->kij", d_g[t].reshape(n, k, ds), hprev)
    return d_f, d_i, d_o, d_g, dwf, dwi, dwo, dwc


def gru_forward(wz, wr, wn, dz, dr, dn, h0, threads=1):
    """Update/reset/candidate GRU with the carry-through convention:

        h_t = (1 - z_t) * h_{t-1} + z_t * n_t

    so a fully closed update gate (z = 0) holds the state. Returns
    (H, Z, R, NC, HR) with HR = r * h_prev cached for the backward pass.
    """
    t_len, n, d = dz.shape
    hh = np.empty((t_len + 1, n, d))
    zz = np.empty((t_len, n, d))
    rr = np.empty((t_len, n, d))
    nc = np.empty((t_len, n, d))
    hr = np.empty((t_len, n, d))
    hh[0] = h0
    for t in range(t_len):
        zz[t] = _sigmoid(_blockmv(wz, hh[t]) + dz[t])
        rr[t] = _sigmoid(_blockmv(wr, hh[t]) + dr[t])
        hr[t] = rr[t] * hh[t]
        nc[t] = np.tanh(_blockmv(wn, hr[t]) + dn[t])
        hh[t + 1] = (1.0 - zz[t]) * hh[t] + zz[t] * nc[t]
    return hh, zz, rr, nc, hr


def gru_backward(wz, wr, wn, hh, zz, rr, nc, hr, dhout, threads=1):
    """Returns (deltaZ, deltaR, deltaN, dwz, dwr, dwn)."""
    t_len, n, d = dhout.shape
    k, ds, _ = wz.shape
    d_z = np.empty((t_len, n, d))
    d_r = np.empty((t_len, n, d))
    d_n = np.empty((t_len, n, d))
    dwz = np.zeros_like(wz)
    dwr = np.zeros_like(wr)
    dwn = np.zeros_like(wn)
    dh = np.zeros((n, d))
    for t in range(t_len - 1, -1, -1):
        dht = dhout[t] + dh
        d_n[t] = dht * zz[t] * (1.0 - nc[t] * nc[t])
        d_z[t] = dht * (nc[t] - hh[t]) * zz[t] * (1.0 - zz[t])
        dhr = _blockmv_t(wn, d_n[t])
        d_r[t] = dhr * hh[t] * rr[t] * (1.0 - rr[t])
        dh = (
            dht * (1.0 - zz[t])
            + dhr * rr[t]
            + _blockmv_t(wz, d_z[t])
            + _blockmv_t(wr, d_r[t])
        )
        hprev = hh[t].reshape(n, k, ds)
        dwz += np.einsum("nki,nkj->kij", d_z[t].reshape(n, k, ds), hprev)
        dwr += np.einsum("nki,nkj->kij", d_r[t].reshape(n, k, ds), hprev)
        dwn += np.einsum("nki,nkj->kij", d_n[t].reshape(n, k, ds), hr[t].reshape(n, k, ds))
    return d_z, d_r, d_n, dwz, dwr, dwn
