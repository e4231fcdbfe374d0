"""Independent reference implementations used as ground truth in tests.

Everything here is deliberately written the slow, obvious way — triple loops,
textbook recursions, finite differences — and shares no code with the package
under test beyond numpy containers. When a test compares a fast path against
one of these, agreement is evidence, not circularity.
"""

import numpy as np


def slow_matmul(a, b):
    """Triple-loop matrix product."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def charpoly_coeffs(m):
    """Characteristic polynomial by the Faddeev-LeVerrier recursion.

    Returns monic coefficients [1, c_{d-1}, ..., c_0] so that
    det(xI - m) = x^d + c_{d-1} x^{d-1} + ... + c_0.
    """
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    coeffs = np.zeros(d + 1)
    coeffs[0] = 1.0
    mk = np.zeros_like(m)
    for k in range(1, d + 1):
        mk = m @ (mk + coeffs[k - 1] * np.eye(d)) if k > 1 else m.copy()
        coeffs[k] = -np.trace(mk) / k
    return coeffs


def charpoly_roots(m):
    """Eigenvalues as roots of the characteristic polynomial.

    np.roots builds a companion matrix internally; combined with the
    Faddeev-LeVerrier coefficients this path shares nothing with a direct
    QR-on-the-input-matrix eigensolver.
    """
    return np.roots(charpoly_coeffs(m))


def fd_gradient(f, x, step=1e-5):
    """Central finite-difference gradient of scalar f at flat array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * step)
    return g


# ---------------------------------------------------------------------------
# Hand-unrolled recurrent references. All take time-major (T, N, d) drives
# (input projection and bias already added) and dense recurrent matrices.

def unrolled_rnn(wh_dense, drive, h0, act):
    """states[t+1] = act(wh @ states[t] + drive[t]) via plain numpy per step."""
    T, N, d = drive.shape
    hs = np.zeros((T + 1, N, d))
    hs[0] = h0
    for t in range(T):
        pre = hs[t] @ np.asarray(wh_dense).T + drive[t]
        hs[t + 1] = act(pre)
    return hs


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def unrolled_lstm(uf, ui, uo, uc, df, di, do, dc, h0, c0):
    """Textbook LSTM unroll with dense recurrent matrices per gate."""
    T, N, d = df.shape
    hs = np.zeros((T + 1, N, d))
    cs = np.zeros((T + 1, N, d))
    hs[0], cs[0] = h0, c0
    for t in range(T):
        f = _sigmoid(hs[t] @ uf.T + df[t])
        i = _sigmoid(hs[t] @ ui.T + di[t])
        o = _sigmoid(hs[t] @ uo.T + do[t])
        g = np.tanh(hs[t] @ uc.T + dc[t])
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
    return hs, cs


def unrolled_gru(uz, ur, un, dz, dr, dn, h0):
    """Textbook GRU unroll (reset gate applied to the recurrent term)."""
    T, N, d = dz.shape
    hs = np.zeros((T + 1, N, d))
    hs[0] = h0
    for t in range(T):
        z = _sigmoid(hs[t] @ uz.T + dz[t])
        r = _sigmoid(hs[t] @ ur.T + dr[t])
        n = np.tanh((r * hs[t]) @ un.T + dn[t])
        hs[t + 1] = (1.0 - z) * hs[t] + z * n
    return hs


# ---------------------------------------------------------------------------
# Time-series references.

def arma_filter(phi, theta, eps):
    """ARMA(1,1) series y_t = phi*y_{t-1} + eps_t + theta*eps_{t-1}, y_0 term-free.

    Plain scalar recursion over one shock sequence.
    """
    y = np.zeros(len(eps))
    for t in range(len(eps)):
        prev_y = y[t - 1] if t > 0 else 0.0
        prev_e = eps[t - 1] if t > 0 else 0.0
        y[t] = phi * prev_y + eps[t] + theta * prev_e
    return y


def arma_state_recursion(phi, theta, ys):
    """States of h_t = Theta h_{t-1} + (Phi - Theta) y_{t-1} with h_0 = 0.

    Matrix version; ys is (T, d). Returns (T+1, d) including h_0.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    T, d = ys.shape
    hs = np.zeros((T + 1, d))
    for t in range(T):
        hs[t + 1] = theta @ hs[t] + (phi - theta) @ ys[t]
    return hs


def ar_infinity_state(phi, theta, ys, t):
    """h_t as the explicit sum  sum_{j=0}^{t-1} Theta^j (Phi-Theta) y_{t-1-j}."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    d = phi.shape[0]
    acc = np.zeros(d)
    power = np.eye(d)
    for j in range(t):
        acc = acc + power @ (phi - theta) @ ys[t - 1 - j]
        power = power @ theta
    return acc


def naive_vech(m):
    """Stack the lower triangle column by column."""
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    out = []
    for j in range(d):
        for i in range(j, d):
            out.append(m[i, j])
    return np.array(out)


def lstsq_fit(x, y):
    """Least-squares weight matrix W minimizing ||x @ W.T - y||^2."""
    w, *_ = np.linalg.lstsq(x, y, rcond=None)
    return w.T
