# cython: language_level=3
"""Compiled sequence kernels. Contracts identical to _kernels_py.

Layout is time-major (T, N, d); block weights are (K, d_s, d_s). Parallelism
(threads > 1) splits the batch dimension only, with disjoint writes per
sample; every cross-batch reduction (the weight-gradient sums) runs serially
in ascending sample order, so results are bit-identical for any thread count.

Per-point helpers take raw row pointers, not memoryviews: passing memoryview
structs by value per (t, n) point costs more than the d_s^2 inner loop for
small blocks and would make the K=1 path measurably slower than the dense
reference, which must stay within a few percent.
"""

from cython.parallel cimport prange
from libc.math cimport exp as cexp, tanh as ctanh

import numpy as np


cdef inline double _act_one(double x, int act) noexcept nogil:
    cdef double e
    if act == 0:
        return x
    if act == 1:
        return ctanh(x)
    if act == 2:
        return x if x > 0.0 else 0.0
    if x >= 0.0:
        return 1.0 / (1.0 + cexp(-x))
    e = cexp(x)
    return e / (1.0 + e)


cdef inline double _dact_one(double y, int act) noexcept nogil:
    # Derivative from the post-activation value y.
    if act == 0:
        return 1.0
    if act == 1:
        return 1.0 - y * y
    if act == 2:
        return 1.0 if y > 0.0 else 0.0
    return y * (1.0 - y)


cdef inline double _sig_one(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + cexp(-x))
    e = cexp(x)
    return e / (1.0 + e)


# ---------------------------------------------------------------------------
# Vanilla block RNN

cdef inline void _rnn_point(const double* wh, const double* dr, const double* hp,
                            double* hb, double* hn,
                            Py_ssize_t K, Py_ssize_t ds, int act) noexcept nogil:
    # hp: state row at t; hb: pre-activation row; hn: state row at t+1
    cdef Py_ssize_t k, i, j, base
    cdef const double* w
    cdef double acc
    if ds == 1:
        # 1x1 blocks: the recurrence is element-wise; skip the block loop
        # machinery, which would cost more than the single multiply.
        for i in range(K):
            hb[i] = dr[i] + wh[i] * hp[i]
    else:
        for k in range(K):
            base = k * ds
            w = wh + k * ds * ds
            for i in range(ds):
                acc = dr[base + i]
                for j in range(ds):
                    acc = acc + w[i * ds + j] * hp[base + j]
                hb[base + i] = acc
    for i in range(K * ds):
        hn[i] = _act_one(hb[i], act)


def rnn_forward(const double[:, :, ::1] wh, const double[:, :, ::1] drive,
                const double[:, ::1] h0, int act, int threads=1):
    cdef Py_ssize_t T = drive.shape[0], N = drive.shape[1], D = drive.shape[2]
    cdef Py_ssize_t K = wh.shape[0], ds = wh.shape[1]
    H_arr = np.empty((T + 1, N, D))
    Hb_arr = np.empty((T, N, D))
    cdef double[:, :, ::1] H = H_arr
    cdef double[:, :, ::1] Hb = Hb_arr
    cdef const double* whp = &wh[0, 0, 0]
    cdef Py_ssize_t t, n
    H_arr[0] = np.asarray(h0)
    if threads > 1:
        for t in range(T):
            for n in prange(N, num_threads=threads, schedule='static', nogil=True):
                _rnn_point(whp, &drive[t, n, 0], &H[t, n, 0], &Hb[t, n, 0],
                           &H[t + 1, n, 0], K, ds, act)
    else:
        with nogil:
            for t in range(T):
                for n in range(N):
                    _rnn_point(whp, &drive[t, n, 0], &H[t, n, 0], &Hb[t, n, 0],
                               &H[t + 1, n, 0], K, ds, act)
    return H_arr, Hb_arr


cdef inline void _rnn_back_point(const double* wh, const double* hnext, const double* dho,
                                 double* dlt, double* car,
                                 Py_ssize_t K, Py_ssize_t ds, int act) noexcept nogil:
    # dlt: pre-activation delta row at t; car: carry row (block W^T delta)
    cdef Py_ssize_t k, i, j, base
    cdef const double* w
    cdef double acc
    for i in range(K * ds):
        dlt[i] = (dho[i] + car[i]) * _dact_one(hnext[i], act)
    if ds == 1:
        for i in range(K):
            car[i] = wh[i] * dlt[i]
    else:
        for k in range(K):
            base = k * ds
            w = wh + k * ds * ds
            for j in range(ds):
                acc = 0.0
                for i in range(ds):
                    acc = acc + w[i * ds + j] * dlt[base + i]
                car[base + j] = acc


cdef inline void _rnn_dw_row(double* dwh, const double* dlt, const double* hrow,
                             Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    # Accumulate one sample's outer-product contribution into the weight grads.
    cdef Py_ssize_t k, i, j, base
    cdef double* dwk
    cdef double dv
    if ds == 1:
        for i in range(K):
            dwh[i] += dlt[i] * hrow[i]
    else:
        for k in range(K):
            base = k * ds
            dwk = dwh + k * ds * ds
            for i in range(ds):
                dv = dlt[base + i]
                for j in range(ds):
                    dwk[i * ds + j] += dv * hrow[base + j]


def rnn_backward(const double[:, :, ::1] wh, const double[:, :, ::1] hh,
                 const double[:, :, ::1] hbar, const double[:, :, ::1] dhout,
                 int act, int threads=1):
    cdef Py_ssize_t T = dhout.shape[0], N = dhout.shape[1], D = dhout.shape[2]
    cdef Py_ssize_t K = wh.shape[0], ds = wh.shape[1]
    delta_arr = np.empty((T, N, D))
    dwh_arr = np.zeros((K, ds, ds))
    carry_arr = np.zeros((N, D))
    cdef double[:, :, ::1] delta = delta_arr
    cdef double[:, ::1] carry = carry_arr
    cdef double[:, :, ::1] dwh_mv = dwh_arr
    cdef const double* whp = &wh[0, 0, 0]
    cdef double* dwhp = &dwh_mv[0, 0, 0]
    cdef Py_ssize_t t, n
    if threads > 1:
        for t in range(T - 1, -1, -1):
            for n in prange(N, num_threads=threads, schedule='static', nogil=True):
                _rnn_back_point(whp, &hh[t + 1, n, 0], &dhout[t, n, 0],
                                &delta[t, n, 0], &carry[n, 0], K, ds, act)
            # Weight-gradient reduction: serial, fixed order (n ascending).
            with nogil:
                for n in range(N):
                    _rnn_dw_row(dwhp, &delta[t, n, 0], &hh[t, n, 0], K, ds)
    else:
        with nogil:
            for t in range(T - 1, -1, -1):
                for n in range(N):
                    _rnn_back_point(whp, &hh[t + 1, n, 0], &dhout[t, n, 0],
                                    &delta[t, n, 0], &carry[n, 0], K, ds, act)
                for n in range(N):
                    _rnn_dw_row(dwhp, &delta[t, n, 0], &hh[t, n, 0], K, ds)
    return delta_arr, dwh_arr


# ---------------------------------------------------------------------------
# Dense reference (no block indexing; used by the benchmark as the baseline)

def dense_rnn_forward(const double[:, ::1] wh, const double[:, :, ::1] drive,
                      const double[:, ::1] h0, int act, int threads=1):
    cdef Py_ssize_t T = drive.shape[0], N = drive.shape[1], D = drive.shape[2]
    H_arr = np.empty((T + 1, N, D))
    Hb_arr = np.empty((T, N, D))
    cdef double[:, :, ::1] H = H_arr
    cdef double[:, :, ::1] Hb = Hb_arr
    cdef Py_ssize_t t, n, i, j
    cdef double acc
    H_arr[0] = np.asarray(h0)
    with nogil:
        for t in range(T):
            for n in range(N):
                for i in range(D):
                    acc = drive[t, n, i]
                    for j in range(D):
                        acc = acc + wh[i, j] * H[t, n, j]
                    Hb[t, n, i] = acc
                for i in range(D):
                    H[t + 1, n, i] = _act_one(Hb[t, n, i], act)
    return H_arr, Hb_arr


def dense_rnn_backward(const double[:, ::1] wh, const double[:, :, ::1] hh,
                       const double[:, :, ::1] hbar, const double[:, :, ::1] dhout,
                       int act, int threads=1):
    cdef Py_ssize_t T = dhout.shape[0], N = dhout.shape[1], D = dhout.shape[2]
    delta_arr = np.empty((T, N, D))
    dwh_arr = np.zeros((D, D))
    carry_arr = np.zeros((N, D))
    cdef double[:, :, ::1] delta = delta_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[:, ::1] carry = carry_arr
    cdef Py_ssize_t t, n, i, j
    cdef double acc, dv
    with nogil:
        for t in range(T - 1, -1, -1):
            for n in range(N):
                for i in range(D):
                    delta[t, n, i] = (dhout[t, n, i] + carry[n, i]) * _dact_one(hh[t + 1, n, i], act)
                for j in range(D):
                    acc = 0.0
                    for i in range(D):
                        acc = acc + wh[i, j] * delta[t, n, i]
                    carry[n, j] = acc
            for n in range(N):
                for i in range(D):
                    dv = delta[t, n, i]
                    for j in range(D):
                        dwh[i, j] += dv * hh[t, n, j]
    return delta_arr, dwh_arr


# ---------------------------------------------------------------------------
# LSTM

cdef inline void _lstm_point(const double* wf, const double* wi, const double* wo,
                             const double* wc,
                             const double* rf, const double* ri, const double* ro,
                             const double* rg,
                             const double* hp, const double* cp,
                             double* fo, double* io, double* oo, double* go,
                             double* cn, double* tc, double* hn,
                             Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    cdef Py_ssize_t k, i, j, base, off
    cdef double af, ai, ao, ag, hv, cnew
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for i in range(ds):
            af = rf[base + i]
            ai = ri[base + i]
            ao = ro[base + i]
            ag = rg[base + i]
            for j in range(ds):
                hv = hp[base + j]
                af = af + wf[off + i * ds + j] * hv
                ai = ai + wi[off + i * ds + j] * hv
                ao = ao + wo[off + i * ds + j] * hv
                ag = ag + wc[off + i * ds + j] * hv
            fo[base + i] = _sig_one(af)
            io[base + i] = _sig_one(ai)
            oo[base + i] = _sig_one(ao)
            go[base + i] = ctanh(ag)
    for i in range(K * ds):
        cnew = fo[i] * cp[i] + io[i] * go[i]
        cn[i] = cnew
        tc[i] = ctanh(cnew)
        hn[i] = oo[i] * tc[i]


def lstm_forward(const double[:, :, ::1] wf, const double[:, :, ::1] wi,
                 const double[:, :, ::1] wo, const double[:, :, ::1] wc,
                 const double[:, :, ::1] df, const double[:, :, ::1] di,
                 const double[:, :, ::1] do, const double[:, :, ::1] dc,
                 const double[:, ::1] h0, const double[:, ::1] c0, int threads=1):
    cdef Py_ssize_t T = df.shape[0], N = df.shape[1], D = df.shape[2]
    cdef Py_ssize_t K = wf.shape[0], ds = wf.shape[1]
    H_arr = np.empty((T + 1, N, D))
    C_arr = np.empty((T + 1, N, D))
    F_arr = np.empty((T, N, D))
    I_arr = np.empty((T, N, D))
    O_arr = np.empty((T, N, D))
    G_arr = np.empty((T, N, D))
    TC_arr = np.empty((T, N, D))
    cdef double[:, :, ::1] H = H_arr, C = C_arr, F = F_arr, I = I_arr
    cdef double[:, :, ::1] O = O_arr, G = G_arr, TC = TC_arr
    cdef const double* wfp = &wf[0, 0, 0]
    cdef const double* wip = &wi[0, 0, 0]
    cdef const double* wop = &wo[0, 0, 0]
    cdef const double* wcp = &wc[0, 0, 0]
    cdef Py_ssize_t t, n
    H_arr[0] = np.asarray(h0)
    C_arr[0] = np.asarray(c0)
    if threads > 1:
        for t in range(T):
            for n in prange(N, num_threads=threads, schedule='static', nogil=True):
                _lstm_point(wfp, wip, wop, wcp,
                            &df[t, n, 0], &di[t, n, 0], &do[t, n, 0], &dc[t, n, 0],
                            &H[t, n, 0], &C[t, n, 0],
                            &F[t, n, 0], &I[t, n, 0], &O[t, n, 0], &G[t, n, 0],
                            &C[t + 1, n, 0], &TC[t, n, 0], &H[t + 1, n, 0], K, ds)
    else:
        with nogil:
            for t in range(T):
                for n in range(N):
                    _lstm_point(wfp, wip, wop, wcp,
                                &df[t, n, 0], &di[t, n, 0], &do[t, n, 0], &dc[t, n, 0],
                                &H[t, n, 0], &C[t, n, 0],
                                &F[t, n, 0], &I[t, n, 0], &O[t, n, 0], &G[t, n, 0],
                                &C[t + 1, n, 0], &TC[t, n, 0], &H[t + 1, n, 0], K, ds)
    return H_arr, C_arr, F_arr, I_arr, O_arr, G_arr, TC_arr


cdef inline void _lstm_back_point(const double* wf, const double* wi, const double* wo,
                                  const double* wc,
                                  const double* cp, const double* fo, const double* io,
                                  const double* oo, const double* go, const double* tc,
                                  const double* dho,
                                  double* df, double* di, double* do_, double* dg,
                                  double* dh, double* dc,
                                  Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    # dh/dc: running state gradients for this sample (rows of (N, d) buffers)
    cdef Py_ssize_t k, i, j, base, off
    cdef double dht, dct, fv, iv, ov, gv, tcv, acc
    for i in range(K * ds):
        dht = dho[i] + dh[i]
        fv = fo[i]
        iv = io[i]
        ov = oo[i]
        gv = go[i]
        tcv = tc[i]
        dct = dc[i] + dht * ov * (1.0 - tcv * tcv)
        do_[i] = dht * tcv * ov * (1.0 - ov)
        df[i] = dct * cp[i] * fv * (1.0 - fv)
        di[i] = dct * gv * iv * (1.0 - iv)
        dg[i] = dct * iv * (1.0 - gv * gv)
        dc[i] = dct * fv
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for j in range(ds):
            acc = 0.0
            for i in range(ds):
                acc = acc + wf[off + i * ds + j] * df[base + i] \
                          + wi[off + i * ds + j] * di[base + i] \
                          + wo[off + i * ds + j] * do_[base + i] \
                          + wc[off + i * ds + j] * dg[base + i]
            dh[base + j] = acc


cdef inline void _lstm_dw_row(double* dwf, double* dwi, double* dwo, double* dwc,
                              const double* frow, const double* irow,
                              const double* orow, const double* grow,
                              const double* hrow,
                              Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    cdef Py_ssize_t k, i, j, base, off
    cdef double hv
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for i in range(ds):
            for j in range(ds):
                hv = hrow[base + j]
                dwf[off + i * ds + j] += frow[base + i] * hv
                dwi[off + i * ds + j] += irow[base + i] * hv
                dwo[off + i * ds + j] += orow[base + i] * hv
                dwc[off + i * ds + j] += grow[base + i] * hv


def lstm_backward(const double[:, :, ::1] wf, const double[:, :, ::1] wi,
                  const double[:, :, ::1] wo, const double[:, :, ::1] wc,
                  const double[:, :, ::1] hh, const double[:, :, ::1] cc,
                  const double[:, :, ::1] ff, const double[:, :, ::1] ii,
                  const double[:, :, ::1] oo, const double[:, :, ::1] gg,
                  const double[:, :, ::1] tc, const double[:, :, ::1] dhout,
                  int threads=1):
    cdef Py_ssize_t T = dhout.shape[0], N = dhout.shape[1], D = dhout.shape[2]
    cdef Py_ssize_t K = wf.shape[0], ds = wf.shape[1]
    d_f_arr = np.empty((T, N, D))
    d_i_arr = np.empty((T, N, D))
    d_o_arr = np.empty((T, N, D))
    d_g_arr = np.empty((T, N, D))
    dwf_arr = np.zeros((K, ds, ds))
    dwi_arr = np.zeros((K, ds, ds))
    dwo_arr = np.zeros((K, ds, ds))
    dwc_arr = np.zeros((K, ds, ds))
    dh_arr = np.zeros((N, D))
    dc_arr = np.zeros((N, D))
    cdef double[:, :, ::1] d_f = d_f_arr, d_i = d_i_arr, d_o = d_o_arr, d_g = d_g_arr
    cdef double[:, :, ::1] dwf = dwf_arr, dwi = dwi_arr, dwo = dwo_arr, dwc = dwc_arr
    cdef double[:, ::1] dh = dh_arr, dc = dc_arr
    cdef const double* wfp = &wf[0, 0, 0]
    cdef const double* wip = &wi[0, 0, 0]
    cdef const double* wop = &wo[0, 0, 0]
    cdef const double* wcp = &wc[0, 0, 0]
    cdef double* dwfp = &dwf[0, 0, 0]
    cdef double* dwip = &dwi[0, 0, 0]
    cdef double* dwop = &dwo[0, 0, 0]
    cdef double* dwcp = &dwc[0, 0, 0]
    cdef Py_ssize_t t, n
    if threads > 1:
        for t in range(T - 1, -1, -1):
            for n in prange(N, num_threads=threads, schedule='static', nogil=True):
                _lstm_back_point(wfp, wip, wop, wcp,
                                 &cc[t, n, 0], &ff[t, n, 0], &ii[t, n, 0],
                                 &oo[t, n, 0], &gg[t, n, 0], &tc[t, n, 0],
                                 &dhout[t, n, 0],
                                 &d_f[t, n, 0], &d_i[t, n, 0], &d_o[t, n, 0],
                                 &d_g[t, n, 0], &dh[n, 0], &dc[n, 0], K, ds)
            # Weight-gradient reduction: serial, fixed order (n ascending).
            with nogil:
                for n in range(N):
                    _lstm_dw_row(dwfp, dwip, dwop, dwcp,
                                 &d_f[t, n, 0], &d_i[t, n, 0], &d_o[t, n, 0],
                                 &d_g[t, n, 0], &hh[t, n, 0], K, ds)
    else:
        with nogil:
            for t in range(T - 1, -1, -1):
                for n in range(N):
                    _lstm_back_point(wfp, wip, wop, wcp,
                                     &cc[t, n, 0], &ff[t, n, 0], &ii[t, n, 0],
                                     &oo[t, n, 0], &gg[t, n, 0], &tc[t, n, 0],
                                     &dhout[t, n, 0],
                                     &d_f[t, n, 0], &d_i[t, n, 0], &d_o[t, n, 0],
                                     &d_g[t, n, 0], &dh[n, 0], &dc[n, 0], K, ds)
                for n in range(N):
                    _lstm_dw_row(dwfp, dwip, dwop, dwcp,
                                 &d_f[t, n, 0], &d_i[t, n, 0], &d_o[t, n, 0],
                                 &d_g[t, n, 0], &hh[t, n, 0], K, ds)
    return d_f_arr, d_i_arr, d_o_arr, d_g_arr, dwf_arr, dwi_arr, dwo_arr, dwc_arr


# ---------------------------------------------------------------------------
# GRU

cdef inline void _gru_point(const double* wz, const double* wr, const double* wn,
                            const double* rz, const double* rr, const double* rn,
                            const double* hp,
                            double* zo, double* ro, double* no, double* hro,
                            double* hn, Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    cdef Py_ssize_t k, i, j, base, off
    cdef double az, ar, an, hv, zv
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for i in range(ds):
            az = rz[base + i]
            ar = rr[base + i]
            for j in range(ds):
                hv = hp[base + j]
                az = az + wz[off + i * ds + j] * hv
                ar = ar + wr[off + i * ds + j] * hv
            zo[base + i] = _sig_one(az)
            ro[base + i] = _sig_one(ar)
    for i in range(K * ds):
        hro[i] = ro[i] * hp[i]
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for i in range(ds):
            an = rn[base + i]
            for j in range(ds):
                an = an + wn[off + i * ds + j] * hro[base + j]
            no[base + i] = ctanh(an)
    for i in range(K * ds):
        zv = zo[i]
        hn[i] = (1.0 - zv) * hp[i] + zv * no[i]


def gru_forward(const double[:, :, ::1] wz, const double[:, :, ::1] wr,
                const double[:, :, ::1] wn, const double[:, :, ::1] dz,
                const double[:, :, ::1] dr, const double[:, :, ::1] dn,
                const double[:, ::1] h0, int threads=1):
    cdef Py_ssize_t T = dz.shape[0], N = dz.shape[1], D = dz.shape[2]
    cdef Py_ssize_t K = wz.shape[0], ds = wz.shape[1]
    H_arr = np.empty((T + 1, N, D))
    Z_arr = np.empty((T, N, D))
    R_arr = np.empty((T, N, D))
    NC_arr = np.empty((T, N, D))
    HR_arr = np.empty((T, N, D))
    cdef double[:, :, ::1] H = H_arr, Z = Z_arr, R = R_arr, NC = NC_arr, HR = HR_arr
    cdef const double* wzp = &wz[0, 0, 0]
    cdef const double* wrp = &wr[0, 0, 0]
    cdef const double* wnp = &wn[0, 0, 0]
    cdef Py_ssize_t t, n
    H_arr[0] = np.asarray(h0)
    if threads > 1:
        for t in range(T):
            for n in prange(N, num_threads=threads, schedule='static', nogil=True):
                _gru_point(wzp, wrp, wnp, &dz[t, n, 0], &dr[t, n, 0], &dn[t, n, 0],
                           &H[t, n, 0], &Z[t, n, 0], &R[t, n, 0], &NC[t, n, 0],
                           &HR[t, n, 0], &H[t + 1, n, 0], K, ds)
    else:
        with nogil:
            for t in range(T):
                for n in range(N):
                    _gru_point(wzp, wrp, wnp, &dz[t, n, 0], &dr[t, n, 0], &dn[t, n, 0],
                               &H[t, n, 0], &Z[t, n, 0], &R[t, n, 0], &NC[t, n, 0],
                               &HR[t, n, 0], &H[t + 1, n, 0], K, ds)
    return H_arr, Z_arr, R_arr, NC_arr, HR_arr


cdef inline void _gru_back_point(const double* wz, const double* wr, const double* wn,
                                 const double* hp, const double* zo, const double* ro,
                                 const double* no, const double* dho,
                                 double* dz, double* dr, double* dn,
                                 double* dh, double* dht_b, double* dhr_b,
                                 Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    # dht_b/dhr_b: per-sample scratch rows (total upstream and candidate-path
    # gradients); dh: running state gradient row
    cdef Py_ssize_t k, i, j, base, off
    cdef double dht, zv, ncv, acc
    for i in range(K * ds):
        dht = dho[i] + dh[i]
        dht_b[i] = dht
        zv = zo[i]
        ncv = no[i]
        dn[i] = dht * zv * (1.0 - ncv * ncv)
        dz[i] = dht * (ncv - hp[i]) * zv * (1.0 - zv)
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for j in range(ds):
            acc = 0.0
            for i in range(ds):
                acc = acc + wn[off + i * ds + j] * dn[base + i]
            dhr_b[base + j] = acc
    for i in range(K * ds):
        dr[i] = dhr_b[i] * hp[i] * ro[i] * (1.0 - ro[i])
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for j in range(ds):
            acc = dht_b[base + j] * (1.0 - zo[base + j]) + dhr_b[base + j] * ro[base + j]
            for i in range(ds):
                acc = acc + wz[off + i * ds + j] * dz[base + i] \
                          + wr[off + i * ds + j] * dr[base + i]
            dh[base + j] = acc


cdef inline void _gru_dw_row(double* dwz, double* dwr, double* dwn,
                             const double* zrow, const double* rrow,
                             const double* nrow, const double* hrow,
                             const double* hrrow,
                             Py_ssize_t K, Py_ssize_t ds) noexcept nogil:
    cdef Py_ssize_t k, i, j, base, off
    for k in range(K):
        base = k * ds
        off = k * ds * ds
        for i in range(ds):
            for j in range(ds):
                dwz[off + i * ds + j] += zrow[base + i] * hrow[base + j]
                dwr[off + i * ds + j] += rrow[base + i] * hrow[base + j]
                dwn[off + i * ds + j] += nrow[base + i] * hrrow[base + j]


def gru_backward(const double[:, :, ::1] wz, const double[:, :, ::1] wr,
                 const double[:, :, ::1] wn, const double[:, :, ::1] hh,
                 const double[:, :, ::1] zz, const double[:, :, ::1] rr,
                 const double[:, :, ::1] nc, const double[:, :, ::1] hr,
                 const double[:, :, ::1] dhout, int threads=1):
    cdef Py_ssize_t T = dhout.shape[0], N = dhout.shape[1], D = dhout.shape[2]
    cdef Py_ssize_t K = wz.shape[0], ds = wz.shape[1]
    d_z_arr = np.empty((T, N, D))
    d_r_arr = np.empty((T, N, D))
    d_n_arr = np.empty((T, N, D))
    dwz_arr = np.zeros((K, ds, ds))
    dwr_arr = np.zeros((K, ds, ds))
    dwn_arr = np.zeros((K, ds, ds))
    dh_arr = np.zeros((N, D))
    dht_buf_arr = np.empty((N, D))
    dhr_buf_arr = np.empty((N, D))
    cdef double[:, :, ::1] d_z = d_z_arr, d_r = d_r_arr, d_n = d_n_arr
    cdef double[:, :, ::1] dwz = dwz_arr, dwr = dwr_arr, dwn = dwn_arr
    cdef double[:, ::1] dh = dh_arr, dht_buf = dht_buf_arr, dhr_buf = dhr_buf_arr
    cdef const double* wzp = &wz[0, 0, 0]
    cdef const double* wrp = &wr[0, 0, 0]
    cdef const double* wnp = &wn[0, 0, 0]
    cdef double* dwzp = &dwz[0, 0, 0]
    cdef double* dwrp = &dwr[0, 0, 0]
    cdef double* dwnp = &dwn[0, 0, 0]
    cdef Py_ssize_t t, n
    if threads > 1:
        for t in range(T - 1, -1, -1):
            for n in prange(N, num_threads=threads, schedule='static', nogil=True):
                _gru_back_point(wzp, wrp, wnp, &hh[t, n, 0], &zz[t, n, 0], &rr[t, n, 0],
                                &nc[t, n, 0], &dhout[t, n, 0],
                                &d_z[t, n, 0], &d_r[t, n, 0], &d_n[t, n, 0],
                                &dh[n, 0], &dht_buf[n, 0], &dhr_buf[n, 0], K, ds)
            # Weight-gradient reduction: serial, fixed order (n ascending).
            with nogil:
                for n in range(N):
                    _gru_dw_row(dwzp, dwrp, dwnp,
                                &d_z[t, n, 0], &d_r[t, n, 0], &d_n[t, n, 0],
                                &hh[t, n, 0], &hr[t, n, 0], K, ds)
    else:
        with nogil:
            for t in range(T - 1, -1, -1):
                for n in range(N):
                    _gru_back_point(wzp, wrp, wnp, &hh[t, n, 0], &zz[t, n, 0], &rr[t, n, 0],
                                    &nc[t, n, 0], &dhout[t, n, 0],
                                    &d_z[t, n, 0], &d_r[t, n, 0], &d_n[t, n, 0],
                                    &dh[n, 0], &dht_buf[n, 0], &dhr_buf[n, 0], K, ds)
                for n in range(N):
                    _gru_dw_row(dwzp, dwrp, dwnp,
                                &d_z[t, n, 0], &d_r[t, n, 0], &d_n[t, n, 0],
                                &hh[t, n, 0], &hr[t, n, 0], K, ds)
    return d_z_arr, d_r_arr, d_n_arr, dwz_arr, dwr_arr, dwn_arr
