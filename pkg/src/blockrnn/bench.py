"""Timing harness and the accuracy-vs-block-size sweep.

Absolute wall-clock numbers are machine-dependent, so results carry
environment metadata and downstream checks assert orderings and trends only.
Timing uses warmup runs plus median-of-means to tame scheduler noise.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .cells import act_code
from .datagen import DgpSpec, gen_rnn_dgp, split_batch
from .linalg import Rng
from .net import ModelSpec, init_params
from .train import TrainConfig, evaluate, train

__all__ = [
    "BenchResult",
    "time_layer",
    "time_dense_reference",
    "time_block_vs_dense",
    "compare_backends",
    "mse_vs_blocksize",
    "results_json",
    "results_table",
]

WARMUP_RUNS = 5


@dataclass
class BenchResult:
    d: int
    block_size: int
    k: int
    t_len: int
    reps: int
    forward_ms_mean: float | None = None
    forward_ms_std: float | None = None
    backward_ms_mean: float | None = None
    backward_ms_std: float | None = None
    test_mse_mean: float | None = None
    test_mse_std: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.k * self.block_size != self.d:
            raise ValueError("need k * block_size == d")
        for v in (self.forward_ms_mean, self.backward_ms_mean):
            if v is not None and v <= 0:
                raise ValueError("measured times must be positive")

    def to_json(self) -> dict:
        out = {"d": self.d, "block_size": self.block_size, "k": self.k,
               "t_len": self.t_len, "reps": self.reps}
        for name in ("forward_ms_mean", "forward_ms_std",
                     "backward_ms_mean", "backward_ms_std",
                     "test_mse_mean", "test_mse_std"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        out["meta"] = self.meta
        return out


def _env_meta(threads: int) -> dict:
    return {
        "backend": backend.backend_name(),
        "threads": threads,
        "cpu_count": os.cpu_count() or 1,
    }


def _summarize(times_s: np.ndarray) -> tuple[float, float]:
    """Median-of-means over up to 5 groups, in milliseconds."""
    groups = np.array_split(times_s, min(5, len(times_s)))
    means = [float(np.mean(g)) for g in groups if len(g)]
    return float(np.median(means)) * 1e3, float(np.std(times_s)) * 1e3


def time_layer(d: int, block_size: int, t_len: int, d_in: int, reps: int,
               rng: Rng, batch: int = 16, threads: int = 1,
               warmup: int = WARMUP_RUNS) -> BenchResult:
    """Wall-clock one recurrent layer's forward and backward passes.

    Each rep times a full T-step forward (drive included) and a full BPTT
    backward over a fixed random batch.
    """
    if d < 1 or block_size < 1 or d % block_size != 0:
        raise ValueError(f"d={d} not divisible by block_size={block_size}")
    if reps < 1 or t_len < 1 or batch < 1:
        raise ValueError("reps, t_len, batch must be >= 1")
    kb = backend.get_backend()
    k = d // block_size
    wh = rng.gaussian(0.0, 1.0 / np.sqrt(d), (k, block_size, block_size))
    wx = rng.gaussian(0.0, 1.0 / np.sqrt(d), (d, d_in))
    b = np.zeros(d)
    x = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d_in)))
    h0 = np.zeros((batch, d))
    dhout = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d)))
    act = act_code("tanh")

    fwd = np.empty(reps)
    bwd = np.empty(reps)
    for r in range(-warmup, reps):
        t0 = time.perf_counter()
        drive = np.ascontiguousarray(x @ wx.T + b)
        hh, hbar = kb.rnn_forward(wh, drive, h0, act, threads)
        t1 = time.perf_counter()
        delta, dwh = kb.rnn_backward(wh, hh, hbar, dhout, act, threads)
        t2 = time.perf_counter()
        if r >= 0:
            fwd[r] = t1 - t0
            bwd[r] = t2 - t1
    f_mean, f_std = _summarize(fwd)
    b_mean, b_std = _summarize(bwd)
    return BenchResult(d=d, block_size=block_size, k=k, t_len=t_len, reps=reps,
                       forward_ms_mean=f_mean, forward_ms_std=f_std,
                       backward_ms_mean=b_mean, backward_ms_std=b_std,
                       meta=_env_meta(threads))


def time_dense_reference(d: int, t_len: int, d_in: int, reps: int, rng: Rng,
                         batch: int = 16, threads: int = 1,
                         warmup: int = WARMUP_RUNS) -> BenchResult:
    """Same measurement against the unsplit dense-recurrence kernels."""
    kb = backend.get_backend()
    wh = rng.gaussian(0.0, 1.0 / np.sqrt(d), (d, d))
    wx = rng.gaussian(0.0, 1.0 / np.sqrt(d), (d, d_in))
    b = np.zeros(d)
    x = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d_in)))
    h0 = np.zeros((batch, d))
    dhout = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d)))
    act = act_code("tanh")

    fwd = np.empty(reps)
    bwd = np.empty(reps)
    for r in range(-warmup, reps):
        t0 = time.perf_counter()
        drive = np.ascontiguousarray(x @ wx.T + b)
        hh, hbar = kb.dense_rnn_forward(wh, drive, h0, act, threads)
        t1 = time.perf_counter()
        delta, dwh = kb.dense_rnn_backward(wh, hh, hbar, dhout, act, threads)
        t2 = time.perf_counter()
        if r >= 0:
            fwd[r] = t1 - t0
            bwd[r] = t2 - t1
    f_mean, f_std = _summarize(fwd)
    b_mean, b_std = _summarize(bwd)
    return BenchResult(d=d, block_size=d, k=1, t_len=t_len, reps=reps,
                       forward_ms_mean=f_mean, forward_ms_std=f_std,
                       backward_ms_mean=b_mean, backward_ms_std=b_std,
                       meta=dict(_env_meta(threads), dense_reference=True))


def time_block_vs_dense(d: int, t_len: int, d_in: int, reps: int, rng: Rng,
                        batch: int = 16, threads: int = 1,
                        warmup: int = WARMUP_RUNS) -> tuple[BenchResult, BenchResult]:
    """Paired timing of the K=1 block kernel against the dense kernel.

    Both kernels run the same computation on identical weights and inputs,
    and their reps are interleaved, so slow phases of a shared machine hit
    both sides equally instead of skewing whichever happened to run second.
    """
    if reps < 1 or t_len < 1 or batch < 1 or d < 1:
        raise ValueError("d, reps, t_len, batch must be >= 1")
    kb = backend.get_backend()
    wh_dense = rng.gaussian(0.0, 1.0 / np.sqrt(d), (d, d))
    wh_block = np.ascontiguousarray(wh_dense.reshape(1, d, d))
    wx = rng.gaussian(0.0, 1.0 / np.sqrt(d), (d, d_in))
    b = np.zeros(d)
    x = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d_in)))
    h0 = np.zeros((batch, d))
    dhout = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d)))
    act = act_code("tanh")

    fwd_b = np.empty(reps)
    bwd_b = np.empty(reps)
    fwd_d = np.empty(reps)
    bwd_d = np.empty(reps)
    for r in range(-warmup, reps):
        t0 = time.perf_counter()
        drive = np.ascontiguousarray(x @ wx.T + b)
        hh, hbar = kb.rnn_forward(wh_block, drive, h0, act, threads)
        t1 = time.perf_counter()
        delta, dwh = kb.rnn_backward(wh_block, hh, hbar, dhout, act, threads)
        t2 = time.perf_counter()
        drive = np.ascontiguousarray(x @ wx.T + b)
        hh, hbar = kb.dense_rnn_forward(wh_dense, drive, h0, act, threads)
        t3 = time.perf_counter()
        delta, dwh = kb.dense_rnn_backward(wh_dense, hh, hbar, dhout, act, threads)
        t4 = time.perf_counter()
        if r >= 0:
            fwd_b[r] = t1 - t0
            bwd_b[r] = t2 - t1
            fwd_d[r] = t3 - t2
            bwd_d[r] = t4 - t3
    fb, fb_s = _summarize(fwd_b)
    bb, bb_s = _summarize(bwd_b)
    fd, fd_s = _summarize(fwd_d)
    bd, bd_s = _summarize(bwd_d)
    block = BenchResult(d=d, block_size=d, k=1, t_len=t_len, reps=reps,
                        forward_ms_mean=fb, forward_ms_std=fb_s,
                        backward_ms_mean=bb, backward_ms_std=bb_s,
                        meta=dict(_env_meta(threads), paired=True))
    dense = BenchResult(d=d, block_size=d, k=1, t_len=t_len, reps=reps,
                        forward_ms_mean=fd, forward_ms_std=fd_s,
                        backward_ms_mean=bd, backward_ms_std=bd_s,
                        meta=dict(_env_meta(threads), dense_reference=True,
                                  paired=True))
    return block, dense


BACKEND_PARITY_TOL = 1e-12


def compare_backends(d: int, block_size: int, t_len: int, d_in: int,
                     reps: int, rng: Rng, batch: int = 16, threads: int = 1,
                     warmup: int = WARMUP_RUNS) -> list[BenchResult]:
    """Time every available kernel backend on one identical workload.

    Reps are interleaved across backends (shared-machine noise hits all of
    them equally), and each rep cross-checks that the backends produce the
    same states and weight gradients to within ``BACKEND_PARITY_TOL`` — the
    comparison is about speed, never about results.
    """
    if d < 1 or block_size < 1 or d % block_size != 0:
        raise ValueError(f"d={d} not divisible by block_size={block_size}")
    if reps < 1 or t_len < 1 or batch < 1:
        raise ValueError("reps, t_len, batch must be >= 1")
    names = backend.available_backends()
    kbs = [backend.get_backend(n) for n in names]
    k = d // block_size
    wh = rng.gaussian(0.0, 1.0 / np.sqrt(d), (k, block_size, block_size))
    wx = rng.gaussian(0.0, 1.0 / np.sqrt(d), (d, d_in))
    b = np.zeros(d)
    x = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d_in)))
    h0 = np.zeros((batch, d))
    dhout = np.ascontiguousarray(rng.gaussian(0.0, 1.0, (t_len, batch, d)))
    act = act_code("tanh")

    fwd = np.empty((len(kbs), reps))
    bwd = np.empty((len(kbs), reps))
    for r in range(-warmup, reps):
        states = []
        grads = []
        for i, kb in enumerate(kbs):
            t0 = time.perf_counter()
            drive = np.ascontiguousarray(x @ wx.T + b)
            hh, hbar = kb.rnn_forward(wh, drive, h0, act, threads)
            t1 = time.perf_counter()
            delta, dwh = kb.rnn_backward(wh, hh, hbar, dhout, act, threads)
            t2 = time.perf_counter()
            if r >= 0:
                fwd[i, r] = t1 - t0
                bwd[i, r] = t2 - t1
            states.append(hh)
            grads.append(dwh)
        for i in range(1, len(kbs)):
            dev = max(float(np.abs(states[i] - states[0]).max()),
                      float(np.abs(grads[i] - grads[0]).max()))
            if dev > BACKEND_PARITY_TOL:
                raise AssertionError(
                    f"backend {names[i]!r} deviates from {names[0]!r} "
                    f"by {dev:.2e} (tol {BACKEND_PARITY_TOL:.0e})")

    results = []
    for i, name in enumerate(names):
        f_mean, f_std = _summarize(fwd[i])
        b_mean, b_std = _summarize(bwd[i])
        results.append(BenchResult(
            d=d, block_size=block_size, k=k, t_len=t_len, reps=reps,
            forward_ms_mean=f_mean, forward_ms_std=f_std,
            backward_ms_mean=b_mean, backward_ms_std=b_std,
            meta=dict(_env_meta(threads), backend=name, paired=True),
        ))
    return results


def mse_vs_blocksize(block_sizes, replicates: int, spec: DgpSpec, rng: Rng,
                     config: TrainConfig | None = None,
                     fractions=(0.8, 0.1, 0.1), callbacks=None) -> list[BenchResult]:
    """Test MSE of a one-layer model + linear readout across block sizes.

    Replicates are paired: replicate r uses the same data and the same init
    stream at every block size, so differences isolate the block structure.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    block_sizes = list(block_sizes)
    for ds in block_sizes:
        if spec.d % ds != 0:
            raise ValueError(f"block size {ds} does not divide d={spec.d}")
    if config is None:
        config = TrainConfig()

    datasets = []
    for r in range(replicates):
        batch = gen_rnn_dgp(spec, rng.substream("data", r))
        datasets.append(split_batch(batch, fractions))

    results = []
    for ds in block_sizes:
        mses = []
        for r in range(replicates):
            mspec = ModelSpec(d=spec.d, block_size=ds, d_in=spec.d_in,
                              aggregator="identity", d_out=spec.d_out,
                              activation="tanh", mode="seq2one")
            model = init_params(mspec, "uniform_scaled", rng.substream("init", r))
            # same config (and shuffle seed) everywhere: runs differ only in
            # data/init replicate and block size
            model, _ = train(model, datasets[r], config, callbacks=callbacks)
            mses.append(evaluate(model, datasets[r]["test"], "mse"))
        arr = np.asarray(mses)
        results.append(BenchResult(
            d=spec.d, block_size=ds, k=spec.d // ds, t_len=spec.t_len,
            reps=replicates, test_mse_mean=float(arr.mean()),
            test_mse_std=float(arr.std()), meta=_env_meta(backend.get_num_threads()),
        ))
    return results


def results_json(results) -> str:
    return json.dumps([r.to_json() for r in results], indent=2, sort_keys=True)


def results_table(results) -> str:
    """Aligned text table; columns adapt to which measurements exist."""
    cols = ["d", "d_s", "K", "T", "reps"]
    have_time = any(r.forward_ms_mean is not None for r in results)
    have_mse = any(r.test_mse_mean is not None for r in results)
    if have_time:
        cols += ["fwd_ms", "fwd_std", "bwd_ms", "bwd_std"]
    if have_mse:
        cols += ["test_mse", "mse_std"]
    rows = [cols]
    for r in results:
        row = [str(r.d), str(r.block_size), str(r.k), str(r.t_len), str(r.reps)]
        if have_time:
            row += [_fmt(r.forward_ms_mean), _fmt(r.forward_ms_std),
                    _fmt(r.backward_ms_mean), _fmt(r.backward_ms_std)]
        if have_mse:
            row += [_fmt(r.test_mse_mean), _fmt(r.test_mse_std)]
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(cols))]
    lines = ["  ".join(cell.rjust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4g}"
