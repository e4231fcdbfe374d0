"""Synthetic data generators and CSV ingestion for the experiments.

Every generator is a pure function of (spec, rng): same seed, same bytes.
Batches are batch-major float64 with inputs (N, T, d_in) and targets either
(N, d_out) or (N, T, d_out).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .linalg import Rng

__all__ = [
    "SequenceBatch",
    "DgpSpec",
    "dgp_preset",
    "scaled_spec",
    "gen_arma11",
    "gen_rnn_dgp",
    "gen_adding_problem",
    "split_batch",
    "load_csv_series",
    "dump_batch",
    "load_batch",
]


@dataclass
class SequenceBatch:
    """One split of sequence data, plus any attached ground truth."""

    inputs: np.ndarray                 # (N, T, d_in)
    targets: np.ndarray                # (N, d_out) or (N, T, d_out)
    split: str = ""
    truth: dict | None = None          # generator weights, when known

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.ascontiguousarray(np.asarray(self.targets, dtype=np.float64))
        if self.inputs.ndim != 3:
            raise ValueError(f"inputs must be (N, T, d_in), got {self.inputs.shape}")
        if self.targets.ndim not in (2, 3) or self.targets.shape[0] != self.inputs.shape[0]:
            raise ValueError("targets must be (N, d_out) or (N, T, d_out) with matching N")
        # N = 0 is tolerated so tiny datasets can produce empty val/test
        # splits; consumers reject empty batches where it matters.
        if self.inputs.shape[1] < 1:
            raise ValueError("batch must have T >= 1")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("batch contains non-finite values")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def t_len(self) -> int:
        return self.inputs.shape[1]

    def take(self, idx, split: str | None = None) -> "SequenceBatch":
        return SequenceBatch(self.inputs[idx], self.targets[idx],
                             split if split is not None else self.split, self.truth)


def gen_arma11(n_series: int, t_len: int, phi: float, theta: float,
               noise_std: float, rng: Rng) -> np.ndarray:
    """ARMA(1,1) paths y_t = phi*y_{t-1} + e_t + theta*e_{t-1}, y_0 = e_0 = 0.

    Returns (n_series, t_len, 1). ``theta`` is the plus-convention MA
    coefficient; stationarity/invertibility require |phi| < 1 and |theta| < 1.
    """
    if not (abs(phi) < 1.0 and abs(theta) < 1.0):
        raise ValueError(f"need |phi| < 1 and |theta| < 1, got phi={phi}, theta={theta}")
    if n_series < 1 or t_len < 1:
        raise ValueError("n_series and t_len must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    eps = rng.gaussian(0.0, 1.0, (n_series, t_len)) * noise_std
    y = lfilter([1.0, theta], [1.0, -phi], eps, axis=1)
    return y[:, :, np.newaxis]


@dataclass(frozen=True)
class DgpSpec:
    """Ground-truth vanilla-RNN data generating process (Tanh, h_0 = 0)."""

    t_len: int
    d_in: int
    d: int
    n: int
    d_out: int
    wh_mean: float = 0.0
    wh_std: float = 1.0
    wx_mean: float = 0.0
    wx_std: float = 1.0
    hidden_bias: bool = True
    output_head: bool = True          # False: z = h_T + noise directly
    noise_std: float = 1.0
    input_kind: str = "arma"          # "arma" (phi=.7, theta=.3) or "gaussian"

    def __post_init__(self):
        if min(self.t_len, self.d_in, self.d, self.n, self.d_out) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.input_kind not in ("arma", "gaussian"):
            raise ValueError("input_kind must be 'arma' or 'gaussian'")
        if not self.output_head and self.d_out != self.d:
            raise ValueError("without an output head, d_out must equal d")


_PRESETS = {
    # Dense-RNN teacher with N(0,1) weights, ARMA(1,1) scalar inputs,
    # 10-dimensional linear readout with N(0,1) output noise.
    "sec61": DgpSpec(t_len=128, d_in=1, d=128, n=50000, d_out=10,
                     wh_std=1.0, wx_std=1.0, hidden_bias=True,
                     output_head=True, noise_std=1.0, input_kind="arma"),
    # Small-weight teacher observed directly: z = h_T + tiny noise.
    "appA": DgpSpec(t_len=128, d_in=1, d=128, n=50000, d_out=128,
                    wh_std=0.1, wx_mean=2.0, wx_std=2.0, hidden_bias=False,
                    output_head=False, noise_std=0.01, input_kind="gaussian"),
}


def dgp_preset(name: str, **overrides) -> DgpSpec:
    """Named preset, optionally overridden field-by-field.

    Overriding d for the "appA" preset re-pins d_out = d (direct observation).
    """
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    spec = _PRESETS[name]
    if name == "appA" and "d" in overrides and "d_out" not in overrides:
        overrides = dict(overrides, d_out=overrides["d"])
    return replace(spec, **overrides) if overrides else spec


def scaled_spec(spec: DgpSpec, scale: float) -> DgpSpec:
    """Shrink (or grow) t_len, d, n proportionally; dims floor at 1."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    dim = lambda v: max(1, int(round(v * scale)))
    d = dim(spec.d)
    d_out = d if not spec.output_head else spec.d_out
    return replace(spec, t_len=dim(spec.t_len), d=d, n=dim(spec.n), d_out=d_out)


def gen_rnn_dgp(spec: DgpSpec, rng: Rng) -> SequenceBatch:
    """Simulate the teacher RNN; batch.truth carries the true weights."""
    wrng = rng.substream("weights")
    wh = wrng.gaussian(spec.wh_mean, spec.wh_std, (spec.d, spec.d))
    wx = wrng.gaussian(spec.wx_mean, spec.wx_std, (spec.d, spec.d_in))
    bh = wrng.gaussian(0.0, 1.0, spec.d) if spec.hidden_bias else np.zeros(spec.d)
    truth = {"wh": wh, "wx": wx, "bh": bh}
    if spec.output_head:
        wy = wrng.gaussian(0.0, 1.0, (spec.d_out, spec.d))
        by = wrng.gaussian(0.0, 1.0, spec.d_out)
        truth["wy"] = wy
        truth["by"] = by

    irng = rng.substream("inputs")
    if spec.input_kind == "arma":
        if spec.d_in != 1:
            raise ValueError("arma inputs are scalar; set d_in=1 or input_kind='gaussian'")
        x = gen_arma11(spec.n, spec.t_len, 0.7, 0.3, 1.0, irng)
    else:
        x = irng.gaussian(0.0, 1.0, (spec.n, spec.t_len, spec.d_in))

    h = np.zeros((spec.n, spec.d))
    for t in range(spec.t_len):
        h = np.tanh(h @ wh.T + x[:, t] @ wx.T + bh)

    noise = rng.substream("noise").gaussian(0.0, 1.0, (spec.n, spec.d_out)) * spec.noise_std
    if spec.output_head:
        z = h @ wy.T + by + noise
    else:
        z = h + noise
    return SequenceBatch(x, z, truth=truth)


def gen_adding_problem(n: int, t_len: int, rng: Rng) -> SequenceBatch:
    """Two-channel adding task; target is the sum of the two marked values.

    Channel 0 is U(0,1); channel 1 is zero except for single 1.0 markers, one
    in each half of the sequence. Targets lie strictly inside (0, 2).
    """
    if t_len < 2:
        raise ValueError("adding problem needs t_len >= 2")
    if n < 1:
        raise ValueError("n must be >= 1")
    values = rng.uniform(0.0, 1.0, (n, t_len))
    half = t_len // 2
    p1 = rng.integers(0, half, n)
    p2 = rng.integers(half, t_len, n)
    markers = np.zeros((n, t_len))
    rows = np.arange(n)
    markers[rows, p1] = 1.0
    markers[rows, p2] = 1.0
    inputs = np.stack([values, markers], axis=2)
    targets = (values[rows, p1] + values[rows, p2])[:, np.newaxis]
    return SequenceBatch(inputs, targets)


def split_batch(batch: SequenceBatch, fractions=(0.8, 0.1, 0.1)) -> dict:
    """Deterministic contiguous train/val/test split by sample index."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three non-negatives summing to 1")
    n = batch.n
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return {
        "train": batch.take(slice(0, n_train), "train"),
        "val": batch.take(slice(n_train, n_train + n_val), "val"),
        "test": batch.take(slice(n_train + n_val, n), "test"),
    }


# ---------------------------------------------------------------------------
# CSV ingestion


def load_csv_series(path, target_column: str, window_t: int, horizon: int,
                    fractions=(0.8, 0.1, 0.1)) -> dict:
    """Sliding windows over a CSV time series, split chronologically.

    Every numeric column becomes an input feature; the target is
    ``target_column`` read ``horizon`` steps after each window's end. A
    non-numeric first column is treated as a timestamp and ignored.
    Returns {"train": SequenceBatch, "val": ..., "test": ...}.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if window_t < 1:
        raise ValueError("window_t must be >= 1")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")

    drop_first = False
    try:
        float(rows[0][0])
    except ValueError:
        drop_first = True
    names = header[1:] if drop_first else header
    if target_column not in names:
        raise ValueError(f"{path}: no column named {target_column!r} (have {names})")
    tcol = names.index(target_column)

    data = np.empty((len(rows), len(names)))
    for i, row in enumerate(rows):
        cells = row[1:] if drop_first else row
        if len(cells) != len(names):
            raise ValueError(f"{path}: row {i + 2} has {len(cells)} cells, expected {len(names)}")
        for j, cell in enumerate(cells):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric cell {cell!r} at row {i + 2}, column {names[j]!r}") from None

    n_rows = data.shape[0]
    count = n_rows - window_t - horizon + 1
    if count < 1:
        raise ValueError(f"{path}: series of length {n_rows} too short for window {window_t} + horizon {horizon}")
    inputs = np.empty((count, window_t, data.shape[1]))
    targets = np.empty((count, 1))
    for s in range(count):
        inputs[s] = data[s:s + window_t]
        targets[s, 0] = data[s + window_t + horizon - 1, tcol]
    return split_batch(SequenceBatch(inputs, targets), fractions)


# ---------------------------------------------------------------------------
# Batch dump format (plain text, for external cross-checks)


def dump_batch(batch: SequenceBatch, path) -> None:
    """Header `N T d_in d_out` (plus `seq` for per-step targets), then rows."""
    n, t_len, d_in = batch.inputs.shape
    seq = batch.targets.ndim == 3
    d_out = batch.targets.shape[-1]
    with open(path, "w") as fh:
        tag = " seq" if seq else ""
        fh.write(f"{n} {t_len} {d_in} {d_out}{tag}\n")
        for i in range(n):
            for t in range(t_len):
                fh.write(" ".join(repr(float(v)) for v in batch.inputs[i, t]) + "\n")
            rows = batch.targets[i] if seq else batch.targets[i:i + 1]
            for row in rows:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_batch(path) -> SequenceBatch:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) not in (4, 5) or (len(head) == 5 and head[4] != "seq"):
            raise ValueError(f"{path}: malformed header")
        n, t_len, d_in, d_out = (int(v) for v in head[:4])
        seq = len(head) == 5
        inputs = np.empty((n, t_len, d_in))
        targets = np.empty((n, t_len, d_out) if seq else (n, d_out))
        for i in range(n):
            for t in range(t_len):
                vals = fh.readline().split()
                if len(vals) != d_in:
                    raise ValueError(f"{path}: bad input row for sample {i}, step {t}")
                inputs[i, t] = [float(v) for v in vals]
            t_rows = t_len if seq else 1
            for t in range(t_rows):
                vals = fh.readline().split()
                if len(vals) != d_out:
                    raise ValueError(f"{path}: bad target row for sample {i}")
                if seq:
                    targets[i, t] = [float(v) for v in vals]
                else:
                    targets[i] = [float(v) for v in vals]
    return SequenceBatch(inputs, targets)
