"""Deep block-recurrent models: stacking, BPTT, decomposition, checkpoints.

A ``DeepModel`` is: optional input projection -> L recurrent cells (layer
l > 1 consumes the concatenated block states of layer l-1 at the same time
step) -> position-wise aggregator over the final layer's states -> optional
linear head, applied at the last step (sequence-to-one) or at every step
(sequence-to-sequence).

Public array layout is batch-major ``(N, T, ...)``; internally everything is
time-major ``(T, N, ...)`` to match the kernels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .cells import ACTIVATIONS, ParaGruCell, ParaLstmCell, ParaRnnCell, act_code
from .features import RecurrenceFeature, canonical_matrix
from .linalg import BlockDiagonalMatrix, Rng

__all__ = [
    "ModelSpec",
    "CanonicalBlocks",
    "Aggregator",
    "DeepModel",
    "ForwardCache",
    "cell_forward",
    "init_params",
    "build_model",
    "deep_forward",
    "backward_bptt",
    "additive_decompose",
    "save_checkpoint",
    "load_checkpoint",
]

CELL_KINDS = ("rnn", "lstm", "gru")
AGG_KINDS = ("identity", "linear", "ffn")
MODES = ("seq2one", "seq2seq")


@dataclass
class ModelSpec:
    """Architecture description; `init_params` turns it into a DeepModel."""

    d: int
    block_size: int
    d_in: int
    layers: int = 1
    cell: str = "rnn"
    activation: str = "tanh"
    aggregator: str = "identity"
    agg_out: int | None = None      # linear/ffn output width, default d
    agg_hidden: int | None = None   # ffn inner width, default d
    d_out: int | None = None        # head width; None = no head
    mode: str = "seq2one"
    input_proj: bool = False
    bias: bool = True               # False: cell biases frozen at zero

    def __post_init__(self):
        if self.d < 1 or self.block_size < 1 or self.d % self.block_size != 0:
            raise ValueError(f"d={self.d} not divisible by block_size={self.block_size}")
        if self.d_in < 1 or self.layers < 1:
            raise ValueError("d_in and layers must be >= 1")
        if self.cell not in CELL_KINDS:
            raise ValueError(f"cell must be one of {CELL_KINDS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.aggregator not in AGG_KINDS:
            raise ValueError(f"aggregator must be one of {AGG_KINDS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def num_blocks(self) -> int:
        return self.d // self.block_size

    def to_json(self) -> dict:
        return {
            "d": self.d, "block_size": self.block_size, "d_in": self.d_in,
            "layers": self.layers, "cell": self.cell, "activation": self.activation,
            "aggregator": self.aggregator, "agg_out": self.agg_out,
            "agg_hidden": self.agg_hidden, "d_out": self.d_out, "mode": self.mode,
            "input_proj": self.input_proj, "bias": self.bias,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        return cls(**obj)


@dataclass(frozen=True)
class CanonicalBlocks:
    """Recurrent initialization from explicit recurrence features.

    The features' canonical matrices are laid down in order as a direct sum;
    the result must tile exactly into the model's (K, d_s) block structure.
    """

    features: tuple

    def __init__(self, features):
        object.__setattr__(self, "features", tuple(features))

    def build(self, d: int, block_size: int) -> BlockDiagonalMatrix:
        span = sum(f.dims for f in self.features)
        if span != d:
            raise ValueError(
                f"canonical features span {span} dimensions, model needs {d}"
            )
        dense = canonical_matrix(list(self.features))
        # from_dense(tol=0) rejects any feature straddling a block boundary.
        return BlockDiagonalMatrix.from_dense(dense, block_size, tol=0.0)


class Aggregator:
    """Position-wise map over concatenated block states.

    Variants: identity; linear (W s_t + b); ffn (W2 relu(W1 s_t + b1) + b2).
    """

    def __init__(self, variant: str, tensors: dict[str, np.ndarray] | None = None):
        if variant not in AGG_KINDS:
            raise ValueError(f"unknown aggregator {variant!r}")
        self.variant = variant
        self.tensors = tensors or {}
        if variant == "linear" and set(self.tensors) != {"w", "b"}:
            raise ValueError("linear aggregator needs tensors w, b")
        if variant == "ffn" and set(self.tensors) != {"w1", "b1", "w2", "b2"}:
            raise ValueError("ffn aggregator needs tensors w1, b1, w2, b2")

    @property
    def out_dim_of(self):
        if self.variant == "linear":
            return self.tensors["w"].shape[0]
        if self.variant == "ffn":
            return self.tensors["w2"].shape[0]
        return None  # identity: same as input

    def apply(self, s: np.ndarray):
        """s: (T, N, d) -> (out, cache)."""
        if self.variant == "identity":
            return s, None
        if self.variant == "linear":
            return s @ self.tensors["w"].T + self.tensors["b"], None
        pre = s @ self.tensors["w1"].T + self.tensors["b1"]
        hid = np.maximum(pre, 0.0)
        out = hid @ self.tensors["w2"].T + self.tensors["b2"]
        return out, hid

    def backward(self, s: np.ndarray, cache, dout: np.ndarray):
        """Returns (ds, grads dict keyed by tensor name)."""
        t_len, n, _ = dout.shape
        if self.variant == "identity":
            return dout, {}
        flat = dout.reshape(t_len * n, -1)
        if self.variant == "linear":
            grads = {
                "w": flat.T @ s.reshape(t_len * n, -1),
                "b": flat.sum(axis=0),
            }
            return dout @ self.tensors["w"], grads
        hid = cache
        dhid = dout @ self.tensors["w2"]
        dhid = dhid * (hid > 0.0)
        dflat = dhid.reshape(t_len * n, -1)
        grads = {
            "w2": flat.T @ hid.reshape(t_len * n, -1),
            "b2": flat.sum(axis=0),
            "w1": dflat.T @ s.reshape(t_len * n, -1),
            "b1": dflat.sum(axis=0),
        }
        return dhid @ self.tensors["w1"], grads


class DeepModel:
    """Stacked block-recurrent cells with aggregator and optional head."""

    def __init__(self, spec: ModelSpec, cells, aggregator: Aggregator,
                 head_w=None, head_b=None, input_proj_w=None, frozen=()):
        self.spec = spec
        self.cells = list(cells)
        self.aggregator = aggregator
        self.head_w = head_w
        self.head_b = head_b
        self.input_proj_w = input_proj_w
        self.frozen = frozenset(frozen)
        if len(self.cells) != spec.layers:
            raise ValueError("cell count does not match spec.layers")

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def d_out(self) -> int:
        if self.head_w is not None:
            return self.head_w.shape[0]
        if self.aggregator.variant == "identity":
            return self.spec.d
        return self.aggregator.out_dim_of

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter tensors, keyed by stable names."""
        out: dict[str, np.ndarray] = {}
        if self.input_proj_w is not None:
            out["input_proj.w"] = self.input_proj_w
        for l, cell in enumerate(self.cells):
            for name, tensor in cell.param_tensors().items():
                out[f"cells.{l}.{name}"] = tensor
        for name, tensor in self.aggregator.tensors.items():
            out[f"agg.{name}"] = tensor
        if self.head_w is not None:
            out["head.w"] = self.head_w
            out["head.b"] = self.head_b
        return out

    def recurrent_matrix(self, layer: int = 0) -> BlockDiagonalMatrix:
        """The (first) recurrent matrix of a layer; vanilla cells only."""
        cell = self.cells[layer]
        if cell.kind != "rnn":
            raise ValueError("use recurrent_matrices() for gated cells")
        return cell.wh

    def recurrent_matrices(self, layer: int = 0) -> dict[str, BlockDiagonalMatrix]:
        cell = self.cells[layer]
        if cell.kind == "rnn":
            return {"h": cell.wh}
        return cell.recurrent_matrices()


class ForwardCache:
    """Everything backward_bptt needs from the matching forward call."""

    def __init__(self, model, xt, layer_inputs, layer_caches, agg_in, agg_cache, agg_out):
        self.model = model
        self.xt = xt                    # (T, N, d_in) raw inputs, time-major
        self.layer_inputs = layer_inputs
        self.layer_caches = layer_caches
        self.agg_in = agg_in            # (T, N, d) final-layer states
        self.agg_cache = agg_cache
        self.agg_out = agg_out          # (T, N, d_agg)

    @property
    def t_len(self):
        return self.xt.shape[0]

    @property
    def n(self):
        return self.xt.shape[1]


def cell_forward(cell, h_prev, x_t, *extra):
    """Single recurrent step through any cell kind.

    Vanilla cells return (h_t, pre-activation); LSTM takes and returns a cell
    state ((h, c, gates)); GRU returns (h, gates). Thin alias for
    ``cell.step`` so single-step use reads the same as the batched ops.
    """
    return cell.step(h_prev, x_t, *extra)


def _inputs_array(batch) -> np.ndarray:
    x = batch.inputs if hasattr(batch, "inputs") else batch
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"inputs must be (N, T, d_in), got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("empty batch")
    return x


def _drive(xin: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # (T, N, d_in) @ (d, d_in)^T + (d,) -> (T, N, d), C-contiguous for kernels
    return np.ascontiguousarray(xin @ w.T + b)


def deep_forward(model: DeepModel, batch):
    """Run the full network. Returns (outputs, cache).

    Outputs: (N, d_out) in seq2one mode, (N, T, d_out) in seq2seq mode.
    """
    x = _inputs_array(batch)
    n, t_len, d_in = x.shape
    if d_in != model.spec.d_in:
        raise ValueError(f"model expects d_in={model.spec.d_in}, batch has {d_in}")
    kb = backend.get_backend()
    threads = backend.get_num_threads()
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))

    cur = xt
    if model.input_proj_w is not None:
        cur = np.ascontiguousarray(cur @ model.input_proj_w.T)

    layer_inputs = []
    layer_caches = []
    h0 = np.zeros((n, model.d))
    for cell in model.cells:
        layer_inputs.append(cur)
        if cell.kind == "rnn":
            drive = _drive(cur, cell.wx, cell.b)
            hh, hbar = kb.rnn_forward(cell.wh.blocks, drive, h0, act_code(cell.activation), threads)
            hh, hbar = np.asarray(hh), np.asarray(hbar)
            layer_caches.append({"H": hh, "Hbar": hbar})
            cur = hh[1:]
        elif cell.kind == "lstm":
            df = _drive(cur, cell.uf, cell.bf)
            di = _drive(cur, cell.ui, cell.bi)
            do = _drive(cur, cell.uo, cell.bo)
            dc = _drive(cur, cell.uc, cell.bc)
            res = kb.lstm_forward(cell.wf.blocks, cell.wi.blocks, cell.wo.blocks,
                                  cell.wc.blocks, df, di, do, dc, h0, h0, threads)
            hh, cc, ff, ii, oo, gg, tc = (np.asarray(a) for a in res)
            layer_caches.append({"H": hh, "C": cc, "F": ff, "I": ii, "O": oo, "G": gg, "TC": tc})
            cur = hh[1:]
        else:
            dz = _drive(cur, cell.uz, cell.bz)
            dr = _drive(cur, cell.ur, cell.br)
            dn = _drive(cur, cell.un, cell.bn)
            res = kb.gru_forward(cell.wz.blocks, cell.wr.blocks, cell.wn.blocks,
                                 dz, dr, dn, h0, threads)
            hh, zz, rr, nc, hr = (np.asarray(a) for a in res)
            layer_caches.append({"H": hh, "Z": zz, "R": rr, "NC": nc, "HR": hr})
            cur = hh[1:]

    agg_out, agg_cache = model.aggregator.apply(cur)
    cache = ForwardCache(model, xt, layer_inputs, layer_caches, cur, agg_cache, agg_out)

    if model.spec.mode == "seq2one":
        last = agg_out[-1]
        out = last if model.head_w is None else last @ model.head_w.T + model.head_b
    else:
        seq = agg_out if model.head_w is None else agg_out @ model.head_w.T + model.head_b
        out = np.ascontiguousarray(seq.transpose(1, 0, 2))
    return out, cache


def backward_bptt(model: DeepModel, cache: ForwardCache, dout) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss given d(loss)/d(outputs).

    ``dout`` must match the forward outputs' shape. Returns a dict with one
    entry per parameter tensor (same keys as ``model.params()``); frozen
    parameters get exact zeros.
    """
    if cache.model is not model:
        raise ValueError("cache does not belong to this model")
    kb = backend.get_backend()
    threads = backend.get_num_threads()
    t_len, n = cache.t_len, cache.n
    dout = np.asarray(dout, dtype=np.float64)
    grads: dict[str, np.ndarray] = {}

    da_dim = cache.agg_out.shape[2]
    d_agg = np.zeros((t_len, n, da_dim))
    if model.spec.mode == "seq2one":
        if dout.shape != (n, model.d_out):
            raise ValueError(f"dout shape {dout.shape} does not match outputs ({n}, {model.d_out})")
        if model.head_w is not None:
            grads["head.w"] = dout.T @ cache.agg_out[-1]
            grads["head.b"] = dout.sum(axis=0)
            d_agg[-1] = dout @ model.head_w
        else:
            d_agg[-1] = dout
    else:
        if dout.shape != (n, t_len, model.d_out):
            raise ValueError(f"dout shape {dout.shape} does not match outputs ({n}, {t_len}, {model.d_out})")
        dseq = dout.transpose(1, 0, 2)
        if model.head_w is not None:
            flat = dseq.reshape(t_len * n, -1)
            grads["head.w"] = flat.T @ cache.agg_out.reshape(t_len * n, -1)
            grads["head.b"] = flat.sum(axis=0)
            d_agg[:] = dseq @ model.head_w
        else:
            d_agg[:] = dseq

    dstate, agg_grads = model.aggregator.backward(cache.agg_in, cache.agg_cache, d_agg)
    for name, g in agg_grads.items():
        grads[f"agg.{name}"] = g

    for l in range(len(model.cells) - 1, -1, -1):
        cell = model.cells[l]
        lc = cache.layer_caches[l]
        xin = cache.layer_inputs[l]
        d_in_l = xin.shape[2]
        dstate = np.ascontiguousarray(dstate)
        if cell.kind == "rnn":
            delta, dwh = kb.rnn_backward(cell.wh.blocks, lc["H"], lc["Hbar"], dstate,
                                         act_code(cell.activation), threads)
            delta, dwh = np.asarray(delta), np.asarray(dwh)
            flat = delta.reshape(t_len * n, -1)
            grads[f"cells.{l}.wh"] = dwh
            grads[f"cells.{l}.wx"] = flat.T @ xin.reshape(t_len * n, d_in_l)
            grads[f"cells.{l}.b"] = flat.sum(axis=0)
            dstate = (flat @ cell.wx).reshape(t_len, n, d_in_l)
        elif cell.kind == "lstm":
            res = kb.lstm_backward(cell.wf.blocks, cell.wi.blocks, cell.wo.blocks,
                                   cell.wc.blocks, lc["H"], lc["C"], lc["F"], lc["I"],
                                   lc["O"], lc["G"], lc["TC"], dstate, threads)
            d_f, d_i, d_o, d_g, dwf, dwi, dwo, dwc = (np.asarray(a) for a in res)
            xin_flat = xin.reshape(t_len * n, d_in_l)
            dx = np.zeros((t_len * n, d_in_l))
            for gate, dgate, dwr, u in (
                ("f", d_f, dwf, cell.uf), ("i", d_i, dwi, cell.ui),
                ("o", d_o, dwo, cell.uo), ("c", d_g, dwc, cell.uc),
            ):
                flat = dgate.reshape(t_len * n, -1)
                grads[f"cells.{l}.wh_{gate}"] = dwr
                grads[f"cells.{l}.wx_{gate}"] = flat.T @ xin_flat
                grads[f"cells.{l}.b_{gate}"] = flat.sum(axis=0)
                dx += flat @ u
            dstate = dx.reshape(t_len, n, d_in_l)
        else:
            res = kb.gru_backward(cell.wz.blocks, cell.wr.blocks, cell.wn.blocks,
                                  lc["H"], lc["Z"], lc["R"], lc["NC"], lc["HR"],
                                  dstate, threads)
            d_z, d_r, d_n, dwz, dwr_, dwn = (np.asarray(a) for a in res)
            xin_flat = xin.reshape(t_len * n, d_in_l)
            dx = np.zeros((t_len * n, d_in_l))
            for gate, dgate, dwr, u in (
                ("z", d_z, dwz, cell.uz), ("r", d_r, dwr_, cell.ur), ("n", d_n, dwn, cell.un),
            ):
                flat = dgate.reshape(t_len * n, -1)
                grads[f"cells.{l}.wh_{gate}"] = dwr
                grads[f"cells.{l}.wx_{gate}"] = flat.T @ xin_flat
                grads[f"cells.{l}.b_{gate}"] = flat.sum(axis=0)
                dx += flat @ u
            dstate = dx.reshape(t_len, n, d_in_l)

    if model.input_proj_w is not None:
        flat = dstate.reshape(t_len * n, -1)
        grads["input_proj.w"] = flat.T @ cache.xt.reshape(t_len * n, -1)

    for name in model.frozen:
        if name in grads:
            grads[name] = np.zeros_like(grads[name])
    return grads


def additive_decompose(model: DeepModel, batch):
    """Per-block contributions to a linear aggregation.

    With a linear aggregator, the aggregated state is W s_t + b where s_t
    concatenates the K block states; splitting W by block columns gives
    contributions c_k(t) with sum_k c_k(t) + b equal to the aggregate.

    Returns (contribs, bias) with contribs of shape (K, N, T, d_agg).
    """
    if model.aggregator.variant != "linear":
        raise ValueError("additive decomposition requires a linear aggregator")
    _, cache = deep_forward(model, batch)
    s = cache.agg_in  # (T, N, d)
    w = model.aggregator.tensors["w"]
    ds = model.cells[-1].block_size
    k = model.cells[-1].num_blocks
    contribs = np.empty((k, s.shape[1], s.shape[0], w.shape[0]))
    for i in range(k):
        sl = slice(i * ds, (i + 1) * ds)
        contribs[i] = (s[:, :, sl] @ w[:, sl].T).transpose(1, 0, 2)
    return contribs, model.aggregator.tensors["b"].copy()


# ---------------------------------------------------------------------------
# Construction and initialization


def _zeros_cell(spec: ModelSpec, d_in_l: int):
    k, ds, d = spec.num_blocks, spec.block_size, spec.d
    z3 = lambda: np.zeros((k, ds, ds))
    z2 = lambda: np.zeros((d, d_in_l))
    z1 = lambda: np.zeros(d)
    if spec.cell == "rnn":
        return ParaRnnCell(z3(), z2(), z1(), activation=spec.activation)
    if spec.cell == "lstm":
        return ParaLstmCell(z3(), z3(), z3(), z3(), z2(), z2(), z2(), z2(),
                            z1(), z1(), z1(), z1())
    return ParaGruCell(z3(), z3(), z3(), z2(), z2(), z2(), z1(), z1(), z1())


def build_model(spec: ModelSpec) -> DeepModel:
    """All-zero model with the spec's shape (initialize before use)."""
    d = spec.d
    cells = []
    for l in range(spec.layers):
        d_in_l = d if (l > 0 or spec.input_proj) else spec.d_in
        cells.append(_zeros_cell(spec, d_in_l))
    da = spec.agg_out or d
    hidden = spec.agg_hidden or d
    if spec.aggregator == "identity":
        agg = Aggregator("identity")
        da = d
    elif spec.aggregator == "linear":
        agg = Aggregator("linear", {"w": np.zeros((da, d)), "b": np.zeros(da)})
    else:
        agg = Aggregator("ffn", {"w1": np.zeros((hidden, d)), "b1": np.zeros(hidden),
                                 "w2": np.zeros((da, hidden)), "b2": np.zeros(da)})
    head_w = head_b = None
    if spec.d_out is not None:
        head_w = np.zeros((spec.d_out, da))
        head_b = np.zeros(spec.d_out)
    proj = np.zeros((d, spec.d_in)) if spec.input_proj else None
    model = DeepModel(spec, cells, agg, head_w, head_b, proj)
    if not spec.bias:
        model.frozen = frozenset(
            name for name in model.params()
            if name.startswith("cells.") and name.rsplit(".", 1)[1].startswith("b")
        )
    return model


def init_params(spec: ModelSpec, scheme, rng: Rng) -> DeepModel:
    """Build and initialize a model.

    scheme: "uniform_scaled" (every weight ~ U(-1/sqrt(d), 1/sqrt(d))),
    "identity_recurrent" (recurrent blocks = I, other weights uniform), or a
    :class:`CanonicalBlocks` instance (recurrent matrix assembled from the
    given features, other weights uniform). Biases start at zero.
    """
    model = build_model(spec)
    d = spec.d
    lim = 1.0 / np.sqrt(d)

    def fill(tensor):
        tensor[...] = rng.uniform(-lim, lim, tensor.shape)

    recurrent = {}
    for l, cell in enumerate(model.cells):
        for name, tensor in sorted(cell.param_tensors().items()):
            full = f"cells.{l}.{name}"
            if name.startswith("wh"):
                recurrent[full] = tensor
            elif name.startswith("wx"):
                fill(tensor)
            # biases stay zero

    if scheme == "uniform_scaled":
        for tensor in recurrent.values():
            fill(tensor)
    elif scheme == "identity_recurrent":
        for tensor in recurrent.values():
            tensor[...] = np.eye(spec.block_size)
    elif isinstance(scheme, CanonicalBlocks):
        built = scheme.build(spec.d, spec.block_size)
        for tensor in recurrent.values():
            tensor[...] = built.blocks
    else:
        raise ValueError(f"unknown initialization scheme {scheme!r}")

    for tensor in model.aggregator.tensors.values():
        if tensor.ndim == 2:
            fill(tensor)
    if model.head_w is not None:
        fill(model.head_w)
    if model.input_proj_w is not None:
        fill(model.input_proj_w)
    return model


# ---------------------------------------------------------------------------
# Checkpoint I/O (text, bit-exact round trip)

_MAGIC = "blockrnn-model 1"


def save_checkpoint(model: DeepModel, path) -> None:
    params = model.params()
    with open(path, "w") as fh:
        fh.write(_MAGIC + "\n")
        fh.write("spec " + json.dumps(model.spec.to_json(), sort_keys=True) + "\n")
        fh.write("frozen " + json.dumps(sorted(model.frozen)) + "\n")
        for name in sorted(params):
            tensor = params[name]
            dims = " ".join(str(s) for s in tensor.shape)
            fh.write(f"tensor {name} {dims}\n")
            flat = tensor.reshape(-1, tensor.shape[-1]) if tensor.ndim > 1 else tensor.reshape(1, -1)
            for row in flat:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_checkpoint(path) -> DeepModel:
    with open(path) as fh:
        if fh.readline().rstrip("\n") != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        line = fh.readline().rstrip("\n")
        if not line.startswith("spec "):
            raise ValueError(f"{path}: missing spec line")
        spec = ModelSpec.from_json(json.loads(line[5:]))
        line = fh.readline().rstrip("\n")
        if not line.startswith("frozen "):
            raise ValueError(f"{path}: missing frozen line")
        frozen = frozenset(json.loads(line[7:]))
        model = build_model(spec)
        model.frozen = frozen
        params = model.params()
        seen = set()
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] != "tensor":
                raise ValueError(f"{path}: unexpected line {line!r}")
            name = parts[1]
            shape = tuple(int(x) for x in parts[2:])
            if name not in params:
                raise ValueError(f"{path}: unknown tensor {name}")
            tensor = params[name]
            if tensor.shape != shape:
                raise ValueError(f"{path}: tensor {name} shape {shape} != expected {tensor.shape}")
            rows = tensor.size // shape[-1] if len(shape) > 1 else 1
            cols = shape[-1] if len(shape) > 1 else tensor.size
            buf = np.empty((rows, cols))
            for i in range(rows):
                vals = fh.readline().split()
                if len(vals) != cols:
                    raise ValueError(f"{path}: tensor {name} row {i} malformed")
                buf[i] = [float(v) for v in vals]
            tensor[...] = buf.reshape(tensor.shape)
            seen.add(name)
        missing = set(params) - seen
        if missing:
            raise ValueError(f"{path}: missing tensors {sorted(missing)}")
    return model
