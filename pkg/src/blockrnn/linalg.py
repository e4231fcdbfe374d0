"""Dense matrix helpers, the block-diagonal matrix type, and seeded RNG.

Everything downstream (eigen analysis, cells, training, benchmarks) builds on
the three things in this module: float64 row-major arrays as the matrix type,
``BlockDiagonalMatrix`` for recurrent weights, and ``Rng`` for reproducible
randomness with named substreams.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "mat_mul",
    "block_apply",
    "BlockDiagonalMatrix",
    "Rng",
    "save_matrix",
    "load_matrix",
    "as_matrix",
]


def as_matrix(a) -> np.ndarray:
    """Coerce to a float64 C-contiguous 2-d array, validating finiteness."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with explicit dimension checking.

    Parameters
    ----------
    a : (m, n) array
    b : (n, p) array or (n,) vector

    Returns
    -------
    (m, p) array, or (m,) vector when ``b`` is a vector.

    Raises
    ------
    ValueError
        If inner dimensions disagree.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ValueError("mat_mul expects a matrix and a matrix or vector")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ {b.shape}"
        )
    return a @ b


class BlockDiagonalMatrix:
    """Square block-diagonal matrix: K dense blocks of size d_s on the diagonal.

    The blocks are stored as one ``(K, d_s, d_s)`` float64 array. Total
    dimension is ``d = K * d_s``. Instances are treated as immutable; mutate
    only through ``.blocks`` when you own the matrix (training does).
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        arr = np.ascontiguousarray(blocks, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError(
                "blocks must be a (K, d_s, d_s) array or a list of square "
                f"matrices of equal size, got shape {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("need at least one block of size >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("blocks contain non-finite entries")
        self.blocks = arr

    @property
    def num_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    @property
    def dim(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    def dense(self) -> np.ndarray:
        """Materialize the full d x d matrix (zeros off the diagonal blocks)."""
        k, ds, _ = self.blocks.shape
        out = np.zeros((k * ds, k * ds))
        for i in range(k):
            out[i * ds : (i + 1) * ds, i * ds : (i + 1) * ds] = self.blocks[i]
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply to a vector ``(d,)`` or a batch ``(N, d)``, block by block.

        Segment k of the output is ``blocks[k] @ segment k of v``; segments
        never interact.
        """
        v = np.asarray(v, dtype=np.float64)
        k, ds, _ = self.blocks.shape
        d = k * ds
        if v.shape[-1] != d:
            raise ValueError(f"length mismatch: matrix dim {d}, vector {v.shape[-1]}")
        single = v.ndim == 1
        vb = v.reshape(-1, k, ds)
        out = np.einsum("kij,nkj->nki", self.blocks, vb).reshape(-1, d)
        return out[0] if single else out

    @classmethod
    def from_dense(cls, m, block_size: int, tol: float = 0.0) -> "BlockDiagonalMatrix":
        """Cut a dense square matrix into diagonal blocks of ``block_size``.

        Off-block entries must be zero (within ``tol * max|m|``); anything
        larger is an error, since silently dropping mass would misrepresent
        the operator.
        """
        m = as_matrix(m)
        d = m.shape[0]
        if m.shape[0] != m.shape[1]:
            raise ValueError("from_dense needs a square matrix")
        if block_size < 1 or d % block_size != 0:
            raise ValueError(f"dim {d} not divisible by block_size {block_size}")
        k = d // block_size
        blocks = np.empty((k, block_size, block_size))
        mask = np.ones((d, d), dtype=bool)
        for i in range(k):
            sl = slice(i * block_size, (i + 1) * block_size)
            blocks[i] = m[sl, sl]
            mask[sl, sl] = False
        limit = tol * max(np.max(np.abs(m)), 1e-300)
        worst = np.max(np.abs(m[mask])) if d > block_size else 0.0
        if worst > limit:
            raise ValueError(
                f"off-block entry of magnitude {worst:g} exceeds tolerance; "
                "matrix is not block-diagonal at this block size"
            )
        return cls(blocks)

    def __repr__(self) -> str:
        return (
            f"BlockDiagonalMatrix(K={self.num_blocks}, "
            f"d_s={self.block_size}, d={self.dim})"
        )


def block_apply(w: BlockDiagonalMatrix, v: np.ndarray) -> np.ndarray:
    """Free-function form of :meth:`BlockDiagonalMatrix.apply`."""
    return w.apply(v)


def _key_part(k) -> int:
    """Normalize one substream key part to a stable non-negative int.

    Strings hash through blake2s so names like "weights" stay readable at
    call sites while remaining reproducible across runs and platforms
    (Python's built-in hash() is salted and would not be).
    """
    if isinstance(k, str):
        return int.from_bytes(hashlib.blake2s(k.encode(), digest_size=8).digest(), "little")
    k = int(k)
    if k < 0:
        raise ValueError("integer key parts must be >= 0")
    return k


class Rng:
    """Deterministic random generator with named substreams.

    Wraps the Philox 4x64-10 counter-based generator. The state is fully
    determined by ``(seed, key path)``: equal seeds give bit-identical draw
    sequences across runs and platforms, and ``substream("name", i, ...)``
    derives an independent generator keyed by the path, so parallel or
    out-of-order consumers cannot perturb each other's draws.
    """

    __slots__ = ("seed", "key", "_gen")

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed)
        self.key = tuple(_key_part(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, *key) -> "Rng":
        """A fresh generator for (seed, existing key + key); order-independent."""
        return Rng(self.seed, self.key + tuple(_key_part(k) for k in key))

    def gaussian(self, mean: float, std: float, size=None) -> np.ndarray:
        if std < 0:
            raise ValueError("std must be >= 0")
        return self._gen.normal(mean, std, size)

    def uniform(self, lo: float, hi: float, size=None) -> np.ndarray:
        if lo > hi:
            raise ValueError("need lo <= hi")
        return self._gen.uniform(lo, hi, size)

    def integers(self, lo: int, hi: int, size=None):
        """Integers in [lo, hi) like range()."""
        return self._gen.integers(lo, hi, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"


def save_matrix(path, m) -> None:
    """Write a matrix as text: header line ``rows cols``, then one line per row.

    Entries are printed with ``repr``, which is the shortest string that
    round-trips the exact float64 value, so load(save(m)) == m bitwise.
    """
    m = as_matrix(m)
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header, expected 'rows cols'")
        rows, cols = int(header[0]), int(header[1])
        data = np.empty((rows, cols))
        for i in range(rows):
            parts = fh.readline().split()
            if len(parts) != cols:
                raise ValueError(f"{path}: row {i} has {len(parts)} entries, want {cols}")
            data[i] = [float(p) for p in parts]
    return data
