"""Dense float64 tensors on a recording tape, with reverse-mode differentiation.

Operations record onto the innermost active ``Tape`` (``with Tape(): ...``)
whenever an input requires gradients; outside a tape they only compute values,
which keeps evaluation passes cheap. Everything is double precision and
single-threaded; a tape and the tensors it produced must not be shared
mutably across threads.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "Rng", "ShapeError",
    "constant", "parameter", "zeros",
    "matmul", "matmul_nt", "linear", "elementwise", "add", "sub", "mul",
    "concat", "activation", "sigmoid", "tanh", "softmax", "masked_softmax",
    "dropout", "exp", "log", "absolute", "neg", "scale",
    "scalar_mul", "scalar_add", "sum_all",
    "take_rows", "slice_rows", "slice_cols", "pick_cols", "mask_rows",
    "backward", "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tensor:
    """A dense float64 array with a gradient buffer of the same shape.

    Leaf tensors (parameters, constants) have ``tape_id is None``; tensors
    produced by a recorded operation remember the tape and their node index.
    The gradient buffer reads as all-zero until something accumulates into it.
    """

    __slots__ = ("values", "_grad", "requires_grad", "tape", "tape_id")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self._grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = g.copy()
        else:
            self._grad += g

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


class _Node:
    __slots__ = ("name", "inputs", "out", "backward")

    def __init__(self, name: str, inputs: tuple[Tensor, ...], out: Tensor,
                 backward: Callable[[np.ndarray], tuple]):
        self.name = name
        self.inputs = inputs
        self.out = out
        self.backward = backward


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of operations; inputs of a node always precede it."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def first_nonfinite_node(self) -> _Node | None:
        for node in self.nodes:
            if not np.all(np.isfinite(node.out.values)):
                return node
        return None

    def backward_from(self, loss: Tensor) -> None:
        nodes = self.nodes
        adjoint: list[np.ndarray | None] = [None] * (loss.tape_id + 1)
        adjoint[loss.tape_id] = np.ones_like(loss.values)
        for idx in range(loss.tape_id, -1, -1):
            g = adjoint[idx]
            adjoint[idx] = None
            if g is None:
                continue
            node = nodes[idx]
            node.out.accumulate_grad(g)
            for inp, gin in zip(node.inputs, node.backward(g)):
                if gin is None or not inp.requires_grad:
                    continue
                if inp.tape_id is None:
                    inp.accumulate_grad(gin)
                else:
                    prev = adjoint[inp.tape_id]
                    adjoint[inp.tape_id] = gin if prev is None else prev + gin


def _record(name: str, out_values: np.ndarray, inputs: tuple[Tensor, ...],
            backward: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor(out_values)
    if _TAPE_STACK and any(i.requires_grad for i in inputs):
        tape = _TAPE_STACK[-1]
        out.requires_grad = True
        out.tape = tape
        out.tape_id = len(tape.nodes)
        tape.nodes.append(_Node(name, inputs, out, backward))
    return out


class Rng:
    """Seeded pseudo-random source; identical seeds give identical sequences.

    ``split`` derives independent child streams without disturbing the parent,
    so e.g. data shuffling and per-step draws can consume separate streams.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed) if _seq is None else _seq
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self, n: int) -> list["Rng"]:
        return [Rng(self.seed, _seq=s) for s in self._seq.spawn(n)]

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        out = self._gen.integers(low, high, size=size)
        return int(out) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul needs [m,k] x [k,n], got {av.shape} x {bv.shape}")

    def bk(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return _record("matmul", av @ bv, (a, b), bk)


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T without materializing a transpose node."""
    av, bv = a.values, b.values
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[1]:
        raise ShapeError(f"matmul_nt needs [m,k] x [n,k], got {av.shape} x {bv.shape}")

    def bk(g):
        return (g @ bv if a.requires_grad else None,
                g.T @ av if b.requires_grad else None)

    return _record("matmul_nt", av @ bv.T, (a, b), bk)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w.T (+ b), with w shaped [out, in] and b shaped [out]."""
    xv, wv = x.values, w.values
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[1]:
        raise ShapeError(f"linear needs x [n,in] and w [out,in], got {xv.shape} and {wv.shape}")
    out = xv @ wv.T
    if b is None:
        def bk(g):
            return (g @ wv if x.requires_grad else None,
                    g.T @ xv if w.requires_grad else None)

        return _record("linear", out, (x, w), bk)

    bv = b.values
    if bv.shape != (wv.shape[0],):
        raise ShapeError(f"linear bias must have shape [{wv.shape[0]}], got {bv.shape}")

    def bk(g):
        return (g @ wv if x.requires_grad else None,
                g.T @ xv if w.requires_grad else None,
                g.sum(axis=0) if b.requires_grad else None)

    return _record("linear", out + bv, (x, w, b), bk)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        raise ShapeError(f"elementwise {kind} needs equal shapes, got {av.shape} and {bv.shape}")
    if kind == "add":
        out = av + bv

        def bk(g):
            return g, g
    elif kind == "sub":
        out = av - bv

        def bk(g):
            return g, -g
    elif kind == "mul":
        out = av * bv

        def bk(g):
            return (g * bv if a.requires_grad else None,
                    g * av if b.requires_grad else None)
    else:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return _record(kind, out, (a, b), bk)


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ShapeError("concat needs at least one part")
    vals = [p.values for p in parts]
    ndim = vals[0].ndim
    for v in vals[1:]:
        if v.ndim != ndim or any(v.shape[d] != vals[0].shape[d] for d in range(ndim) if d != axis):
            raise ShapeError(f"concat axis {axis}: inconsistent shapes {[v.shape for v in vals]}")
    out = np.concatenate(vals, axis=axis)
    offsets = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def bk(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _record("concat", out, tuple(parts), bk)


def activation(x: Tensor, kind: str) -> Tensor:
    xv = x.values
    if kind == "sigmoid":
        out = 1.0 / (1.0 + np.exp(-xv))

        def bk(g, s=out):
            return (g * s * (1.0 - s),)
    elif kind == "tanh":
        out = np.tanh(xv)

        def bk(g, t=out):
            return (g * (1.0 - t * t),)
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return _record(kind, out, (x,), bk)


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def softmax(x: Tensor, axis: int) -> Tensor:
    xv = x.values
    shifted = xv - xv.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bk(g, y=out):
        return ((g - (g * y).sum(axis=axis, keepdims=True)) * y,)

    return _record("softmax", out, (x,), bk)


def masked_softmax(x: Tensor, key_mask: np.ndarray) -> Tensor:
    """Row softmax over the columns where key_mask is True; masked entries are 0.

    key_mask is a boolean vector over columns, shared by all rows. At least
    one column must be unmasked.
    """
    xv = x.values
    key_mask = np.asarray(key_mask, dtype=bool)
    if xv.ndim != 2 or key_mask.shape != (xv.shape[1],):
        raise ShapeError(f"masked_softmax needs x [n,m] and mask [m], got {xv.shape} and {key_mask.shape}")
    if not key_mask.any():
        raise ShapeError("masked_softmax: all keys are masked")
    s = np.where(key_mask[None, :], xv, -np.inf)
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.where(key_mask[None, :], np.exp(shifted), 0.0)
    out = e / e.sum(axis=1, keepdims=True)

    def bk(g, y=out):
        return ((g - (g * y).sum(axis=1, keepdims=True)) * y,)

    return _record("masked_softmax", out, (x,), bk)


def dropout(x: Tensor, rate: float, rng: Rng | None, training: bool) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.values.shape) >= rate) / (1.0 - rate)

    def bk(g):
        return (g * keep,)

    return _record("dropout", x.values * keep, (x,), bk)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.values)

    def bk(g, e=out):
        return (g * e,)

    return _record("exp", out, (x,), bk)


def log(x: Tensor) -> Tensor:
    xv = x.values

    def bk(g):
        return (g / xv,)

    return _record("log", np.log(xv), (x,), bk)


def absolute(x: Tensor) -> Tensor:
    xv = x.values

    def bk(g):
        return (g * np.sign(xv),)

    return _record("abs", np.abs(xv), (x,), bk)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a plain (non-differentiated) scalar constant."""

    def bk(g):
        return (g * c,)

    return _record("scale", x.values * c, (x,), bk)


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def _as_scalar(t: Tensor, op: str) -> np.ndarray:
    if t.values.size != 1:
        raise ShapeError(f"{op} needs a single-element scalar tensor, got shape {t.shape}")
    return t.values.reshape(())


def scalar_mul(x: Tensor, s: Tensor) -> Tensor:
    sv = _as_scalar(s, "scalar_mul")
    xv = x.values

    def bk(g):
        return (g * sv if x.requires_grad else None,
                np.array([(g * xv).sum()]) if s.requires_grad else None)

    return _record("scalar_mul", xv * sv, (x, s), bk)


def scalar_add(x: Tensor, s: Tensor) -> Tensor:
    sv = _as_scalar(s, "scalar_add")

    def bk(g):
        return (g, np.array([g.sum()]) if s.requires_grad else None)

    return _record("scalar_add", x.values + sv, (x, s), bk)


def sum_all(x: Tensor) -> Tensor:
    shape = x.values.shape

    def bk(g):
        return (np.full(shape, g.reshape(-1)[0]),)

    return _record("sum_all", np.array([x.values.sum()]), (x,), bk)


def take_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows by index; gradients scatter-add back to the source rows."""
    indices = np.asarray(indices, dtype=np.intp)
    xv = x.values
    if indices.size and (indices.min() < 0 or indices.max() >= xv.shape[0]):
        raise IndexError(f"row index out of range for {xv.shape[0]} rows: "
                         f"[{indices.min()}, {indices.max()}]")

    def bk(g):
        dx = np.zeros_like(xv)
        np.add.at(dx, indices, g)
        return (dx,)

    return _record("take_rows", xv[indices], (x,), bk)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    xv = x.values

    def bk(g):
        dx = np.zeros_like(xv)
        dx[start:stop] = g
        return (dx,)

    return _record("slice_rows", xv[start:stop].copy(), (x,), bk)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    xv = x.values

    def bk(g):
        dx = np.zeros_like(xv)
        dx[:, start:stop] = g
        return (dx,)

    return _record("slice_cols", xv[:, start:stop].copy(), (x,), bk)


def pick_cols(x: Tensor, ids: np.ndarray) -> Tensor:
    """Select one entry per row, returning a column [n, 1]."""
    ids = np.asarray(ids, dtype=np.intp)
    xv = x.values
    rows = np.arange(xv.shape[0])
    if ids.shape != (xv.shape[0],):
        raise ShapeError(f"pick_cols needs one id per row, got {ids.shape} for {xv.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= xv.shape[1]):
        raise IndexError(f"column id out of range for {xv.shape[1]} columns")

    def bk(g):
        dx = np.zeros_like(xv)
        dx[rows, ids] = g[:, 0]
        return (dx,)

    return _record("pick_cols", xv[rows, ids][:, None], (x,), bk)


def mask_rows(x: Tensor, col: np.ndarray) -> Tensor:
    """Scale each row by a fixed 0/1 (or float) coefficient column [n, 1]."""
    col = np.asarray(col, dtype=np.float64).reshape(-1, 1)
    if col.shape[0] != x.values.shape[0]:
        raise ShapeError(f"mask_rows needs one coefficient per row, got {col.shape[0]} for {x.shape}")

    def bk(g):
        return (g * col,)

    return _record("mask_rows", x.values * col, (x,), bk)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into every reachable tensor's grad buffer."""
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape is None:
        raise ValueError("loss is not attached to a tape (nothing was recorded)")
    loss.tape.backward_from(loss)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               epsilon: float = 1e-5) -> float:
    """Worst relative error between tape gradients of f() and central differences.

    f must be deterministic and re-runnable; it is evaluated twice per
    coordinate of every parameter. The relative-error denominator floors at
    1e-8 so exact zeros compare cleanly.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    for p in params:
        p.zero_grad()
    with Tape():
        out = f()
        backward(out)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.values.reshape(-1)
        aflat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = f().item()
            flat[i] = orig - epsilon
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
            if err > worst:
                worst = err
    return worst
