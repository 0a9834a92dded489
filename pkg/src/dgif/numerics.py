"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the model needs are provided. Broadcasting is limited to
equal shapes and scalar-vs-tensor; the two row-wise cases the model needs
(bias addition and per-row scaling) have their own operations.

Recording happens only while a :class:`Tape` is active::

    with Tape() as tape:
        loss = (x * x).sum()
        tape.backward(loss)
    x.grad
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import lapack
from scipy.special import expit

from .errors import ContractError, DimensionError, SingularMatrixError, TapeError

DEFAULT_SLOPE = 0.01
DEFAULT_RIDGE = 1e-6

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Float64 array plus a lazily allocated gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            g = g.reshape(self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    op: str
    out: Tensor
    inputs: tuple
    backward: Callable


class Tape:
    """Ordered record of executed operations; replayed in reverse by ``backward``."""

    def __init__(self):
        self.records: list[_Record] = []
        self.trace: list[int] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, out: Tensor, inputs: tuple, backward: Callable) -> None:
        if self._consumed:
            raise TapeError("tape already consumed by backward(); start a new tape")
        self.records.append(_Record(op, out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise TapeError("backward() already ran on this tape")
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss._accumulate(np.ones_like(loss.data))
        for k in range(len(self.records) - 1, -1, -1):
            rec = self.records[k]
            self.trace.append(k)
            g = rec.out.grad
            if g is None:
                continue
            grads = rec.backward(g)
            for t, gi in zip(rec.inputs, grads):
                if gi is not None and t.requires_grad:
                    t._accumulate(gi)


def _make(op: str, data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=req)
    if req:
        tape = active_tape()
        if tape is not None:
            tape.record(op, out, inputs, backward)
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1 and all(s == 1 for s in t.shape)


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and not _is_scalar(a) and not _is_scalar(b):
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum()).reshape(t.shape)


# elementwise binary


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "add")
    return _make("add", a.data + b.data, (a, b), lambda g: (_reduce_to(g, a), _reduce_to(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "sub")
    return _make("sub", a.data - b.data, (a, b), lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_check(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(
        "mul",
        ad * bd,
        (a, b),
        lambda g: (_reduce_to(g * bd, a) if a.requires_grad else None,
                   _reduce_to(g * ad, b) if b.requires_grad else None),
    )


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x[..., j] + b[j]``."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: shapes {x.shape} and {b.shape}")
    n = b.shape[0]
    return _make("add_bias", x.data + b.data, (x, b), lambda g: (g, g.reshape(-1, n).sum(axis=0)))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """``x[i, :] * s[i]``."""
    if x.ndim != 2 or s.shape != (x.shape[0],):
        raise DimensionError(f"scale_rows: shapes {x.shape} and {s.shape}")
    xd, sd = x.data, s.data[:, None]
    return _make(
        "scale_rows",
        xd * sd,
        (x, s),
        lambda g: (g * sd, (g * xd).sum(axis=1)),
    )


# elementwise unary


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    return _make("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def leaky_relu(x: Tensor, slope: float = DEFAULT_SLOPE) -> Tensor:
    d = np.where(x.data > 0, 1.0, slope)
    return _make("leaky_relu", x.data * d, (x,), lambda g: (g * d,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make("exp", y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _make("log", np.log(xd), (x,), lambda g: (g / xd,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return _make("sqrt", y, (x,), lambda g: (g * 0.5 / y,))


def reciprocal(x: Tensor) -> Tensor:
    y = 1.0 / x.data
    return _make("reciprocal", y, (x,), lambda g: (-g * y * y,))


def softplus(x: Tensor) -> Tensor:
    """``log(1 + exp(x))`` computed without overflow."""
    xd = x.data
    return _make("softplus", np.logaddexp(0.0, xd), (x,), lambda g: (g * expit(xd),))


def elementwise(op: str, *args, slope: float = DEFAULT_SLOPE) -> Tensor:
    """Dispatch by name: sigmoid, tanh, leaky_relu, add, mul, sub."""
    unary = {"sigmoid": sigmoid, "tanh": tanh}
    binary = {"add": add, "mul": mul, "sub": sub}
    if op in unary:
        return unary[op](*args)
    if op == "leaky_relu":
        return leaky_relu(*args, slope=slope)
    if op in binary:
        return binary[op](*args)
    raise ContractError(f"unknown elementwise op {op!r}")


# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D product, or a batched product over identical leading extents."""
    a, b = as_tensor(a), as_tensor(b)
    if (
        a.ndim < 2
        or a.ndim != b.ndim
        or a.shape[-1] != b.shape[-2]
        or a.shape[:-2] != b.shape[:-2]
    ):
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _make("matmul", ad @ bd, (a, b), backward)


def solve_spd(G: Tensor, b: Tensor, ridge: float = DEFAULT_RIDGE) -> Tensor:
    """Solve ``(G + ridge*I) w = b`` through a Cholesky factorization.

    ``b`` may be a vector or an ``N x k`` matrix of right-hand sides. The
    forward pass reads the symmetric part of ``G``, so the gradient with
    respect to ``G`` is the symmetrized adjoint ``-(A^-1 g) w^T``.
    """
    G, b = as_tensor(G), as_tensor(b)
    if ridge < 0:
        raise ContractError(f"ridge must be >= 0, got {ridge}")
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionError(f"solve_spd: G must be square, got {G.shape}")
    n = G.shape[0]
    if b.ndim not in (1, 2) or b.shape[0] != n:
        raise DimensionError(f"solve_spd: G {G.shape} incompatible with b {b.shape}")
    Gd = G.data
    asym = np.max(np.abs(Gd - Gd.T)) if n > 1 else 0.0
    if asym > 1e-9 * max(1.0, float(np.max(np.abs(Gd)))):
        raise ContractError(f"solve_spd: G not symmetric (max asymmetry {asym:.3e})")
    A = 0.5 * (Gd + Gd.T)
    if ridge:
        A = A + ridge * np.eye(n)
    chol, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise SingularMatrixError(info - 1)
    if info < 0:
        raise ContractError(f"dpotrf rejected argument {-info}")
    rhs = b.data.reshape(n, -1)
    w, _ = lapack.dpotrs(chol, rhs, lower=1)
    w_out = w.reshape(b.shape)

    def backward(g):
        gb, _ = lapack.dpotrs(chol, g.reshape(n, -1), lower=1)
        gG = -(gb @ w.T)
        gG = 0.5 * (gG + gG.T)
        return gG, gb.reshape(b.shape)

    return _make("solve_spd", w_out, (G, b), backward)


# reductions and normalizations


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-subtracted softmax; entries where ``mask`` is False get probability 0."""
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    z = x.data
    if mask is not None:
        if mask.shape != z.shape:
            raise DimensionError(f"softmax: mask {mask.shape} vs input {z.shape}")
        z = np.where(mask, z, -np.inf)
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    y = e / np.sum(e, axis=axis, keepdims=True)
    return _make(
        "softmax", y, (x,), lambda g: (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)
    )


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data
    shifted = z - np.max(z, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    y = shifted - lse
    return _make(
        "log_softmax",
        y,
        (x,),
        lambda g: (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),),
    )


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make("sum", np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(tsum(x, axis, keepdims), 1.0 / count)


# shape manipulation


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _make("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x: Tensor, idx) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate gradient."""
    if isinstance(idx, list):
        idx = np.asarray(idx, dtype=np.intp)
    shape = x.shape
    basic = isinstance(idx, (int, np.integer, slice)) or (
        isinstance(idx, tuple) and all(isinstance(i, (int, np.integer, slice)) for i in idx)
    )

    def backward(g):
        gx = np.zeros(shape)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _make("getitem", np.array(x.data[idx], copy=True), (x,), backward)


def take_rows(x: Tensor, rows: Sequence[int]) -> Tensor:
    return getitem(x, np.asarray(rows, dtype=np.intp))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _make(
        "concat",
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    return concat([reshape(v, (1, -1)) for v in vectors], axis=0)


# gradient checking


@dataclass
class GradCheckReport:
    tol: float
    eps: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self) -> str:
        lines = [f"{'PASS' if self.passed else 'FAIL'} (tol={self.tol:g}, eps={self.eps:g})"]
        width = max((len(k) for k in self.errors), default=0)
        for name, err in self.errors.items():
            lines.append(f"  {name:<{width}}  {err:.3e}")
        return "\n".join(lines)


def _named(params) -> dict[str, Tensor]:
    if isinstance(params, Tensor):
        return {"x": params}
    if isinstance(params, Mapping):
        return dict(params)
    return {f"p{i}": p for i, p in enumerate(params)}


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Iterable[Tensor] | Tensor,
    eps: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of the scalar ``f()`` with central differences.

    Per coordinate the error is ``|a - n| / max(|a|, |n|, floor)``; the
    report keeps the maximum per parameter collection. Collections with
    ``requires_grad=False`` are frozen: not perturbed, reported as 0.
    ``max_coords`` caps the checked coordinates per collection (a fixed
    random subset drawn from ``seed``).
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    named = _named(params)
    for p in named.values():
        p.grad = None
    with Tape() as tape:
        out = f()
        if out.size != 1:
            raise ContractError(f"grad_check needs a scalar objective, got shape {out.shape}")
        tape.backward(out)
    analytic = {
        k: (p.grad.reshape(-1).copy() if p.grad is not None else np.zeros(p.size))
        for k, p in named.items()
    }
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol, eps=eps)
    for name, p in named.items():
        if not p.requires_grad:
            report.errors[name] = 0.0
            continue
        if not p.data.flags.c_contiguous or not p.data.flags.writeable:
            p.data = np.ascontiguousarray(p.data).copy()
        flat = p.data.reshape(-1)
        coords = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * eps)
            a = analytic[name][i]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
        report.errors[name] = worst
    return report
