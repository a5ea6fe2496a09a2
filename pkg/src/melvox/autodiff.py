"""Reverse-mode differentiation over dense numpy tensors.

The engine is deliberately small: eager graph construction, one closure per
operation holding its backward rule, and an iterative topological walk in
`backward`. It covers exactly the signal ops the vocoder stack needs
(1-D/2-D convolutions, pooling, framing + real DFT, pointwise
nonlinearities, reductions) with no general broadcasting beyond per-channel
scalars. f32 is the training precision; building the same graph from f64
arrays gives the high-precision mode the gradient oracles use.

Gradient contract: only leaf tensors (no producing op) receive `.grad`, and
repeated backward passes accumulate into it. Cotangents of interior nodes
live in a per-pass table and are freed as the walk retires them, so a second
`backward` over the same graph cannot double-count.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_float_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(np.float64)


class Tensor:
    """Dense float array plus an optional position in a backward graph.

    A backward closure takes (out, cotangent) and returns one gradient array
    per parent, or None for parents that do not require grad.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_float_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Constant view of the same storage, outside any graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    # arithmetic sugar used throughout the model code
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor/tensor division is not part of the op set")
        return mul(self, 1.0 / float(other))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op output; attach the closure only while grad is enabled."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Populate `.grad` of every reachable leaf that requires grad.

    Iterative traversal: these graphs routinely exceed the interpreter
    recursion limit.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward on a tensor that does not require grad")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    table: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = table.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node._accumulate(g)
            continue
        contribs = node._backward(node, g)
        for p, c in zip(node._parents, contribs):
            if c is None or not p.requires_grad:
                continue
            if p._backward is None:
                p._accumulate(c)
                continue
            key = id(p)
            prev = table.get(key)
            # never in-place: contributions may alias each other or inputs
            table[key] = c if prev is None else prev + c


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# pointwise ops


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = np.asarray(float(b), dtype=a.dtype)
        return _make(a.data + s, (a,), lambda out, g: (g,))
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda out, g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda out, g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = np.asarray(float(b), dtype=a.dtype)
        return _make(a.data * s, (a,), lambda out, g: (g * s,))
    _same_shape(a, b, "mul")

    def back(out, g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), back)


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda out, g: (g * (2.0 * a.data),))


def sqrt(a: Tensor) -> Tensor:
    return _make(np.sqrt(a.data), (a,), lambda out, g: (g / (2.0 * out.data),))


def exp(a: Tensor) -> Tensor:
    return _make(np.exp(a.data), (a,), lambda out, g: (g * out.data,))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda out, g: (g / a.data,))


def absolute(a: Tensor) -> Tensor:
    # subgradient at 0 is 0: sign(0) == 0
    return _make(np.abs(a.data), (a,), lambda out, g: (g * np.sign(a.data),))


def tanh(a: Tensor) -> Tensor:
    return _make(np.tanh(a.data), (a,), lambda out, g: (g * (1.0 - out.data * out.data),))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    factor = np.where(a.data > 0, a.dtype.type(1.0), a.dtype.type(slope))
    return _make(a.data * factor, (a,), lambda out, g: (g * factor,))


def maximum_const(a: Tensor, floor: float) -> Tensor:
    # grad passes only where a > floor; 0 at ties keeps runs deterministic
    mask = a.data > floor
    y = np.maximum(a.data, np.asarray(floor, dtype=a.dtype))
    return _make(y, (a,), lambda out, g: (g * mask,))


def snake(x: Tensor, alpha: Tensor) -> Tensor:
    """Periodic-bias activation x + sin^2(alpha*x)/alpha with per-channel alpha.

    `alpha` holds one positive entry per channel (axis 0 of `x`); callers
    keep it positive by parameterizing in the log domain.
    """
    if alpha.data.ndim != 1 or alpha.shape[0] != x.shape[0]:
        raise ShapeError(
            f"snake: alpha shape {alpha.shape} does not match {x.shape[0]} channels (axis 0)"
        )
    al = alpha.data.reshape((-1,) + (1,) * (x.data.ndim - 1))
    ax = al * x.data
    sin_ax = np.sin(ax)
    y = x.data + sin_ax * sin_ax / al

    def back(out, g):
        gx = g * (1.0 + np.sin(2.0 * ax)) if x.requires_grad else None
        ga = None
        if alpha.requires_grad:
            dalpha = g * (x.data * np.sin(2.0 * ax) / al - sin_ax * sin_ax / (al * al))
            ga = dalpha.sum(axis=tuple(range(1, x.data.ndim)))
        return gx, ga

    return _make(y, (x, alpha), back)


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda out, g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda out, g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(out, g):
        contribs = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                contribs.append(g[tuple(idx)])
            else:
                contribs.append(None)
        return contribs

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(
            f"narrow: [{start}:{start + length}] out of range for axis {axis} of extent {a.shape[axis]}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def back(out, g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(a.data[idx].copy(), (a,), back)


def pad1d(a: Tensor, left: int, right: int) -> Tensor:
    """Zero padding on the last axis."""
    if left < 0 or right < 0:
        raise ContractError("pad1d: negative padding")
    width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    t = a.shape[-1]
    return _make(np.pad(a.data, width), (a,), lambda out, g: (g[..., left : left + t],))


def reflect_pad1d(a: Tensor, left: int, right: int) -> Tensor:
    """Reflect padding (edge sample not repeated) on the last axis."""
    t = a.shape[-1]
    if left >= t or right >= t:
        raise ContractError(f"reflect_pad1d: pad ({left},{right}) too large for length {t}")
    width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]

    def back(out, g):
        gx = g[..., left : left + t].copy()
        if left:
            gx[..., 1 : left + 1] += g[..., :left][..., ::-1]
        if right:
            gx[..., t - right - 1 : t - 1] += g[..., left + t :][..., ::-1]
        return (gx,)

    return _make(np.pad(a.data, width, mode="reflect"), (a,), back)


def zero_stuff2(a: Tensor) -> Tensor:
    """[..., T] -> [..., 2T] with zeros in the odd slots."""
    y = np.zeros(a.shape[:-1] + (2 * a.shape[-1],), dtype=a.dtype)
    y[..., ::2] = a.data
    return _make(y, (a,), lambda out, g: (g[..., ::2],))


def decimate2(a: Tensor) -> Tensor:
    """[..., T] -> [..., T/2], keeping even indices. T must be even."""
    if a.shape[-1] % 2:
        raise ContractError(f"decimate2: length {a.shape[-1]} is odd")

    def back(out, g):
        full = np.zeros_like(a.data)
        full[..., ::2] = g
        return (full,)

    return _make(a.data[..., ::2].copy(), (a,), back)


# ---------------------------------------------------------------------------
# reductions


def straight_through(x: Tensor, value) -> Tensor:
    """Carry `value` forward while routing the cotangent into x unchanged.

    The standard estimator for non-differentiable replacements (e.g. vector
    quantization): the output holds the replacement values bit-exactly, and
    backward treats the node as the identity on x.
    """
    v = np.asarray(value, dtype=x.dtype)
    if v.shape != x.shape:
        raise ShapeError(f"straight_through: value shape {v.shape} != input shape {x.shape}")
    return _make(v.copy(), (x,), lambda out, g: (g,))


def tsum(a: Tensor) -> Tensor:
    return _make(
        np.asarray(a.data.sum(), dtype=a.dtype),
        (a,),
        lambda out, g: (np.full_like(a.data, g.reshape(())),),
    )


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(
        np.asarray(a.data.mean(), dtype=a.dtype),
        (a,),
        lambda out, g: (np.full_like(a.data, g.reshape(()) / n),),
    )


# ---------------------------------------------------------------------------
# linear / convolution ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dims differ, {a.shape[1]} (a axis 1) vs {b.shape[0]} (b axis 0)"
        )

    def back(out, g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), back)


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation of [C_in, T] with [C_out, C_in, K] -> [C_out, T'].

    T' = floor((T + 2*padding - dilation*(K-1) - 1)/stride) + 1. Padding is
    zeros; callers wanting reflect geometry pad explicitly first. The kernel
    is applied one tap at a time as a [C_out, C_in] GEMM over a strided
    input slice, which keeps peak memory at one copy of the padded input.
    """
    if x.data.ndim != 2 or weight.data.ndim != 3:
        raise ShapeError(f"conv1d: expected [C,T] input and [Co,Ci,K] weight, got {x.shape}, {weight.shape}")
    c_out, c_in, k = weight.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"conv1d: input channels {x.shape[0]} != weight C_in {c_in} (axis 0 of input)")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} != ({c_out},)")
    if k < 1 or stride < 1 or dilation < 1:
        raise ContractError("conv1d: kernel, stride and dilation must be >= 1")
    t = x.shape[1]
    span = dilation * (k - 1) + 1
    if t + 2 * padding < span:
        raise ContractError(f"conv1d: receptive span {span} exceeds padded length {t + 2 * padding}")
    t_out = (t + 2 * padding - span) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding))) if padding else x.data
    w = weight.data
    out = np.zeros((c_out, t_out), dtype=x.dtype)
    for tap in range(k):
        lo = tap * dilation
        hi = lo + stride * (t_out - 1) + 1
        out += w[:, :, tap] @ xp[:, lo:hi:stride]
    if bias is not None:
        out += bias.data[:, None]

    def back(out_t, g):
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for tap in range(k):
                lo = tap * dilation
                hi = lo + stride * (t_out - 1) + 1
                gxp[:, lo:hi:stride] += w[:, :, tap].T @ g
            gx = gxp[:, padding : padding + t] if padding else gxp
        gw = None
        if weight.requires_grad:
            gw = np.empty_like(w)
            for tap in range(k):
                lo = tap * dilation
                hi = lo + stride * (t_out - 1) + 1
                gw[:, :, tap] = g @ xp[:, lo:hi:stride].T
        if bias is None:
            return gx, gw
        gb = g.sum(axis=1) if bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, back)


def conv_transpose1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Strided scatter upsampling: [C_in,T] x [C_in,C_out,K] -> [C_out,T'].

    T' = (T-1)*stride - 2*padding + K. With the weight axes swapped this is
    exactly the adjoint of conv1d at the same stride/padding.
    """
    if x.data.ndim != 2 or weight.data.ndim != 3:
        raise ShapeError(
            f"conv_transpose1d: expected [C,T] input and [Ci,Co,K] weight, got {x.shape}, {weight.shape}"
        )
    c_in, c_out, k = weight.shape
    if x.shape[0] != c_in:
        raise ShapeError(
            f"conv_transpose1d: input channels {x.shape[0]} != weight C_in {c_in} (axis 0 of input)"
        )
    if stride < 1:
        raise ContractError("conv_transpose1d: stride must be >= 1")
    t = x.shape[1]
    if t < 1:
        raise ContractError("conv_transpose1d: empty input")
    full = (t - 1) * stride + k
    t_out = full - 2 * padding
    if t_out < 1:
        raise ContractError(f"conv_transpose1d: padding {padding} swallows the whole output")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv_transpose1d: bias shape {bias.shape} != ({c_out},)")

    w = weight.data
    buf = np.zeros((c_out, full), dtype=x.dtype)
    for tap in range(k):
        buf[:, tap : tap + stride * (t - 1) + 1 : stride] += w[:, :, tap].T @ x.data
    out = buf[:, padding : padding + t_out].copy()
    if bias is not None:
        out += bias.data[:, None]

    def back(out_t, g):
        gfull = np.zeros((c_out, full), dtype=x.dtype)
        gfull[:, padding : padding + t_out] = g
        gx = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for tap in range(k):
                gx += w[:, :, tap] @ gfull[:, tap : tap + stride * (t - 1) + 1 : stride]
        gw = None
        if weight.requires_grad:
            gw = np.empty_like(w)
            for tap in range(k):
                gw[:, :, tap] = x.data @ gfull[:, tap : tap + stride * (t - 1) + 1 : stride].T
        if bias is None:
            return gx, gw
        gb = g.sum(axis=1) if bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, back)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: tuple[int, int] = (1, 1),
    padding: tuple[int, int] = (0, 0),
) -> Tensor:
    """Cross-correlation of [C_in,H,W] with [C_out,C_in,Kh,Kw] -> [C_out,H',W']."""
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d: expected [C,H,W] input and 4-D weight, got {x.shape}, {weight.shape}")
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"conv2d: input channels {x.shape[0]} != weight C_in {c_in} (axis 0 of input)")
    sh, sw = stride
    ph, pw = padding
    h, w_ax = x.shape[1], x.shape[2]
    h_out = (h + 2 * ph - kh) // sh + 1
    w_out = (w_ax + 2 * pw - kw) // sw + 1
    if h_out < 1 or w_out < 1:
        raise ContractError(
            f"conv2d: kernel ({kh},{kw}) larger than padded input ({h + 2 * ph},{w_ax + 2 * pw})"
        )
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({c_out},)")

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    wt = weight.data
    out2 = np.zeros((c_out, h_out * w_out), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            sl = xp[:, i : i + sh * (h_out - 1) + 1 : sh, j : j + sw * (w_out - 1) + 1 : sw]
            out2 += wt[:, :, i, j] @ sl.reshape(c_in, -1)
    out = out2.reshape(c_out, h_out, w_out)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def back(out_t, g):
        g2 = g.reshape(c_out, -1)
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gsl = (wt[:, :, i, j].T @ g2).reshape(c_in, h_out, w_out)
                    gxp[:, i : i + sh * (h_out - 1) + 1 : sh, j : j + sw * (w_out - 1) + 1 : sw] += gsl
            gx = gxp[:, ph : ph + h, pw : pw + w_ax] if (ph or pw) else gxp
        gw = None
        if weight.requires_grad:
            gw = np.empty_like(wt)
            for i in range(kh):
                for j in range(kw):
                    sl = xp[:, i : i + sh * (h_out - 1) + 1 : sh, j : j + sw * (w_out - 1) + 1 : sw]
                    gw[:, :, i, j] = g2 @ sl.reshape(c_in, -1).T
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(1, 2)) if bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, back)


def avg_pool1d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """[C,T] -> [C,T'] where each output is the mean of its window."""
    if x.data.ndim != 2:
        raise ShapeError(f"avg_pool1d: expected [C,T], got {x.shape}")
    t = x.shape[1]
    if kernel > t:
        raise ShapeError(f"avg_pool1d: kernel {kernel} exceeds length {t} (axis 1)")
    if kernel < 1 or stride < 1:
        raise ContractError("avg_pool1d: kernel and stride must be >= 1")
    t_out = (t - kernel) // stride + 1
    inv = np.asarray(1.0 / kernel, dtype=x.dtype)
    out = np.zeros((x.shape[0], t_out), dtype=x.dtype)
    for tap in range(kernel):
        out += x.data[:, tap : tap + stride * (t_out - 1) + 1 : stride]
    out *= inv

    def back(out_t, g):
        gs = g * inv
        gx = np.zeros_like(x.data)
        for tap in range(kernel):
            gx[:, tap : tap + stride * (t_out - 1) + 1 : stride] += gs
        return (gx,)

    return _make(out, (x,), back)


def fir1d(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Same-length FIR along the last axis; odd fixed kernel, reflect edges."""
    k = kernel.shape[0]
    if k % 2 != 1:
        raise ContractError(f"fir1d: kernel length {k} must be odd")
    half = k // 2
    t = x.shape[-1]
    if half >= t:
        raise ContractError(f"fir1d: kernel half-width {half} too large for length {t}")
    kern = kernel.astype(x.dtype, copy=False)
    width = [(0, 0)] * (x.data.ndim - 1) + [(half, half)]
    xp = np.pad(x.data, width, mode="reflect")
    y = np.zeros_like(x.data)
    for tap in range(k):
        y += kern[tap] * xp[..., tap : tap + t]

    def back(out_t, g):
        gxp = np.zeros_like(xp)
        for tap in range(k):
            gxp[..., tap : tap + t] += kern[tap] * g
        gx = gxp[..., half : half + t].copy()
        gx[..., 1 : half + 1] += gxp[..., :half][..., ::-1]
        gx[..., t - half - 1 : t - 1] += gxp[..., half + t :][..., ::-1]
        return (gx,)

    return _make(y, (x,), back)


# ---------------------------------------------------------------------------
# spectral ops


def frame_signal(x: Tensor, frame_length: int, hop: int, n_frames: int) -> Tensor:
    """Gather [T] -> [n_frames, frame_length] windows starting at multiples of hop."""
    if x.data.ndim != 1:
        raise ShapeError(f"frame_signal: expected 1-D input, got {x.shape}")
    if frame_length < 1 or hop < 1 or n_frames < 1:
        raise ContractError("frame_signal: frame_length, hop and n_frames must be >= 1")
    t = x.shape[0]
    need = (n_frames - 1) * hop + frame_length
    if need > t:
        raise ContractError(f"frame_signal: {n_frames} frames need {need} samples, have {t}")
    view = np.lib.stride_tricks.sliding_window_view(x.data, frame_length)[::hop][:n_frames]
    out = view.copy()

    def back(out_t, g):
        gx = np.zeros_like(x.data)
        # frames `group` apart never overlap, so each residue class scatters
        # through a writable strided view instead of per-frame adds
        group = -(-frame_length // hop)
        itemsize = gx.itemsize
        for r in range(min(group, n_frames)):
            sub = g[r::group]
            m = sub.shape[0]
            dest = np.lib.stride_tricks.as_strided(
                gx[r * hop :], shape=(m, frame_length), strides=(group * hop * itemsize, itemsize)
            )
            dest += sub
        return (gx,)

    return _make(out, (x,), back)


def rdft(frames: Tensor) -> Tensor:
    """Real DFT of [N, n] frames -> [2, N, n//2 + 1] (real part, imag part).

    Forward goes through the FFT; backward applies the exact adjoint of the
    one-sided real-to-complex transform via the inverse FFT.
    """
    if frames.data.ndim != 2:
        raise ShapeError(f"rdft: expected [N, n] frames, got {frames.shape}")
    n = frames.shape[1]
    z = np.fft.rfft(frames.data, axis=1)
    out = np.stack([z.real, z.imag]).astype(frames.dtype, copy=False)

    def back(out_t, g):
        h = (g[0] + 1j * g[1]).astype(np.complex128)
        # adjoint of the one-sided transform: halve interior bins, keep only
        # the real cotangent of the DC and (n even) Nyquist bins
        h[:, 1 : (n + 1) // 2] *= 0.5
        h[:, 0] = h[:, 0].real
        if n % 2 == 0:
            h[:, -1] = h[:, -1].real
        adj = np.fft.irfft(h, n=n, axis=1) * n
        return (adj.astype(frames.dtype, copy=False),)

    return _make(out, (frames,), back)


# ---------------------------------------------------------------------------
# parameters


class Parameter:
    """Named leaf tensor; freezing drops it out of both backward and updates."""

    __slots__ = ("name", "tensor", "frozen")

    def __init__(self, name: str, data: np.ndarray, frozen: bool = False):
        self.name = name
        self.tensor = Tensor(data, requires_grad=not frozen)
        self.frozen = frozen

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = value

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def freeze(self) -> None:
        self.frozen = True
        self.tensor.requires_grad = False

    def unfreeze(self) -> None:
        self.frozen = False
        self.tensor.requires_grad = True

    def __repr__(self):
        state = " frozen" if self.frozen else ""
        return f"Parameter({self.name}, shape={self.data.shape}{state})"


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
