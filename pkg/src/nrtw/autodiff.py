"""Reverse-mode differentiation over the op set the denoising networks need.

A forward pass builds a small DAG of Tensor nodes; each op closes over
whatever it needs for its vector-Jacobian product. ``backward`` walks the
graph once in reverse topological order and returns gradients for a
ParamSet. There is no broadcasting engine and no in-place mutation of
recorded nodes: tensors are immutable values once constructed.

Arithmetic runs in the dtype of the inputs. Production code uses float32
throughout; float64 inputs are supported so gradient checks and the linear
dynamics oracle can be verified at full precision with the same code path.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import GraphError, NonFiniteError, ShapeMismatchError

_ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """Immutable n-d array node in a recorded computation."""

    __slots__ = ("data", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(
                f"tensor {name or '<unnamed>'} contains NaN or Inf values"
            )
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, vjp: Callable) -> "Tensor":
        # internal constructor: skips the finiteness scan on the hot path
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.name = None
        out._parents = parents if out.requires_grad else ()
        out._vjp = vjp if out.requires_grad else None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class ParamSet:
    """Ordered collection of uniquely named trainable tensors.

    The optimizer mutates the underlying parameter buffers in place between
    forward passes; a ParamSet is confined to one training/sweep job at a
    time.
    """

    def __init__(self, items: Iterable[tuple[str, Tensor]] = ()):
        self._items: dict[str, Tensor] = {}
        for name, tensor in items:
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._items:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        if tensor.name is None:
            tensor.name = name
        self._items[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def names(self) -> list[str]:
        return list(self._items)

    def items(self):
        return self._items.items()

    def tensors(self) -> list[Tensor]:
        return list(self._items.values())

    def total_size(self) -> int:
        return sum(t.data.size for t in self._items.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._items.items()}

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, t in self._items.items():
            out.add(name, Tensor(t.data.copy(), requires_grad=True, name=name))
        return out

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet()
        for name, t in self._items.items():
            out.add(name, Tensor(t.data.astype(dtype), requires_grad=True, name=name))
        return out


# ---------------------------------------------------------------------------
# ops


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None,
    stride: int = 1,
    padding: int = 1,
) -> Tensor:
    """2-d cross-correlation with zero padding, NCHW layout.

    kernel shape (C_out, C_in, k, k); square kernels only; stride 1 or 2.
    """
    if kernel.data.ndim != 4 or kernel.data.shape[2] != kernel.data.shape[3]:
        raise ShapeMismatchError(f"kernel must be (C_out, C_in, k, k), got {kernel.shape}")
    if x.data.ndim != 4:
        raise ShapeMismatchError(f"input must be (N, C, H, W), got {x.shape}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    c_out, c_in, k, _ = kernel.data.shape
    n, c, h, w = x.data.shape
    if c != c_in:
        raise ShapeMismatchError(
            f"input has {c} channels but kernel expects {c_in}"
        )
    if bias is not None and bias.data.shape != (c_out,):
        raise ShapeMismatchError(
            f"bias must have shape ({c_out},), got {bias.data.shape}"
        )
    h_out = kernels.conv_output_size(h, k, stride, padding)
    w_out = kernels.conv_output_size(w, k, stride, padding)
    if h_out < 1 or w_out < 1:
        raise ShapeMismatchError(
            f"conv output would be empty for input {h}x{w}, k={k}, "
            f"stride={stride}, padding={padding}"
        )

    cols = kernels.im2col(x.data, k, stride, padding)
    w_mat = kernel.data.reshape(c_out, c_in * k * k)
    out_mat = np.matmul(w_mat, cols)
    if bias is not None:
        out_mat += bias.data[None, :, None]
    out = out_mat.reshape(n, c_out, h_out, w_out)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def vjp(grad: np.ndarray):
        g_mat = grad.reshape(n, c_out, h_out * w_out)
        grads = []
        if x.requires_grad:
            g_cols = np.matmul(w_mat.T, g_mat)
            grads.append(kernels.col2im(g_cols, x.data.shape, k, stride, padding))
        else:
            grads.append(None)
        if kernel.requires_grad:
            # (cols @ g^T)^T runs the tall-skinny GEMM orientation, which is
            # roughly 2x faster than g @ cols^T at these shapes
            g_w = np.matmul(cols, g_mat.transpose(0, 2, 1)).sum(axis=0).T
            grads.append(np.ascontiguousarray(g_w).reshape(kernel.data.shape))
        else:
            grads.append(None)
        if bias is not None:
            grads.append(g_mat.sum(axis=(0, 2)) if bias.requires_grad else None)
        return tuple(grads)

    return Tensor._from_op(out, parents, vjp)


def instance_norm(
    x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5
) -> Tensor:
    """Per-(sample, channel) normalization with learned channel affine."""
    if x.data.ndim != 4:
        raise ShapeMismatchError(f"input must be (N, C, H, W), got {x.shape}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    c = x.data.shape[1]
    if scale.data.shape != (c,) or shift.data.shape != (c,):
        raise ShapeMismatchError(
            f"scale/shift must have shape ({c},), got {scale.data.shape} "
            f"and {shift.data.shape}"
        )
    n_pix = x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xhat = x.data - mu
    var = np.einsum("nchw,nchw->nc", xhat, xhat) / n_pix
    inv = (1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype)))[
        :, :, None, None
    ]
    xhat *= inv  # owned temporary, normalized in place
    out = xhat * scale.data[None, :, None, None]
    out += shift.data[None, :, None, None]

    def vjp(grad: np.ndarray):
        g_x = None
        if x.requires_grad:
            g_hat = grad * scale.data[None, :, None, None]
            m1 = g_hat.mean(axis=(2, 3), keepdims=True)
            m2 = (
                np.einsum("nchw,nchw->nc", g_hat, xhat)[:, :, None, None] / n_pix
            )
            g_hat -= m1
            g_hat -= xhat * m2
            g_hat *= inv
            g_x = g_hat
        g_scale = (
            np.einsum("nchw,nchw->c", grad, xhat) if scale.requires_grad else None
        )
        g_shift = grad.sum(axis=(0, 2, 3)) if shift.requires_grad else None
        return g_x, g_scale, g_shift

    return Tensor._from_op(out, (x, scale, shift), vjp)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, v)."""
    out = np.maximum(x.data, 0)

    def vjp(grad: np.ndarray):
        return ((x.data > 0) * grad,)

    return Tensor._from_op(out, (x,), vjp)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel factor x factor."""
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    if x.data.ndim != 4:
        raise ShapeMismatchError(f"input must be (N, C, H, W), got {x.shape}")
    if factor == 1:
        out = x.data
    else:
        out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def vjp(grad: np.ndarray):
        if factor == 1:
            return (grad,)
        n, c, h, w = x.data.shape
        g = grad.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))
        return (g,)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), vjp)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis (skip connections)."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeMismatchError("concat operands must be (N, C, H, W)")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ShapeMismatchError(
            f"concat operands disagree outside channel axis: {a.shape} vs {b.shape}"
        )
    out = np.concatenate([a.data, b.data], axis=1)
    split = a.data.shape[1]

    def vjp(grad: np.ndarray):
        g_a = grad[:, :split] if a.requires_grad else None
        g_b = grad[:, split:] if b.requires_grad else None
        return g_a, g_b

    return Tensor._from_op(out, (a, b), vjp)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean of squared elementwise differences, accumulated in float64."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(
            f"mse_loss operands must share a shape: {a.shape} vs {b.shape}"
        )
    diff = a.data - b.data
    d64 = diff.astype(np.float64, copy=False)
    loss = np.float64((d64 * d64).mean())
    n = diff.size

    def vjp(grad: np.ndarray):
        g = float(grad) * (2.0 / n)
        g_a = g * diff if a.requires_grad else None
        g_b = (-g) * diff if b.requires_grad else None
        return g_a, g_b

    return Tensor._from_op(np.float64(loss), (a, b), vjp)


# ---------------------------------------------------------------------------
# reverse pass


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(
    loss: Tensor, params: ParamSet | Sequence[Tensor]
) -> Mapping[str, np.ndarray] | list[np.ndarray]:
    """Gradients of a scalar loss with respect to the given parameters.

    Parameters that never entered the recorded computation get zero
    gradients. Passing a ParamSet returns a name-keyed dict; passing a
    sequence of tensors returns a list in the same order.
    """
    if loss.data.size != 1:
        raise GraphError(
            f"backward requires a scalar loss, got shape {loss.data.shape}"
        )
    grads: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones((), dtype=np.float64)
        for node in reversed(_topo_order(loss)):
            if node._vjp is None:
                continue  # leaf: gradient stays in grads for collection
            g_out = grads.pop(id(node), None)
            if g_out is None:
                continue
            for parent, g in zip(node._parents, node._vjp(g_out)):
                if g is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

    def grad_for(t: Tensor) -> np.ndarray:
        g = grads.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return g

    if isinstance(params, ParamSet):
        return {name: grad_for(t) for name, t in params.items()}
    return [grad_for(t) for t in params]
