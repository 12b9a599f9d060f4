"""Minimal reverse-mode autodiff over float64 numpy arrays.

Forward ops append (output, inputs, backward-rule) records to an explicit
:class:`Tape`; records land in execution order, so the tape is topologically
sorted by construction.  :func:`backward` replays the tape in reverse and
accumulates gradients into every reachable ``requires_grad`` leaf.  Passing
``tape=None`` to any op runs the forward computation without recording,
which is how inference avoids autodiff overhead.

Only the ops the residual network needs are provided; there is no general
broadcasting and no second-order support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DegenerateBatchError, DimensionError


class Tensor:
    """A float64 array plus an optional gradient buffer.

    ``grad`` is allocated (zeros) only when ``requires_grad`` is set; ops
    never mutate ``data`` of their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def is_finite(self) -> bool:
        """True when every entry is finite (NaN/Inf violates the Tensor contract)."""
        return bool(np.isfinite(self.data).all())

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor; ``grad`` always exists and matches ``data.shape``."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Wengert list of recorded operations.

    Each record is ``(output, inputs, backward_fn)`` where ``backward_fn``
    maps the upstream gradient of ``output`` to a tuple of gradients, one
    per input (``None`` for inputs that need no gradient).
    """

    __slots__ = ("_records",)

    def __init__(self):
        self._records: list[tuple] = []

    def record(self, output: Tensor, inputs: tuple, backward_fn) -> None:
        self._records.append((output, tuple(inputs), backward_fn))

    def __len__(self) -> int:
        return len(self._records)


def backward(tape: Tape, loss: Tensor) -> None:
    """Fill ``grad`` of every requires_grad leaf with d(loss)/d(leaf).

    Repeated calls accumulate into existing ``grad`` buffers.  Raises
    :class:`ContractError` if ``loss`` is not a scalar.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        loss.grad += 1.0
    for output, inputs, backward_fn in reversed(tape._records):
        g_out = grads.pop(id(output), None)
        if g_out is None:
            continue
        for tensor, g_in in zip(inputs, backward_fn(g_out)):
            if g_in is None:
                continue
            if tensor.requires_grad:
                tensor.grad += g_in
            else:
                have = grads.get(id(tensor))
                grads[id(tensor)] = g_in if have is None else have + g_in


# ---------------------------------------------------------------------------
# layer ops
# ---------------------------------------------------------------------------


def conv1d(tape, x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlate ``x`` [B, Cin, L] with ``kernel`` [Cout, Cin, k].

    Output length is floor((L + 2*padding - k) / stride) + 1.
    """
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ConfigError(f"padding must be >= 0, got {padding}")
    if x.ndim != 3 or kernel.ndim != 3 or bias.ndim != 1:
        raise DimensionError(
            f"conv1d expects x[B,Cin,L], kernel[Cout,Cin,k], bias[Cout]; "
            f"got {x.shape}, {kernel.shape}, {bias.shape}")
    n_batch, c_in, length = x.shape
    c_out, kc_in, k = kernel.shape
    if kc_in != c_in:
        raise DimensionError(f"kernel expects {kc_in} input channels, input has {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"bias shape {bias.shape} != ({c_out},)")
    if k > length + 2 * padding:
        raise DimensionError(f"kernel size {k} exceeds padded length {length + 2 * padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    # im2col, features-first: one contiguous [Cin*k, B*Lout] matrix feeds a
    # single BLAS product per direction and is reused by the backward rule
    windows = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]  # [B,Cin,Lout,k]
    l_out = windows.shape[2]
    cols = np.ascontiguousarray(windows.transpose(1, 3, 0, 2)).reshape(
        c_in * k, n_batch * l_out)
    w2 = kernel.data.reshape(c_out, c_in * k)
    out2 = w2 @ cols
    out2 += bias.data[:, None]
    out = np.ascontiguousarray(out2.reshape(c_out, n_batch, l_out).transpose(1, 0, 2))
    result = Tensor(out)

    if tape is not None:

        def bwd(g):  # g: [B, Cout, Lout]
            g2 = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(
                c_out, n_batch * l_out)
            g_kernel = (g2 @ cols.T).reshape(c_out, c_in, k)
            g_bias = g2.sum(axis=1)
            if stride == 1:
                # input gradient as a transposed convolution: correlate the
                # padded upstream gradient with the flipped kernel, which
                # keeps the large contraction dimension BLAS-friendly
                gpad = np.pad(g, ((0, 0), (0, 0), (k - 1, k - 1)))
                gwin = sliding_window_view(gpad, k, axis=2)  # [B,Cout,L+2p,k]
                gcols = np.ascontiguousarray(gwin.transpose(1, 3, 0, 2)).reshape(
                    c_out * k, n_batch * (length + 2 * padding))
                w_flip = np.ascontiguousarray(
                    kernel.data[:, :, ::-1].transpose(1, 0, 2)).reshape(c_in, c_out * k)
                g_xp = (w_flip @ gcols).reshape(
                    c_in, n_batch, length + 2 * padding).transpose(1, 0, 2)
            else:
                g_cols = (w2.T @ g2).reshape(c_in, k, n_batch, l_out)
                g_xp = np.zeros_like(xp)
                for kk in range(k):
                    g_xp[:, :, kk:kk + stride * l_out:stride] += g_cols[:, kk].transpose(1, 0, 2)
            g_x = g_xp[:, :, padding:padding + length] if padding else g_xp
            return np.ascontiguousarray(g_x), g_kernel, g_bias

        tape.record(result, (x, kernel, bias), bwd)
    return result


def maxpool1d(tape, x: Tensor, window: int, stride: int) -> Tensor:
    """Max over sliding windows; gradient goes to the first maximal position."""
    if window < 1 or stride < 1:
        raise ConfigError(f"window and stride must be >= 1, got {window}, {stride}")
    if x.ndim != 3:
        raise DimensionError(f"maxpool1d expects [B, C, L], got {x.shape}")
    n_batch, channels, length = x.shape
    if window > length:
        raise DimensionError(f"pool window {window} exceeds length {length}")

    win = sliding_window_view(x.data, window, axis=2)[:, :, ::stride, :]  # [B,C,Lout,w]
    arg = win.argmax(axis=3)  # ties resolve to the first index
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    result = Tensor(np.ascontiguousarray(out))

    if tape is not None:
        l_out = out.shape[2]
        positions = arg + np.arange(l_out) * stride  # source index per pooled value

        def bwd(g):
            g_x = np.zeros((n_batch, channels, length))
            bi = np.arange(n_batch)[:, None, None]
            ci = np.arange(channels)[None, :, None]
            np.add.at(g_x, (bi, ci, positions), g)
            return (g_x,)

        tape.record(result, (x,), bwd)
    return result


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (eval-mode inputs)."""

    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def initial(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy())


def batchnorm1d(tape, x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                mode: str, momentum: float = 0.9, epsilon: float = 1e-5) -> Tensor:
    """Normalize per channel over (batch, length), then scale/shift.

    Train mode uses batch statistics (biased variance) and updates the
    running stats in place: run := momentum * run + (1 - momentum) * batch.
    Eval mode normalizes with the stored running stats.
    """
    if x.ndim != 3:
        raise DimensionError(f"batchnorm1d expects [B, C, L], got {x.shape}")
    n_batch, channels, length = x.shape
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"gamma/beta must have shape ({channels},), got {gamma.shape}, {beta.shape}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")

    if mode == "train":
        n_stat = n_batch * length
        if n_stat < 2:
            raise DegenerateBatchError(
                f"batch*length == {n_stat} < 2; variance undefined in train mode")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        state.running_mean *= momentum
        state.running_mean += (1.0 - momentum) * mean
        state.running_var *= momentum
        state.running_var += (1.0 - momentum) * var
    else:
        mean = state.running_mean
        var = state.running_var

    inv = 1.0 / np.sqrt(var + epsilon)
    slope = gamma.data * inv
    shift = beta.data - mean * slope
    out = x.data * slope[None, :, None]
    out += shift[None, :, None]
    result = Tensor(out)

    if tape is not None:
        x_hat = (x.data - mean[None, :, None]) * inv[None, :, None]
        if mode == "train":
            n_stat = n_batch * length

            def bwd(g):
                g_gamma = (g * x_hat).sum(axis=(0, 2))
                g_beta = g.sum(axis=(0, 2))
                g_hat = g * gamma.data[None, :, None]
                sum_g = g_hat.sum(axis=(0, 2), keepdims=True)
                sum_gx = (g_hat * x_hat).sum(axis=(0, 2), keepdims=True)
                g_x = (inv[None, :, None] / n_stat) * (
                    n_stat * g_hat - sum_g - x_hat * sum_gx)
                return g_x, g_gamma, g_beta
        else:

            def bwd(g):
                g_gamma = (g * x_hat).sum(axis=(0, 2))
                g_beta = g.sum(axis=(0, 2))
                g_x = g * slope[None, :, None]
                return g_x, g_gamma, g_beta

        tape.record(result, (x, gamma, beta), bwd)
    return result


def relu(tape, x: Tensor) -> Tensor:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    result = Tensor(np.maximum(x.data, 0.0))
    if tape is not None:
        mask = x.data > 0
        tape.record(result, (x,), lambda g: (g * mask,))
    return result


def dropout(tape, x: Tensor, rate: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Zero each element with probability ``rate`` (train), identity in eval.

    Survivors are scaled by 1/(1-rate) so expectations match.  The rng is
    consumed only when a mask is actually drawn (train mode, rate > 0).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    inv_keep = 1.0 / (1.0 - rate)
    result = Tensor(x.data * keep * inv_keep)
    if tape is not None:
        tape.record(result, (x,), lambda g: (g * keep * inv_keep,))
    return result


def dense(tape, x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: x [B, d_in] -> x @ weight.T + bias, weight [d_out, d_in]."""
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise DimensionError(
            f"dense expects x[B,d_in], weight[d_out,d_in], bias[d_out]; "
            f"got {x.shape}, {weight.shape}, {bias.shape}")
    if x.shape[1] != weight.shape[1] or bias.shape[0] != weight.shape[0]:
        raise DimensionError(
            f"dense shapes disagree: x{x.shape}, weight{weight.shape}, bias{bias.shape}")
    result = Tensor(x.data @ weight.data.T + bias.data)

    if tape is not None:

        def bwd(g):
            return g @ weight.data, g.T @ x.data, g.sum(axis=0)

        tape.record(result, (x, weight, bias), bwd)
    return result


def softmax(tape, logits: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction for overflow safety."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"softmax expects [B, n>=2] logits, got {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    result = Tensor(p)

    if tape is not None:

        def bwd(g):
            return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

        tape.record(result, (logits,), bwd)
    return result


def flatten(tape, x: Tensor) -> Tensor:
    """Collapse all non-batch axes: [B, ...] -> [B, prod(...)]."""
    shape = x.shape
    result = Tensor(x.data.reshape(shape[0], -1))
    if tape is not None:
        tape.record(result, (x,), lambda g: (g.reshape(shape),))
    return result


def take_rows(tape, x: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; backward scatter-adds into the sources."""
    if x.ndim != 2:
        raise DimensionError(f"take_rows expects a 2-D tensor, got {x.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    result = Tensor(x.data[idx])

    if tape is not None:

        def bwd(g):
            g_x = np.zeros_like(x.data)
            np.add.at(g_x, idx, g)
            return (g_x,)

        tape.record(result, (x,), bwd)
    return result


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"add shapes disagree: {a.shape} vs {b.shape}")
    result = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(result, (a, b), lambda g: (g, g))
    return result


def scale(tape, x: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar."""
    result = Tensor(x.data * factor)
    if tape is not None:
        tape.record(result, (x,), lambda g: (g * factor,))
    return result


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class SGD:
    """Gradient descent with classical momentum.

    Update per parameter: v := momentum * v + grad; w := w - alpha * v.
    With momentum 0 this is exactly w := w - alpha * grad.
    """

    def __init__(self, params, alpha: float, momentum: float = 0.9):
        if alpha <= 0:
            raise ConfigError(f"learning rate must be > 0, got {alpha}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.params = list(params)
        self.alpha = float(alpha)
        self.momentum = float(momentum)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            v *= self.momentum
            v += p.grad
            p.data -= self.alpha * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0
