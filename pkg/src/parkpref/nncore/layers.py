"""Layers with explicit forward/backward passes.

This is a layer-stack core, not a general autodiff graph: every model in
the package is a straight sequence of layers, so each layer caches what
its own backward pass needs and `Stack` chains them. All heavy lifting
is GEMM (patch/aggregation matrices built by nncore.kernels feed BLAS
matmuls); backward passes produce exact analytic gradients.

Conventions
-----------
* Arrays are channels-last. Dense operates on (N, C); Conv2D on
  (B, H, W, C); Conv1D on (B, L, C); GCNLayer on (NODES, B, C).
* `backward` overwrites each Parameter's .grad (no accumulation) and
  returns the input gradient, or None for a layer with need_input_grad
  False (the stack's first layer skips that work).
* Parameters are created in the layer's dtype; initialization draws are
  made in float64 from the supplied generator, then cast, so a given
  seed yields the same weights in every dtype.
"""

from __future__ import annotations

import numpy as np

from .kernels import boxsum3x3, im2col1d, im2col2d


class Parameter:
    """A trainable array and the gradient of the loss with respect to it."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
            dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer; subclasses fill in forward/backward."""

    def __init__(self):
        self.need_input_grad = True

    def parameters(self) -> list[Parameter]:
        return []

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray):
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class Dense(Layer):
    """y = x @ W + b on (N, n_in) inputs."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.w = Parameter("w", _glorot(rng, (n_in, n_out), n_in, n_out, dtype))
        self.b = Parameter("b", np.zeros(n_out, dtype=dtype))
        self._x = None

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"Dense expects (N, {self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.w.data + self.b.data

    def backward(self, dy):
        self.w.grad = self._x.T @ dy
        self.b.grad = dy.sum(axis=0)
        if not self.need_input_grad:
            return None
        return dy @ self.w.data.T

    def describe(self):
        return f"Dense({self.n_in}->{self.n_out})"


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, x.dtype.type(0))

    def backward(self, dy):
        return dy * self._mask


class Sigmoid(Layer):
    def __init__(self):
        super().__init__()
        self._y = None

    def forward(self, x):
        # Split by sign for overflow-free exponentials.
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._y = y
        return y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Conv2D(Layer):
    """Same-padded stride-1 2D convolution on (B, H, W, C) inputs.

    Weights are stored flat as (k*k*c_in, c_out): forward is one im2col
    gather plus one GEMM. The input gradient uses the transposed-
    convolution identity dX = im2col(dY) @ W_rotated, where W_rotated is
    the kernel flipped in both spatial axes with channel axes swapped —
    so backward reuses the same gather kernel as forward.
    """

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        if k < 1 or k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        fan = k * k * c_in, k * k * c_out
        self.w = Parameter("w", _glorot(rng, (k * k * c_in, c_out), *fan, dtype))
        self.b = Parameter("b", np.zeros(c_out, dtype=dtype))
        self._cols = None
        self._in_shape = None

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ValueError(f"Conv2D expects (B, H, W, {self.c_in}), got {x.shape}")
        b, h, w, _ = x.shape
        self._in_shape = x.shape
        cols = im2col2d(x, self.k).reshape(b * h * w, self.k * self.k * self.c_in)
        self._cols = cols
        y = cols @ self.w.data + self.b.data
        return y.reshape(b, h, w, self.c_out)

    def _rotated_w(self):
        k = self.k
        wv = self.w.data.reshape(k, k, self.c_in, self.c_out)
        rot = wv[::-1, ::-1].transpose(0, 1, 3, 2)  # (k, k, c_out, c_in)
        return np.ascontiguousarray(rot).reshape(k * k * self.c_out, self.c_in)

    def backward(self, dy):
        b, h, w, _ = self._in_shape
        dyf = dy.reshape(b * h * w, self.c_out)
        self.w.grad = self._cols.T @ dyf
        self.b.grad = dyf.sum(axis=0)
        if not self.need_input_grad:
            return None
        dcols = im2col2d(dy, self.k).reshape(b * h * w, self.k * self.k * self.c_out)
        return (dcols @ self._rotated_w()).reshape(self._in_shape)

    def describe(self):
        return f"Conv2D({self.c_in}->{self.c_out}, k={self.k})"


class Conv1x1(Layer):
    """Per-cell linear map on (B, H, W, C) inputs (a 1x1 convolution)."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.w = Parameter("w", _glorot(rng, (c_in, c_out), c_in, c_out, dtype))
        self.b = Parameter("b", np.zeros(c_out, dtype=dtype))
        self._xf = None
        self._in_shape = None

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ValueError(f"Conv1x1 expects (B, H, W, {self.c_in}), got {x.shape}")
        self._in_shape = x.shape
        xf = x.reshape(-1, self.c_in)
        self._xf = xf
        y = xf @ self.w.data + self.b.data
        return y.reshape(*x.shape[:3], self.c_out)

    def backward(self, dy):
        dyf = dy.reshape(-1, self.c_out)
        self.w.grad = self._xf.T @ dyf
        self.b.grad = dyf.sum(axis=0)
        if not self.need_input_grad:
            return None
        return (dyf @ self.w.data.T).reshape(self._in_shape)

    def describe(self):
        return f"Conv1x1({self.c_in}->{self.c_out})"


class Conv1D(Layer):
    """Same-padded stride-1 1D convolution on (B, L, C) inputs."""

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 dtype=np.float64):
        super().__init__()
        if k < 1 or k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        fan = k * c_in, k * c_out
        self.w = Parameter("w", _glorot(rng, (k * c_in, c_out), *fan, dtype))
        self.b = Parameter("b", np.zeros(c_out, dtype=dtype))
        self._cols = None
        self._in_shape = None

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ValueError(f"Conv1D expects (B, L, {self.c_in}), got {x.shape}")
        b, n, _ = x.shape
        self._in_shape = x.shape
        cols = im2col1d(x, self.k).reshape(b * n, self.k * self.c_in)
        self._cols = cols
        y = cols @ self.w.data + self.b.data
        return y.reshape(b, n, self.c_out)

    def _rotated_w(self):
        wv = self.w.data.reshape(self.k, self.c_in, self.c_out)
        rot = wv[::-1].transpose(0, 2, 1)  # (k, c_out, c_in)
        return np.ascontiguousarray(rot).reshape(self.k * self.c_out, self.c_in)

    def backward(self, dy):
        b, n, _ = self._in_shape
        dyf = dy.reshape(b * n, self.c_out)
        self.w.grad = self._cols.T @ dyf
        self.b.grad = dyf.sum(axis=0)
        if not self.need_input_grad:
            return None
        dcols = im2col1d(dy, self.k).reshape(b * n, self.k * self.c_out)
        return (dcols @ self._rotated_w()).reshape(self._in_shape)

    def describe(self):
        return f"Conv1D({self.c_in}->{self.c_out}, k={self.k})"


class GridAdjacency:
    """Symmetric-normalized grid adjacency applied as a filter.

    For the 8-neighbor grid graph with self-loops, (A + I) X is exactly a
    zero-padded 3x3 box sum over the grid, so the normalized aggregation
    D^(-1/2) (A + I) D^(-1/2) X is: scale each cell by 1/sqrt(deg), box
    sum, scale again. Degrees are 4 (corner), 6 (edge), 9 (interior).
    The operator is symmetric, so backward aggregation is the same call.
    """

    def __init__(self, rows: int, cols: int):
        self.rows, self.cols = rows, cols
        self.n_nodes = rows * cols
        deg = boxsum3x3(np.ones((rows, cols, 1)))
        self._dinv64 = 1.0 / np.sqrt(deg)
        self._dinv32 = self._dinv64.astype(np.float32)

    def _dinv(self, dtype):
        return self._dinv32 if dtype == np.float32 else self._dinv64

    def aggregate(self, x: np.ndarray) -> np.ndarray:
        n, b, c = x.shape
        if n != self.n_nodes:
            raise ValueError(f"expected {self.n_nodes} nodes, got {n}")
        dinv = self._dinv(x.dtype)
        grid = x.reshape(self.rows, self.cols, b * c)
        out = boxsum3x3(np.ascontiguousarray(grid * dinv)) * dinv
        return out.reshape(n, b, c)


class DenseAdjacency:
    """Symmetric-normalized adjacency for an arbitrary small graph.

    Takes a binary symmetric adjacency matrix without self-loops, adds
    them, and applies D^(-1/2) (A + I) D^(-1/2) as a dense matmul. Used
    for generic graphs in tests and as the oracle for GridAdjacency.
    """

    def __init__(self, adjacency: np.ndarray):
        a = np.asarray(adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if not np.isin(a, (0.0, 1.0)).all():
            raise ValueError("adjacency must be binary")
        if np.trace(a) != 0:
            raise ValueError("adjacency must not contain self-loops")
        self.n_nodes = a.shape[0]
        a_hat = a + np.eye(self.n_nodes)
        dinv = 1.0 / np.sqrt(a_hat.sum(axis=1))
        self._norm64 = a_hat * dinv[:, None] * dinv[None, :]
        self._norm32 = self._norm64.astype(np.float32)

    def aggregate(self, x: np.ndarray) -> np.ndarray:
        n, b, c = x.shape
        if n != self.n_nodes:
            raise ValueError(f"expected {self.n_nodes} nodes, got {n}")
        norm = self._norm32 if x.dtype == np.float32 else self._norm64
        return (norm @ x.reshape(n, b * c)).reshape(n, b, c)


def grid_adjacency_matrix(rows: int, cols: int) -> np.ndarray:
    """Dense binary 8-neighbor adjacency of a grid (no self-loops)."""
    n = rows * cols
    a = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols:
                        a[r * cols + c, rr * cols + cc] = 1.0
    return a


class GCNLayer(Layer):
    """Graph convolution: H' = D^(-1/2)(A+I)D^(-1/2) H W + b.

    Inputs are (NODES, B, C); aggregation happens on the (NODES, B*C)
    view, the linear map on the (NODES*B, C) view — both reshapes of the
    same contiguous array, so no transposes are paid in the hot loop.
    """

    def __init__(self, n_in: int, n_out: int, adjacency,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.adjacency = adjacency
        self.w = Parameter("w", _glorot(rng, (n_in, n_out), n_in, n_out, dtype))
        self.b = Parameter("b", np.zeros(n_out, dtype=dtype))
        self._agg = None

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ValueError(f"GCNLayer expects (NODES, B, {self.n_in}), got {x.shape}")
        n, b, _ = x.shape
        agg = self.adjacency.aggregate(x)
        self._agg = agg
        y = agg.reshape(n * b, self.n_in) @ self.w.data + self.b.data
        return y.reshape(n, b, self.n_out)

    def backward(self, dy):
        n, b, _ = dy.shape
        dyf = dy.reshape(n * b, self.n_out)
        self.w.grad = self._agg.reshape(n * b, self.n_in).T @ dyf
        self.b.grad = dyf.sum(axis=0)
        if not self.need_input_grad:
            return None
        dagg = (dyf @ self.w.data.T).reshape(n, b, self.n_in)
        # The normalized operator is symmetric, so its adjoint is itself.
        return self.adjacency.aggregate(np.ascontiguousarray(dagg))

    def describe(self):
        return f"GCN({self.n_in}->{self.n_out})"


class Stack(Layer):
    """Sequential container over layers; the model seen by the trainer."""

    def __init__(self, layers: list[Layer], input_grad: bool = False):
        super().__init__()
        if not layers:
            raise ValueError("Stack needs at least one layer")
        self.layers = list(layers)
        self.need_input_grad = input_grad
        if not input_grad:
            # The input is data, not parameters; the first layer skips dX.
            self.layers[0].need_input_grad = False

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def describe(self):
        return " | ".join(layer.describe() for layer in self.layers)
