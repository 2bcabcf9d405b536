"""The four benchmark architectures under one shared parameter budget.

Every model maps a (rows, cols, 22) per-cell input grid (18 features +
4-way activity one-hot) to a per-cell selection probability, but each
sees different structure:

* gnn   — six graph convolutions over the 8-neighbor grid graph;
* cnn2d — three 3x3 convolutions plus a 1x1 output convolution;
* cnn1d — three 3-tap convolutions over the row-major cell sequence;
* mlp   — a per-cell dense stack whose input is the 3x3 neighborhood
          context (9 * 22 = 198 wide, zero-padded at borders).

Hidden widths are uniform per model and chosen as the smallest integer
landing the exact parameter count inside the budget, so all four models
spend comparable capacity (within a couple of percent) and differ only
in the structure they can exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MODEL_INPUT_DIM, model_input
from .errors import BuildError
from .layout import GridDims
from .nncore.kernels import im2col2d
from .nncore.layers import (
    Conv1D,
    Conv1x1,
    Conv2D,
    Dense,
    GCNLayer,
    GridAdjacency,
    ReLU,
    Sigmoid,
    Stack,
)
from .nncore.loss import CLAMP_EPS

MODEL_KINDS = ("gnn", "cnn2d", "cnn1d", "mlp")
DEFAULT_BUDGET = (74000, 76000)
CONTEXT_K = 3  # MLP context window; 3x3 neighborhood

_N_HIDDEN = {"gnn": 5, "cnn2d": 3, "cnn1d": 2, "mlp": 4}


def count_for_widths(kind: str, input_width: int, widths: tuple[int, ...]) -> int:
    """Exact parameter count of a kind given its hidden-layer widths."""
    if kind not in MODEL_KINDS:
        raise BuildError(f"unknown model kind {kind!r}; have {MODEL_KINDS}")
    if len(widths) != _N_HIDDEN[kind]:
        raise BuildError(f"{kind} takes {_N_HIDDEN[kind]} hidden widths, got {len(widths)}")
    if any(w < 1 for w in widths):
        raise BuildError(f"hidden widths must be positive, got {widths}")

    def linear(n_in, n_out):  # Dense / GCN / Conv1x1
        return n_in * n_out + n_out

    def conv2d(n_in, n_out, k=3):
        return k * k * n_in * n_out + n_out

    def conv1d(n_in, n_out, k=3):
        return k * n_in * n_out + n_out

    w = widths
    if kind == "gnn":
        total = linear(input_width, w[0])
        total += sum(linear(w[i], w[i + 1]) for i in range(4))
        total += linear(w[4], 1)
    elif kind == "cnn2d":
        total = conv2d(input_width, w[0])
        total += conv2d(w[0], w[1]) + conv2d(w[1], w[2])
        total += linear(w[2], 1)  # 1x1 output convolution
    elif kind == "cnn1d":
        total = conv1d(input_width, w[0])
        total += conv1d(w[0], w[1])
        total += conv1d(w[1], 1)
    else:  # mlp
        context = CONTEXT_K * CONTEXT_K * input_width
        total = linear(context, w[0])
        total += sum(linear(w[i], w[i + 1]) for i in range(3))
        total += linear(w[3], 1)
    return total


@dataclass(frozen=True)
class ArchSpec:
    """A fully determined architecture: kind, widths, and exact count."""

    kind: str
    input_width: int
    hidden_width: int
    widths: tuple[int, ...]
    param_count: int

    def layer_names(self) -> tuple[str, ...]:
        w = self.widths
        iw = self.input_width
        if self.kind == "gnn":
            dims = [iw, *w]
            layers = [f"GCN({dims[i]}->{dims[i + 1]}) + ReLU" for i in range(5)]
            layers.append(f"GCN({w[4]}->1) + Sigmoid")
        elif self.kind == "cnn2d":
            layers = [f"Conv2D({iw}->{w[0]}, k=3) + ReLU",
                      f"Conv2D({w[0]}->{w[1]}, k=3) + ReLU",
                      f"Conv2D({w[1]}->{w[2]}, k=3) + ReLU",
                      f"Conv1x1({w[2]}->1) + Sigmoid"]
        elif self.kind == "cnn1d":
            layers = [f"Conv1D({iw}->{w[0]}, k=3) + ReLU",
                      f"Conv1D({w[0]}->{w[1]}, k=3) + ReLU",
                      f"Conv1D({w[1]}->1, k=3) + Sigmoid"]
        else:
            context = CONTEXT_K * CONTEXT_K * iw
            dims = [context, *w]
            layers = [f"Dense({dims[i]}->{dims[i + 1]}) + ReLU" for i in range(4)]
            layers.append(f"Dense({w[3]}->1) + Sigmoid")
        return tuple(layers)


def build(kind: str, input_width: int = MODEL_INPUT_DIM,
          budget: tuple[int, int] = DEFAULT_BUDGET) -> ArchSpec:
    """Smallest architecture of a kind whose parameter count fits the budget.

    Scans uniform hidden widths upward to the first count >= budget[0].
    If that count overshoots budget[1] (possible when one width step jumps
    the whole window), the widest hidden layer (last on ties) is narrowed
    one unit at a time until the count enters the budget; failing that,
    the budget is infeasible for the kind.
    """
    lo, hi = budget
    if not 0 < lo <= hi:
        raise BuildError(f"invalid budget {budget}")
    n_hidden = _N_HIDDEN.get(kind)
    if n_hidden is None:
        raise BuildError(f"unknown model kind {kind!r}; have {MODEL_KINDS}")

    h = 1
    while count_for_widths(kind, input_width, (h,) * n_hidden) < lo:
        h += 1
    widths = [h] * n_hidden
    count = count_for_widths(kind, input_width, tuple(widths))
    while count > hi:
        # Trim the widest (last on ties) hidden layer by the minimal amount.
        i = max(range(n_hidden), key=lambda j: (widths[j], j))
        if widths[i] <= 1:
            raise BuildError(f"{kind}: budget {budget} infeasible after trimming")
        widths[i] -= 1
        count = count_for_widths(kind, input_width, tuple(widths))
    if count < lo:
        raise BuildError(f"{kind}: budget {budget} infeasible after trimming "
                         f"(closest count {count})")
    return ArchSpec(kind=kind, input_width=input_width, hidden_width=h,
                    widths=tuple(widths), param_count=count)


def _build_stack(spec: ArchSpec, dims: GridDims, rng: np.random.Generator,
                 dtype) -> Stack:
    w = spec.widths
    iw = spec.input_width
    if spec.kind == "gnn":
        adj = GridAdjacency(dims.rows, dims.cols)
        layers = []
        d = [iw, *w]
        for i in range(5):
            layers += [GCNLayer(d[i], d[i + 1], adj, rng, dtype), ReLU()]
        layers += [GCNLayer(w[4], 1, adj, rng, dtype), Sigmoid()]
    elif spec.kind == "cnn2d":
        layers = [Conv2D(iw, w[0], 3, rng, dtype), ReLU(),
                  Conv2D(w[0], w[1], 3, rng, dtype), ReLU(),
                  Conv2D(w[1], w[2], 3, rng, dtype), ReLU(),
                  Conv1x1(w[2], 1, rng, dtype), Sigmoid()]
    elif spec.kind == "cnn1d":
        layers = [Conv1D(iw, w[0], 3, rng, dtype), ReLU(),
                  Conv1D(w[0], w[1], 3, rng, dtype), ReLU(),
                  Conv1D(w[1], 1, 3, rng, dtype), Sigmoid()]
    else:
        context = CONTEXT_K * CONTEXT_K * iw
        d = [context, *w]
        layers = []
        for i in range(4):
            layers += [Dense(d[i], d[i + 1], rng, dtype), ReLU()]
        layers += [Dense(w[3], 1, rng, dtype), Sigmoid()]
    return Stack(layers)


def count_params(obj) -> int:
    """Total trainable parameters of a Stack or ModelInstance."""
    return sum(p.size for p in obj.parameters())


class ModelInstance:
    """A built architecture bound to a grid, with train-time batching.

    Owns the natively shaped views of each data split so the training
    loop can stay model-agnostic: it indexes batches, maps per-cell
    prediction gradients back to the native output shape, and clamps
    evaluation predictions into the open interval (0, 1).
    """

    def __init__(self, spec: ArchSpec, dims: GridDims,
                 rng: np.random.Generator, dtype=np.float64):
        self.spec = spec
        self.dims = dims
        self.dtype = np.dtype(dtype).type
        self.n_cells = dims.n_cells
        self.stack = _build_stack(spec, dims, rng, self.dtype)
        actual = count_params(self.stack)
        if actual != spec.param_count:
            raise BuildError(
                f"{spec.kind}: built {actual} parameters, spec says {spec.param_count}"
            )
        self._splits: dict[str, np.ndarray] = {}
        self._eval_chunk = 16

    def parameters(self):
        return self.stack.parameters()

    # -- data binding -------------------------------------------------------

    def set_data(self, train_x: np.ndarray, val_x: np.ndarray,
                 test_x: np.ndarray, eval_chunk: int = 64):
        """Bind split inputs, each (n, rows, cols, input_width)."""
        for name, x in (("train", train_x), ("val", val_x), ("test", test_x)):
            expect = (self.dims.rows, self.dims.cols, self.spec.input_width)
            if x.ndim != 4 or x.shape[1:] != expect:
                raise ValueError(f"{name} inputs must be (n, {expect[0]}, "
                                 f"{expect[1]}, {expect[2]}), got {x.shape}")
            self._splits[name] = np.ascontiguousarray(x, dtype=self.dtype)
        self._eval_chunk = eval_chunk

    # -- native shaping -----------------------------------------------------

    def _assemble(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        if self.spec.kind == "gnn":
            seq = x.reshape(b, self.n_cells, self.spec.input_width)
            return np.ascontiguousarray(seq.transpose(1, 0, 2))
        if self.spec.kind == "cnn2d":
            return x
        if self.spec.kind == "cnn1d":
            return x.reshape(b, self.n_cells, self.spec.input_width)
        cols = im2col2d(x, CONTEXT_K)
        return cols.reshape(b * self.n_cells, CONTEXT_K**2 * self.spec.input_width)

    def _flatten_output(self, y: np.ndarray, b: int) -> np.ndarray:
        if self.spec.kind == "gnn":
            return np.ascontiguousarray(y.reshape(self.n_cells, b).T)
        return y.reshape(b, self.n_cells)

    def _shape_output_grad(self, dpred: np.ndarray) -> np.ndarray:
        b = dpred.shape[0]
        if self.spec.kind == "gnn":
            return np.ascontiguousarray(dpred.T).reshape(self.n_cells, b, 1)
        if self.spec.kind == "cnn2d":
            return dpred.reshape(b, self.dims.rows, self.dims.cols, 1)
        if self.spec.kind == "cnn1d":
            return dpred.reshape(b, self.n_cells, 1)
        return dpred.reshape(b * self.n_cells, 1)

    # -- training protocol --------------------------------------------------

    def forward_train(self, idx: np.ndarray) -> np.ndarray:
        x = self._splits["train"][idx]
        y = self.stack.forward(self._assemble(x))
        return self._flatten_output(y, x.shape[0])

    def backward_train(self, dpred: np.ndarray):
        self.stack.backward(self._shape_output_grad(dpred.astype(self.dtype,
                                                                 copy=False)))

    def predict_split(self, name: str) -> np.ndarray:
        return self.predict_inputs(self._splits[name])

    # -- inference ----------------------------------------------------------

    def predict_inputs(self, x: np.ndarray) -> np.ndarray:
        """(n, rows, cols, input_width) -> (n, n_cells) probabilities.

        Outputs are float64 and clamped into [eps, 1-eps]: the sigmoid's
        codomain is the open interval, but finite precision (especially
        float32) can round saturated outputs to exactly 0 or 1.
        """
        x = np.ascontiguousarray(x, dtype=self.dtype)
        preds = np.empty((x.shape[0], self.n_cells))
        for start in range(0, x.shape[0], self._eval_chunk):
            xb = x[start:start + self._eval_chunk]
            y = self.stack.forward(self._assemble(xb))
            preds[start:start + xb.shape[0]] = self._flatten_output(y, xb.shape[0])
        return np.clip(preds, CLAMP_EPS, 1.0 - CLAMP_EPS)

    def predict_samples(self, samples) -> np.ndarray:
        """Per-cell probabilities for a sequence of dataset Samples."""
        x = np.stack([model_input(s) for s in samples])
        return self.predict_inputs(x)

    def describe(self) -> dict:
        return {
            "kind": self.spec.kind,
            "hidden_width": self.spec.hidden_width,
            "widths": list(self.spec.widths),
            "param_count": self.spec.param_count,
            "layers": list(self.spec.layer_names()),
        }


def build_model(kind: str, dims: GridDims, rng: np.random.Generator,
                dtype=np.float64, input_width: int = MODEL_INPUT_DIM,
                budget: tuple[int, int] = DEFAULT_BUDGET) -> ModelInstance:
    """Build the budgeted architecture of a kind and bind it to a grid."""
    return ModelInstance(build(kind, input_width, budget), dims, rng, dtype)


# -- parameter serialization ------------------------------------------------

def export_params(model: ModelInstance) -> dict:
    """Model parameters as a JSON-ready record (shape-tagged flat arrays)."""
    return {
        "kind": model.spec.kind,
        "widths": list(model.spec.widths),
        "param_count": model.spec.param_count,
        "dtype": np.dtype(model.dtype).name,
        "params": [
            {"name": f"{i}.{p.name}", "shape": list(p.data.shape),
             "data": [float(v) for v in p.data.reshape(-1)]}
            for i, p in enumerate(model.parameters())
        ],
    }


def import_params(model: ModelInstance, doc: dict):
    """Load parameters exported by export_params into a matching model."""
    if doc.get("kind") != model.spec.kind or list(doc.get("widths", [])) != list(model.spec.widths):
        raise ValueError("parameter record does not match this architecture")
    params = model.parameters()
    if len(doc["params"]) != len(params):
        raise ValueError(f"expected {len(params)} parameter arrays, "
                         f"got {len(doc['params'])}")
    for p, rec in zip(params, doc["params"]):
        data = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        if tuple(data.shape) != p.data.shape:
            raise ValueError(f"shape mismatch for {rec['name']}: "
                             f"{data.shape} vs {p.data.shape}")
        p.data[...] = data.astype(p.data.dtype)
