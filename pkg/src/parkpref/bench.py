"""Backend benchmark: compiled kernels versus the pure-NumPy fallback.

Times the three data-movement kernels at training shapes, checks that
the backends agree bit for bit, and times a short training slice of each
architecture under each backend.
"""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .layout import CANONICAL_DIMS
from .models import MODEL_KINDS, build_model
from .nncore import kernels
from .nncore.train import SplitData, TrainConfig, train

# (name, make_args, call) at the canonical training shapes.
_KERNEL_CASES = (
    ("im2col2d (16,28,20,59) k=3",
     lambda rng: (rng.random((16, 28, 20, 59), dtype=np.float32), 3),
     lambda impl, args: impl["im2col2d"](*args)),
    ("im2col1d (16,560,146) k=3",
     lambda rng: (rng.random((16, 560, 146), dtype=np.float32), 3),
     lambda impl, args: impl["im2col1d"](*args)),
    ("boxsum3x3 (28,20,2128)",
     lambda rng: (rng.random((28, 20, 2128), dtype=np.float32),),
     lambda impl, args: impl["boxsum3x3"](*args)),
)


def _time(fn: Callable, repeats: int) -> float:
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats: int = 20, seed: int = 0) -> list[dict]:
    """Per-kernel timings for every available backend, plus parity."""
    rows = []
    backends = kernels.available_backends()
    for name, make_args, call in _KERNEL_CASES:
        rng = np.random.default_rng(seed)
        args = make_args(rng)
        outputs = {b: call(kernels.IMPLEMENTATIONS[b], args)
                   for b in backends}
        ref = outputs[backends[0]]
        identical = all(
            out.shape == ref.shape and out.dtype == ref.dtype
            and np.array_equal(out, ref, equal_nan=True)
            and not np.bitwise_xor(out.view(np.uint32 if out.dtype ==
                                            np.float32 else np.uint64),
                                   ref.view(np.uint32 if ref.dtype ==
                                            np.float32 else np.uint64)).any()
            for out in outputs.values()
        )
        timings = {b: _time(lambda b=b: call(kernels.IMPLEMENTATIONS[b], args),
                            repeats)
                   for b in backends}
        rows.append({"kernel": name, "timings": timings,
                     "bit_identical": identical})
    return rows


def _synthetic_splits(rng: np.random.Generator):
    dims = CANONICAL_DIMS
    n_cells = dims.n_cells

    def split(n):
        x = rng.random((n, dims.rows, dims.cols, 22))
        labels = np.zeros((n, n_cells))
        labels[np.arange(n), rng.integers(0, n_cells, n)] = 1.0
        ids = np.array([i % 3 + 1 for i in range(n)])
        return x, SplitData(labels=labels, layout_ids=ids)

    return split(64), split(24), split(40)


def bench_training(epochs: int = 2, seed: int = 0) -> list[dict]:
    """Per-model epoch timings under each backend (synthetic data)."""
    rows = []
    saved = kernels.get_backend()
    try:
        for kind in MODEL_KINDS:
            timings = {}
            for backend in kernels.available_backends():
                kernels.set_backend(backend)
                rng = np.random.default_rng(seed)
                (trx, tr), (vax, va), (tex, te) = _synthetic_splits(rng)
                model = build_model(kind, CANONICAL_DIMS,
                                    np.random.default_rng(seed + 1),
                                    dtype=np.float32)
                model.set_data(trx, vax, tex)
                cfg = TrainConfig(epochs=epochs, dtype="float32")
                t0 = time.perf_counter()
                train(model, tr, va, te, cfg, np.random.default_rng(seed + 2))
                timings[backend] = (time.perf_counter() - t0) / epochs
            rows.append({"model": kind, "timings": timings})
    finally:
        kernels.set_backend(saved)
    return rows


def render_bench(repeats: int = 20, train_epochs: int = 2) -> str:
    backends = kernels.available_backends()
    lines = [
        "Kernel backend comparison",
        "=========================",
        f"available backends: {', '.join(backends)} "
        f"(active: {kernels.get_backend()})",
        "",
    ]
    if len(backends) == 1:
        lines.append("compiled extension not importable; "
                     "only the NumPy fallback was benchmarked")
        lines.append("")

    header = ["kernel"] + [f"{b} (ms)" for b in backends] + ["bit-identical"]
    rows = [header]
    for row in bench_kernels(repeats=repeats):
        rows.append([row["kernel"]]
                    + [f"{row['timings'][b] * 1e3:.3f}" for b in backends]
                    + ["yes" if row["bit_identical"] else "NO"])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines += ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()
              for r in rows]

    lines.append("")
    lines.append(f"Training slice ({train_epochs} epochs, synthetic data, "
                 "seconds per epoch)")
    header = ["model"] + [f"{b} (s)" for b in backends]
    rows = [header]
    for row in bench_training(epochs=train_epochs):
        rows.append([row["model"]]
                    + [f"{row['timings'][b]:.3f}" for b in backends])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines += ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()
              for r in rows]
    return "\n".join(lines) + "\n"
