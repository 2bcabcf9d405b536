"""Orchestration of the leave-one-layout-out training grid.

One experiment is a grid of independent training runs, one per
(model kind, fold, agent): the model sees only that agent's choices, the
fold decides which layout is held out, and every run draws its own RNG
streams from the experiment seed, so any subset of the grid can be run
(or re-run, in any order or in parallel) with identical results.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .agentsim import check_affordances, simulate_layout
from .config import ExperimentConfig
from .dataset import (
    Fold,
    Sample,
    build_folds,
    model_input,
    read_dataset,
    write_dataset,
)
from .errors import ConfigError, TrainingDiverged
from .layout import GridDims, Layout, load_layout_file
from .metrics import GsRecord, GsSummary, gs, layout_mean_auprc
from .models import MODEL_KINDS, build_model, export_params
from .nncore.train import (
    EpochRecord,
    SplitData,
    TrainResult,
    group_by_layout,
    train,
)
from .seeding import stream

DATASET_FILE_TEMPLATE = "dataset_layout{layout_id}.jsonl"

STATUS_FINISHED = "finished"
STATUS_DIVERGED = "diverged"


@dataclass(frozen=True)
class RunKey:
    """Identity of one training run within the experiment grid."""

    model: str
    fold: int
    agent: str

    def sort_index(self) -> tuple:
        return (MODEL_KINDS.index(self.model), self.fold, self.agent)

    def __str__(self):
        return f"{self.model}/fold{self.fold}/agent-{self.agent}"


@dataclass
class RunOutcome:
    """Everything one training run produced."""

    key: RunKey
    status: str
    test_layout: int
    history: tuple[EpochRecord, ...] = ()
    best_epoch: int = 0
    epochs_run: int = 0
    gs_record: Optional[GsRecord] = None
    error: Optional[str] = None


@dataclass
class ExperimentResult:
    """Outcomes of the requested grid, in canonical run order."""

    outcomes: list[RunOutcome] = field(default_factory=list)
    fold_test_layouts: dict[int, int] = field(default_factory=dict)

    def summary(self) -> GsSummary:
        records = tuple(o.gs_record for o in self.outcomes
                        if o.gs_record is not None)
        return GsSummary(records=records)


# -- dataset plumbing -------------------------------------------------------


def load_layouts(cfg: ExperimentConfig) -> list[Layout]:
    """Load, affordance-check, and dimension-check the configured layouts."""
    cfg.check_paths()
    layouts = [load_layout_file(p) for p in cfg.layouts]
    ids = [lay.id for lay in layouts]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate layout ids in config: {ids}")
    dims = {lay.dims for lay in layouts}
    if len(dims) != 1:
        raise ConfigError(f"layouts must share grid dimensions, got {dims}")
    for lay in layouts:
        check_affordances(lay)
    return layouts


def simulate_experiment(cfg: ExperimentConfig) -> dict[int, list]:
    """Run the configured simulation on every layout: {layout_id: events}."""
    events = {}
    for lay in load_layouts(cfg):
        events[lay.id] = simulate_layout(
            lay, cfg.profiles, cfg.seed, tau=cfg.tau,
            events_per_agent=cfg.events_per_agent, hours=cfg.hours,
        )
    return events


def dataset_path(directory, layout_id: int) -> Path:
    return Path(directory) / DATASET_FILE_TEMPLATE.format(layout_id=layout_id)


def write_datasets(samples_by_layout: Mapping[int, Sequence[Sample]],
                   directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for layout_id in sorted(samples_by_layout):
        path = dataset_path(directory, layout_id)
        write_dataset(path, samples_by_layout[layout_id])
        paths.append(path)
    return paths


def read_datasets(directory, layout_ids: Sequence[int]) -> dict[int, list[Sample]]:
    """Load the per-layout dataset files written by the simulate step."""
    missing = [str(dataset_path(directory, lid)) for lid in layout_ids
               if not dataset_path(directory, lid).is_file()]
    if missing:
        raise ConfigError(
            "missing dataset files (run the simulate step first): "
            + ", ".join(missing)
        )
    return {lid: read_dataset(dataset_path(directory, lid))
            for lid in layout_ids}


# -- single run -------------------------------------------------------------


def _filter_agent(samples: Sequence[Sample], agent: str) -> list[Sample]:
    return [s for s in samples if s.meta.agent_id == agent]


def _split_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, SplitData]:
    x = np.stack([model_input(s) for s in samples])
    labels = np.stack([s.label.reshape(-1) for s in samples])
    layout_ids = np.array([s.meta.layout_id for s in samples])
    return x, SplitData(labels=labels, layout_ids=layout_ids)


def run_single(cfg: ExperimentConfig, fold: Fold, key: RunKey,
               save_params_dir=None) -> RunOutcome:
    """Train one (model, fold, agent) cell of the grid and score it."""
    subsets = {name: _filter_agent(getattr(fold, name), key.agent)
               for name in ("train", "val", "test")}
    for name, subset in subsets.items():
        if not subset:
            raise ConfigError(
                f"run {key}: no {name} samples for agent {key.agent!r}"
            )
    train_x, train_data = _split_arrays(subsets["train"])
    val_x, val_data = _split_arrays(subsets["val"])
    test_x, test_data = _split_arrays(subsets["test"])

    model_idx = MODEL_KINDS.index(key.model)
    first = subsets["train"][0]
    dims = GridDims(rows=first.features.rows, cols=first.features.cols)
    inst = build_model(
        key.model, dims,
        stream(cfg.seed, "model-init", model_idx, key.fold, key.agent),
        dtype=cfg.train.np_dtype,
    )
    inst.set_data(train_x, val_x, test_x)

    outcome = RunOutcome(key=key, status=STATUS_FINISHED,
                         test_layout=fold.plan.test_layout)
    try:
        result = train(
            inst, train_data, val_data, test_data, cfg.train,
            stream(cfg.seed, "train-shuffle", model_idx, key.fold, key.agent),
        )
    except TrainingDiverged as exc:
        partial: TrainResult = getattr(exc, "result", TrainResult())
        outcome.status = STATUS_DIVERGED
        outcome.error = str(exc)
        outcome.history = tuple(partial.history)
        outcome.best_epoch = partial.best_epoch
        outcome.epochs_run = partial.epochs_run
        return outcome

    outcome.history = tuple(result.history)
    outcome.best_epoch = result.best_epoch
    outcome.epochs_run = result.epochs_run

    # Score the restored best-epoch parameters.
    val_pred = inst.predict_split("val")
    test_pred = inst.predict_split("test")
    avg_val = layout_mean_auprc(group_by_layout(val_pred, val_data))
    test_auprc = layout_mean_auprc(group_by_layout(test_pred, test_data))
    outcome.gs_record = GsRecord(
        model=key.model, fold=key.fold, test_layout=fold.plan.test_layout,
        agent=key.agent, test_auprc=test_auprc, avg_val_auprc=avg_val,
        gs=gs(test_auprc, avg_val),
    )

    if save_params_dir is not None:
        path = Path(save_params_dir)
        path.mkdir(parents=True, exist_ok=True)
        import json

        record = export_params(inst)
        record["run"] = {"model": key.model, "fold": key.fold,
                         "agent": key.agent}
        with open(path / f"params_{key.model}_fold{key.fold}_{key.agent}.json",
                  "w", encoding="utf-8") as f:
            json.dump(record, f)
    return outcome


# -- the grid ---------------------------------------------------------------


def run_keys(models: Sequence[str], folds: Sequence[int],
             agents: Sequence[str]) -> list[RunKey]:
    """Canonical run order: model kind, then fold, then agent."""
    return [RunKey(model=m, fold=f, agent=a)
            for m in models for f in folds for a in agents]


def _select(requested: Optional[Sequence], available: Sequence,
            what: str) -> list:
    if requested is None:
        return list(available)
    unknown = [r for r in requested if r not in available]
    if unknown:
        raise ConfigError(f"unknown {what}: {unknown}; available: "
                          f"{list(available)}")
    return [a for a in available if a in requested]


# Worker state for --jobs parallelism: each worker process rebuilds the
# folds once from the dataset files, then handles bare RunKeys.
_WORKER: dict = {}


def _worker_init(cfg: ExperimentConfig, datasets_dir: str,
                 layout_ids: tuple, save_params_dir):
    samples = read_datasets(datasets_dir, layout_ids)
    folds = build_folds(samples, cfg.val_fraction, cfg.seed)
    _WORKER["cfg"] = cfg
    _WORKER["folds"] = {f.plan.fold_id: f for f in folds}
    _WORKER["save_params_dir"] = save_params_dir


def _worker_run(key: RunKey) -> RunOutcome:
    return run_single(_WORKER["cfg"], _WORKER["folds"][key.fold], key,
                      _WORKER["save_params_dir"])


def run_experiment(cfg: ExperimentConfig,
                   samples_by_layout: Mapping[int, Sequence[Sample]],
                   models: Optional[Sequence[str]] = None,
                   folds: Optional[Sequence[int]] = None,
                   agents: Optional[Sequence[str]] = None,
                   jobs: int = 1,
                   datasets_dir=None,
                   save_params_dir=None,
                   progress: Optional[Callable[[str], None]] = None,
                   ) -> ExperimentResult:
    """Run the (possibly filtered) grid and return outcomes in run order.

    `jobs > 1` distributes runs over worker processes; workers rebuild
    identical folds from the dataset files in `datasets_dir`, and results
    are merged by run key, so parallel and serial execution produce the
    same artifacts.
    """
    all_folds = build_folds(samples_by_layout, cfg.val_fraction, cfg.seed)
    by_fold = {f.plan.fold_id: f for f in all_folds}
    agent_ids = [p.id for p in cfg.profiles]

    models = _select(models, MODEL_KINDS, "models")
    folds = _select(folds, sorted(by_fold), "folds")
    agents = _select(agents, agent_ids, "agents")
    keys = run_keys(models, folds, agents)

    result = ExperimentResult(
        fold_test_layouts={f.plan.fold_id: f.plan.test_layout
                           for f in all_folds},
    )

    def note(outcome: RunOutcome, i: int):
        if progress is None:
            return
        if outcome.status == STATUS_FINISHED:
            progress(
                f"[{i}/{len(keys)}] {outcome.key}: {outcome.epochs_run} epochs"
                f" (best {outcome.best_epoch}), GS {outcome.gs_record.gs:.4f}"
            )
        else:
            progress(f"[{i}/{len(keys)}] {outcome.key}: DIVERGED "
                     f"({outcome.error})")

    if jobs <= 1:
        for i, key in enumerate(keys, start=1):
            outcome = run_single(cfg, by_fold[key.fold], key, save_params_dir)
            note(outcome, i)
            result.outcomes.append(outcome)
        return result

    if datasets_dir is None:
        raise ConfigError("parallel execution requires the dataset directory")
    ctx = multiprocessing.get_context("spawn")
    layout_ids = tuple(sorted(samples_by_layout))
    with ctx.Pool(
        processes=jobs, initializer=_worker_init,
        initargs=(cfg, str(datasets_dir), layout_ids, save_params_dir),
    ) as pool:
        by_key = {}
        for i, outcome in enumerate(pool.imap_unordered(_worker_run, keys),
                                    start=1):
            note(outcome, i)
            by_key[outcome.key] = outcome
    result.outcomes = [by_key[k] for k in keys]
    return result
