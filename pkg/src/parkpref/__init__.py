"""parkpref: a synthetic benchmark for spatial-preference models.

The package simulates rule-based agents choosing cells in small
grid-discretized park layouts, turns the simulated choices into supervised
datasets, trains four small neural architectures on them with a
from-scratch reverse-mode core, and scores scenario-based generalization
as the ratio of held-out-layout AUPRC to seen-layout validation AUPRC.

The five public layers, bottom to top:

- :mod:`parkpref.layout`, :mod:`parkpref.envdyn`, :mod:`parkpref.features`
  — static park geometry, sun/shadow/temperature dynamics, per-cell
  feature tensors.
- :mod:`parkpref.agentsim`, :mod:`parkpref.dataset` — rule-based choice
  simulation and the labeled, augmented, fold-split datasets.
- :mod:`parkpref.nncore`, :mod:`parkpref.models` — the reverse-mode NN
  core (with compiled and pure-NumPy kernel backends) and the four
  budget-matched architectures.
- :mod:`parkpref.metrics` — exact ROC/PR metrics and the
  generalizability ratio.
- :mod:`parkpref.config`, :mod:`parkpref.runner`, :mod:`parkpref.results`,
  :mod:`parkpref.cli` — experiment configuration, the LOOCV grid, artifact
  writers, and the command-line front end.
"""

__version__ = "0.1.0"

from .agentsim import (
    Activity,
    AgentProfile,
    ChoiceEvent,
    simulate_layout,
)
from .config import (
    ExperimentConfig,
    canonical_config,
    load_config,
)
from .dataset import (
    MODEL_INPUT_DIM,
    Fold,
    Sample,
    augment,
    build_folds,
    model_input,
    read_dataset,
    samples_from_events,
    write_dataset,
)
from .envdyn import (
    EnvField,
    SunState,
    env_field,
    shadow_map,
    sun_state,
)
from .errors import (
    BuildError,
    ConfigError,
    MetricError,
    ParkPrefError,
    TrainingDiverged,
)
from .features import (
    FEATURE_DIM,
    SCHEMA,
    FeatureSchema,
    FeatureTensor,
    encode_features,
)
from .layout import (
    CANONICAL_DIMS,
    Cell,
    ElementKind,
    GridDims,
    Layout,
    LayoutError,
    Transform,
    compose,
    load_layout,
    load_layout_file,
    neighbors8,
    transform,
    transform_grid,
    transform_index,
    transform_layout,
)
from .metrics import (
    GsRecord,
    GsSummary,
    auprc,
    gs,
    layout_mean_auprc,
    pooled_auprc,
    roc_auc,
)
from .models import (
    MODEL_KINDS,
    ArchSpec,
    ModelInstance,
    build,
    build_model,
    count_params,
    export_params,
    import_params,
)
from .results import render_report, write_run_dir
from .runner import (
    ExperimentResult,
    RunKey,
    RunOutcome,
    run_experiment,
    simulate_experiment,
)
from .seeding import stream

__all__ = [
    "Activity",
    "AgentProfile",
    "ArchSpec",
    "augment",
    "auprc",
    "build",
    "build_folds",
    "build_model",
    "BuildError",
    "canonical_config",
    "CANONICAL_DIMS",
    "Cell",
    "ChoiceEvent",
    "compose",
    "ConfigError",
    "count_params",
    "ElementKind",
    "encode_features",
    "env_field",
    "EnvField",
    "ExperimentConfig",
    "ExperimentResult",
    "export_params",
    "FEATURE_DIM",
    "FeatureSchema",
    "FeatureTensor",
    "Fold",
    "GridDims",
    "gs",
    "GsRecord",
    "GsSummary",
    "import_params",
    "Layout",
    "layout_mean_auprc",
    "LayoutError",
    "load_config",
    "load_layout",
    "load_layout_file",
    "MetricError",
    "model_input",
    "MODEL_INPUT_DIM",
    "MODEL_KINDS",
    "ModelInstance",
    "neighbors8",
    "ParkPrefError",
    "pooled_auprc",
    "read_dataset",
    "render_report",
    "roc_auc",
    "run_experiment",
    "RunKey",
    "RunOutcome",
    "Sample",
    "samples_from_events",
    "SCHEMA",
    "shadow_map",
    "simulate_experiment",
    "simulate_layout",
    "stream",
    "sun_state",
    "SunState",
    "TrainingDiverged",
    "Transform",
    "transform",
    "transform_grid",
    "transform_index",
    "transform_layout",
    "write_dataset",
    "write_run_dir",
    "__version__",
]
