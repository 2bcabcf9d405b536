"""Experiment orchestration and artifact writing.

Training-grid tests run real (small) training on synthetic samples over a
3x4 grid; artifact tests exercise the writers with both real and
hand-built outcomes, including byte-for-byte determinism of a full run
directory written twice.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from parkpref.config import parse_config
from parkpref.errors import ConfigError, TrainingDiverged
from parkpref.metrics import GsRecord
from parkpref.nncore.train import EpochRecord, TrainResult
from parkpref.results import (
    OVERALL_LABEL,
    curve_points,
    render_curve_svg,
    render_gs_svg,
    render_report,
    write_run_dir,
)
from parkpref.runner import (
    STATUS_DIVERGED,
    STATUS_FINISHED,
    ExperimentResult,
    RunKey,
    RunOutcome,
    dataset_path,
    read_datasets,
    run_experiment,
    run_keys,
    write_datasets,
)

from test_dataset import synth_sample

AGENTS = ("A", "B", "C")
LAYOUT_DIR = Path(__file__).resolve().parents[1] / "src" / "parkpref" / "data" / "layouts"


def small_config(**train_overrides):
    train = {"epochs": 2, "batch_size": 8, "dtype": "float64"}
    train.update(train_overrides)
    raw = {
        "layouts": [str(LAYOUT_DIR / f"layout{i}.json") for i in (1, 2, 3, 4)],
        "profiles": [
            {"id": pid, "weights": {"light": 1.0},
             "activity_mix": {"sit": 1.0}}
            for pid in AGENTS
        ],
        "seed": 5,
        "train": train,
        "val_fraction": 0.25,
    }
    return parse_config(raw, LAYOUT_DIR)


def synth_samples_by_layout(n_layouts=3, per_agent=4, rows=3, cols=4):
    """Random-feature samples over a tiny grid, one positive per sample."""
    rng = np.random.default_rng(17)
    out = {}
    for lid in range(1, n_layouts + 1):
        samples = []
        for agent in AGENTS:
            for k in range(per_agent):
                samples.append(synth_sample(
                    layout_id=lid, agent_id=agent, rows=rows, cols=cols,
                    label_index=int(rng.integers(0, rows * cols)), rng=rng,
                ))
        out[lid] = samples
    return out


class TestRunKeys:
    def test_canonical_order_is_model_fold_agent(self):
        keys = run_keys(["gnn", "mlp"], [1, 2], ["A", "B"])
        assert keys[:4] == [
            RunKey("gnn", 1, "A"), RunKey("gnn", 1, "B"),
            RunKey("gnn", 2, "A"), RunKey("gnn", 2, "B"),
        ]
        assert keys[4].model == "mlp"
        assert [k.sort_index() for k in keys] == sorted(k.sort_index() for k in keys)

    def test_str_form(self):
        assert str(RunKey("cnn2d", 3, "B")) == "cnn2d/fold3/agent-B"


class TestDatasetFiles:
    def test_write_then_read_round_trip(self, tmp_path):
        samples = synth_samples_by_layout(n_layouts=2, per_agent=2)
        paths = write_datasets(samples, tmp_path)
        assert [p.name for p in paths] == [
            "dataset_layout1.jsonl", "dataset_layout2.jsonl",
        ]
        again = read_datasets(tmp_path, [1, 2])
        assert sorted(again) == [1, 2]
        for lid in (1, 2):
            assert len(again[lid]) == len(samples[lid])
            assert [s.meta.agent_id for s in again[lid]] == [
                s.meta.agent_id for s in samples[lid]
            ]

    def test_missing_file_names_the_simulate_step(self, tmp_path):
        with pytest.raises(ConfigError, match="run the simulate step first"):
            read_datasets(tmp_path, [1])

    def test_dataset_path_template(self, tmp_path):
        assert dataset_path(tmp_path, 3).name == "dataset_layout3.jsonl"


class TestRunExperiment:
    def test_small_grid_runs_and_scores(self):
        cfg = small_config()
        samples = synth_samples_by_layout()
        seen = []
        result = run_experiment(cfg, samples, models=["mlp"], folds=[1, 2],
                                agents=["A", "B"], progress=seen.append)
        assert [o.key for o in result.outcomes] == run_keys(
            ["mlp"], [1, 2], ["A", "B"])
        assert result.fold_test_layouts == {1: 1, 2: 2, 3: 3}
        assert len(seen) == 4
        for o in result.outcomes:
            assert o.status == STATUS_FINISHED
            assert 1 <= o.epochs_run <= cfg.train.epochs
            assert len(o.history) == o.epochs_run
            rec = o.gs_record
            assert rec is not None
            assert rec.gs == pytest.approx(rec.test_auprc / rec.avg_val_auprc)
            assert 0.0 < rec.avg_val_auprc <= 1.0
        summary = result.summary()
        assert summary.models() == ["mlp"]
        assert summary.folds("mlp") == [1, 2]

    def test_rerunning_a_subset_reproduces_the_grid_cell(self):
        cfg = small_config()
        samples = synth_samples_by_layout()
        full = run_experiment(cfg, samples, models=["mlp"], folds=[1, 2],
                              agents=["A", "B"])
        sub = run_experiment(cfg, samples, models=["mlp"], folds=[2],
                             agents=["B"])
        want = next(o for o in full.outcomes
                    if o.key == RunKey("mlp", 2, "B"))
        got = sub.outcomes[0]
        assert got.gs_record.gs == want.gs_record.gs
        assert got.history == want.history

    def test_parallel_equals_serial(self, tmp_path):
        cfg = small_config()
        samples = synth_samples_by_layout()
        write_datasets(samples, tmp_path)
        serial = run_experiment(cfg, samples, models=["mlp"], folds=[1, 2],
                                agents=["A"])
        parallel = run_experiment(cfg, samples, models=["mlp"], folds=[1, 2],
                                  agents=["A"], jobs=2, datasets_dir=tmp_path)
        for s, p in zip(serial.outcomes, parallel.outcomes):
            assert s.key == p.key
            assert s.history == p.history
            assert s.gs_record == p.gs_record

    def test_parallel_requires_dataset_dir(self):
        cfg = small_config()
        samples = synth_samples_by_layout()
        with pytest.raises(ConfigError, match="requires the dataset directory"):
            run_experiment(cfg, samples, jobs=2)

    def test_unknown_selector_rejected(self):
        cfg = small_config()
        samples = synth_samples_by_layout()
        with pytest.raises(ConfigError, match="unknown models"):
            run_experiment(cfg, samples, models=["resnet"])
        with pytest.raises(ConfigError, match="unknown folds"):
            run_experiment(cfg, samples, models=["mlp"], folds=[9])
        with pytest.raises(ConfigError, match="unknown agents"):
            run_experiment(cfg, samples, models=["mlp"], agents=["Z"])

    def test_missing_agent_samples_is_an_error(self):
        cfg = small_config()
        samples = synth_samples_by_layout()
        samples[1] = [s for s in samples[1] if s.meta.agent_id != "B"]
        with pytest.raises(ConfigError, match="no test samples for agent 'B'"):
            run_experiment(cfg, samples, models=["mlp"], folds=[1], agents=["B"])

    def test_diverged_run_is_recorded_not_raised(self, monkeypatch):
        cfg = small_config()
        samples = synth_samples_by_layout()

        def explode(*args, **kwargs):
            exc = TrainingDiverged("loss became non-finite at epoch 1")
            exc.result = TrainResult(
                history=[EpochRecord(1, float("nan"), 1.0, 0.1, 0.1, 0.5)],
                best_epoch=0, epochs_run=1,
            )
            raise exc

        monkeypatch.setattr("parkpref.runner.train", explode)
        result = run_experiment(cfg, samples, models=["mlp"], folds=[1],
                                agents=["A"])
        outcome = result.outcomes[0]
        assert outcome.status == STATUS_DIVERGED
        assert outcome.gs_record is None
        assert "non-finite" in outcome.error
        assert outcome.epochs_run == 1
        assert result.summary().records == ()

    def test_save_params_writes_a_file_per_run(self, tmp_path):
        cfg = small_config()
        samples = synth_samples_by_layout()
        run_experiment(cfg, samples, models=["mlp"], folds=[1], agents=["A"],
                       save_params_dir=tmp_path)
        path = tmp_path / "params_mlp_fold1_A.json"
        assert path.is_file()
        record = json.loads(path.read_text())
        assert record["run"] == {"model": "mlp", "fold": 1, "agent": "A"}
        assert record["kind"] == "mlp"


# -- artifact writers -------------------------------------------------------


def fake_outcome(model, fold, agent, gs_value, epochs=3, status=STATUS_FINISHED):
    history = tuple(
        EpochRecord(epoch=e, train_loss=1.0 / e, val_loss=0.9 / e,
                    val_auprc=0.2 + 0.01 * e, test_auprc=0.1 * gs_value + 0.01 * e,
                    roc_auc=0.8)
        for e in range(1, epochs + 1)
    )
    record = None
    if status == STATUS_FINISHED:
        record = GsRecord(model=model, fold=fold, test_layout=fold,
                          agent=agent, test_auprc=0.3 * gs_value,
                          avg_val_auprc=0.3, gs=gs_value)
    return RunOutcome(key=RunKey(model, fold, agent), status=status,
                      test_layout=fold, history=history,
                      best_epoch=epochs if record else 0, epochs_run=epochs,
                      gs_record=record,
                      error=None if record else "loss became non-finite")


def fake_result(gs_by_model, folds=(1, 2), epochs=3):
    outcomes = []
    for model, base in gs_by_model.items():
        for fold in folds:
            for i, agent in enumerate(AGENTS):
                outcomes.append(fake_outcome(
                    model, fold, agent, base + 0.05 * i, epochs=epochs))
    return ExperimentResult(
        outcomes=outcomes,
        fold_test_layouts={f: f for f in folds},
    )


class TestArtifacts:
    def test_results_csv_one_row_per_epoch(self, tmp_path):
        result = fake_result({"gnn": 0.7}, folds=(1,), epochs=4)
        out = write_run_dir(tmp_path, small_config(), result)
        with open(out / "results.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 3 * 4  # agents x epochs
        assert rows[0]["model"] == "gnn"
        assert float(rows[0]["train_loss"]) == 1.0
        assert rows[0]["epoch"] == "1"

    def test_gs_summary_has_fold_and_overall_rows(self, tmp_path):
        result = fake_result({"gnn": 0.7, "mlp": 0.4})
        out = write_run_dir(tmp_path, small_config(), result)
        with open(out / "gs_summary.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        by_model = {}
        for row in rows:
            by_model.setdefault(row["model"], []).append(row["test_layout"])
        assert by_model == {"gnn": ["1", "2", OVERALL_LABEL],
                            "mlp": ["1", "2", OVERALL_LABEL]}
        overall = {r["model"]: float(r["gs_auprc"]) for r in rows
                   if r["test_layout"] == OVERALL_LABEL}
        assert overall["gnn"] == pytest.approx(0.75)
        assert overall["mlp"] == pytest.approx(0.45)

    def test_curve_points_aggregate_agents(self):
        result = fake_result({"cnn2d": 0.6}, folds=(1,), epochs=2)
        # stagger: agent C's run ends after epoch 1
        short = fake_outcome("cnn2d", 1, "C", 0.7, epochs=1)
        result.outcomes[-1] = short
        points = curve_points(result.outcomes, "cnn2d")
        assert [(p[0], p[1], p[4]) for p in points] == [(1, 1, 3), (1, 2, 2)]
        epoch1 = [o.history[0].test_auprc for o in result.outcomes]
        assert points[0][2] == pytest.approx(np.mean(epoch1))
        assert points[0][3] == pytest.approx(np.std(epoch1))

    def test_curve_svg_renders_series_and_legend(self):
        result = fake_result({"cnn1d": 0.5})
        svg = render_curve_svg(result.outcomes, "cnn1d")
        assert svg.startswith("<svg ")
        assert svg.count("<polyline") == 2  # one mean line per test layout
        assert "test layout 1" in svg and "test layout 2" in svg
        assert "cnn1d" in svg

    def test_curve_svg_requires_runs(self):
        result = fake_result({"mlp": 0.4})
        with pytest.raises(ConfigError, match="no finished runs"):
            render_curve_svg(result.outcomes, "gnn")

    def test_gs_svg_renders_bar_groups(self):
        result = fake_result({"gnn": 0.7, "mlp": 0.4})
        svg = render_gs_svg(result.summary())
        # per model: one bar per fold + overall; plus legend swatches
        assert svg.count("<rect") >= 2 * 3
        assert OVERALL_LABEL in svg
        with pytest.raises(ConfigError, match="no finished runs"):
            render_gs_svg(type(result.summary())(records=()))

    def test_run_dir_contains_all_artifacts(self, tmp_path):
        result = fake_result({"gnn": 0.7, "cnn2d": 0.65, "cnn1d": 0.5,
                              "mlp": 0.4})
        out = write_run_dir(tmp_path / "run", small_config(), result)
        names = sorted(p.name for p in out.iterdir())
        assert names == [
            "curve_cnn1d.csv", "curve_cnn1d.svg", "curve_cnn2d.csv",
            "curve_cnn2d.svg", "curve_gnn.csv", "curve_gnn.svg",
            "curve_mlp.csv", "curve_mlp.svg", "gs_summary.csv",
            "gs_summary.svg", "results.csv", "run_meta.json",
        ]

    def test_run_meta_echoes_config_and_models(self, tmp_path):
        cfg = small_config()
        result = fake_result({"gnn": 0.7})
        out = write_run_dir(tmp_path, cfg, result)
        meta = json.loads((out / "run_meta.json").read_text())
        assert meta["config"]["seed"] == cfg.seed
        assert meta["kernel_backend"] in ("c", "python")
        kinds = {m["kind"]: m for m in meta["models"]}
        assert set(kinds) == {"gnn", "cnn2d", "cnn1d", "mlp"}
        for m in kinds.values():
            assert 74000 <= m["param_count"] <= 76000
        assert meta["fold_test_layouts"] == {"1": 1, "2": 2}
        assert all(r["status"] == STATUS_FINISHED for r in meta["runs"])

    def test_write_run_dir_is_byte_deterministic(self, tmp_path):
        cfg = small_config()
        result = fake_result({"gnn": 0.7, "mlp": 0.4})
        out1 = write_run_dir(tmp_path / "a", cfg, result)
        out2 = write_run_dir(tmp_path / "b", cfg, result)
        files1 = sorted(p.name for p in out1.iterdir())
        assert files1 == sorted(p.name for p in out2.iterdir())
        for name in files1:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestReport:
    def test_report_states_trend_and_ordering(self, tmp_path):
        result = fake_result({"gnn": 0.7, "cnn2d": 0.65, "cnn1d": 0.5,
                              "mlp": 0.4})
        out = write_run_dir(tmp_path, small_config(), result)
        text = render_report(out)
        assert "Generalizability report" in text
        assert "(cnn1d, mlp) on Overall_Avg: yes" in text
        assert "Observed ordering: gnn (0.7500) > cnn2d (0.7000) > " \
               "cnn1d (0.5500) > mlp (0.4500)" in text
        assert "all expected runs finished" in text

    def test_report_flags_broken_trend(self, tmp_path):
        result = fake_result({"gnn": 0.4, "cnn2d": 0.65, "cnn1d": 0.5,
                              "mlp": 0.7})
        out = write_run_dir(tmp_path, small_config(), result)
        text = render_report(out)
        assert "on Overall_Avg: NO" in text
        assert "Observed ordering: mlp" in text

    def test_report_lists_diverged_and_gap_runs(self, tmp_path):
        result = fake_result({"gnn": 0.7, "cnn2d": 0.65, "cnn1d": 0.5,
                              "mlp": 0.4}, folds=(1, 2))
        result.outcomes[0] = fake_outcome("gnn", 1, "A", 0.7,
                                          status=STATUS_DIVERGED)
        del result.outcomes[-1]  # mlp fold 2 agent C never ran
        out = write_run_dir(tmp_path, small_config(), result)
        text = render_report(out)
        assert "DIVERGED: gnn fold 1 agent A" in text
        assert "GAP (never ran): mlp fold 2 agent C" in text
        assert "Runs recorded: 23 of 24 expected" in text

    def test_report_missing_directory(self, tmp_path):
        with pytest.raises(ConfigError, match="missing"):
            render_report(tmp_path / "nowhere")
