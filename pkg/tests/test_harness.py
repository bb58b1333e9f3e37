import json

import pandas as pd
import pytest

from cogmask.cli.main import main
from cogmask.core.constants import CSV_SCHEMA_VERSION
from cogmask.schemas.configs import ExperimentConfig
from cogmask.schemas.records import EtaSweepRow, MisspecRow, Type1Row
from cogmask.services.dataset_io import save_dataset
from cogmask.services.experiments import run_experiment


def _config(tmp_path, **values):
    values.setdefault("output_dir", str(tmp_path / "out"))
    return ExperimentConfig.model_validate(values)


class TestEtaSweepExperiment:
    @pytest.fixture
    def settings(self):
        return dict(
            experiment="mask-eta-sweep-waveform",
            seed=4,
            K=4,
            m=2,
            multi_starts=2,
            eta=[0.0, 0.25, 0.5, 0.75, 1.0],
        )

    def test_artifacts_and_assertions(self, tmp_path, settings):
        outcome = run_experiment(_config(tmp_path, **settings), workers=2)
        assert outcome.passed
        assert outcome.exit_code == 0
        target = tmp_path / "out" / "mask-eta-sweep-waveform"
        frame = pd.read_csv(target / "eta_sweep.csv")
        assert list(frame.columns) == EtaSweepRow.columns()
        assert len(frame) == 5
        assert (target / "eta_sweep.svg").is_file()
        summary = json.loads((target / "summary.json").read_text())
        assert summary["seed"] == 4
        assert {a["name"] for a in summary["assertions"]} >= {"margin_cap_met", "loss_nondecreasing_in_eta"}

    def test_summary_records_csv_schema(self, tmp_path, settings):
        run_experiment(_config(tmp_path, **settings), workers=1)
        summary = json.loads((tmp_path / "out" / "mask-eta-sweep-waveform" / "summary.json").read_text())
        assert summary["csv_schema"]["version"] == CSV_SCHEMA_VERSION
        assert summary["csv_schema"]["columns"]["eta_sweep.csv"] == EtaSweepRow.columns()

    def test_same_seed_same_bytes(self, tmp_path, settings):
        first = _config(tmp_path, output_dir=str(tmp_path / "a"), **settings)
        second = _config(tmp_path, output_dir=str(tmp_path / "b"), **settings)
        run_experiment(first, workers=1)
        run_experiment(second, workers=3)
        a = (tmp_path / "a" / "mask-eta-sweep-waveform" / "eta_sweep.csv").read_bytes()
        b = (tmp_path / "b" / "mask-eta-sweep-waveform" / "eta_sweep.csv").read_bytes()
        assert a == b


class TestOtherExperiments:
    def test_type1_bound_writes_rates(self, tmp_path):
        config = _config(tmp_path, experiment="type1-bound", seed=2, K=4, m=2, trials=40, quantile_samples=1000)
        outcome = run_experiment(config, workers=2)
        target = tmp_path / "out" / "type1-bound"
        frame = pd.read_csv(target / "type1.csv")
        assert list(frame.columns) == Type1Row.columns()
        assert list(frame["gamma"]) == [0.05, 0.1, 0.2]
        assert (frame["trials"] == 40).all()
        assert (target / "detector_trace.csv").is_file()
        assert all(c["status"] == "ok" for c in outcome.summary["cells"])

    def test_single_dataset_irl_generated(self, tmp_path):
        outcome = run_experiment(_config(tmp_path, experiment="single-dataset-irl", seed=6, K=5, m=3))
        assert outcome.passed
        target = tmp_path / "out" / "single-dataset-irl"
        row = pd.read_csv(target / "irl.csv").iloc[0]
        assert bool(row["feasible"])
        assert (target / "dataset.txt").is_file()

    def test_misspec_bound_is_gated(self, tmp_path):
        config = _config(tmp_path, experiment="misspec-bound", seed=1, K=3, m=2, instances=2, multi_starts=2, eta=[0.5])
        outcome = run_experiment(config)
        assert outcome.passed
        assert [a["name"] for a in outcome.summary["assertions"]] == ["misspec_bound_holds"]
        assert outcome.summary["assertions"][0]["passed"]
        assert "misspec_bound_holds_rate" in outcome.summary["metrics"]
        frame = pd.read_csv(tmp_path / "out" / "misspec-bound" / "misspec.csv")
        assert list(frame["instance"]) == [0, 1]
        assert list(frame.columns) == MisspecRow.columns()


class TestCommandLine:
    def test_irl_on_saved_dataset(self, tmp_path, waveform_bundle, capsys):
        path = save_dataset(tmp_path / "wave.txt", waveform_bundle.dataset)
        assert main(["irl", str(path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] == "feasible"
        assert report["horizon"] == 5

    def test_mask_writes_dataset(self, tmp_path, waveform_bundle, capsys):
        path = save_dataset(tmp_path / "wave.txt", waveform_bundle.dataset)
        out = tmp_path / "masked.txt"
        code = main(["mask", str(path), "--eta", "0.5", "--seed", "1", "--starts", "2", "--output", str(out)])
        assert code == 0
        assert out.is_file()

    def test_detect_reports_decision(self, tmp_path, waveform_bundle, capsys):
        path = save_dataset(tmp_path / "wave.txt", waveform_bundle.dataset)
        code = main(["detect", str(path), "--gamma", "0.1", "--sigma2", "0.3", "--seed", "0", "--samples", "1000"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["decision"] in ("H0_cognitive", "H1_not_cognitive")

    def test_detect_requires_seed(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["detect", str(tmp_path / "x.txt"), "--gamma", "0.1", "--sigma2", "0.3"])
        assert info.value.code == 2

    def test_bad_eta_is_usage_error(self, tmp_path, waveform_bundle):
        path = save_dataset(tmp_path / "wave.txt", waveform_bundle.dataset)
        assert main(["mask", str(path), "--eta", "1.5", "--seed", "1"]) == 2

    def test_missing_dataset(self, tmp_path):
        assert main(["irl", str(tmp_path / "absent.txt")]) == 2

    def test_malformed_dataset_is_usage_error(self, tmp_path):
        path = tmp_path / "broken.txt"
        path.write_text("not a dataset\n1 2 3\n")
        assert main(["irl", str(path)]) == 2

    def test_bad_config_file(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("experiment: type1-bound\nseed: 1\nlamda: [1]\n")
        assert main(["run", str(path)]) == 2

    def test_run_from_file(self, tmp_path):
        path = tmp_path / "irl.yaml"
        path.write_text(f"experiment: single-dataset-irl\nseed: 2\nK: 4\nm: 2\noutput_dir: {tmp_path / 'o'}\n")
        assert main(["run", str(path), "--seed", "3"]) == 0
        summary = json.loads((tmp_path / "o" / "single-dataset-irl" / "summary.json").read_text())
        assert summary["seed"] == 3
