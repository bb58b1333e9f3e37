import pytest

from cogmask.core.exceptions import ConfigError
from cogmask.services.experiments import load_config, validate_config


def _write(tmp_path, text):
    path = tmp_path / "experiment.yaml"
    path.write_text(text)
    return path


class TestLoadConfig:
    def test_minimal_file_fills_defaults(self, tmp_path):
        config = load_config(_write(tmp_path, "experiment: mask-eta-sweep-waveform\nseed: 1\n"))
        assert config.K == 20
        assert config.m == 4
        assert config.eta == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert config.noise_variance == 0.3

    def test_spsa_default_horizon(self, tmp_path):
        config = load_config(_write(tmp_path, "experiment: spsa-lambda-sweep\nseed: 1\nlambda: [1, 10]\n"))
        assert config.K == 10
        assert config.lam == [1.0, 10.0]

    def test_unknown_key_suggests_close_match(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(_write(tmp_path, "experiment: spsa-lambda-sweep\nseed: 1\nlamda: [1, 10]\n"))
        message = str(info.value)
        assert "lamda" in message
        assert "did you mean 'lambda'" in message

    def test_grid_not_ascending(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(_write(tmp_path, "experiment: mask-eta-sweep-beam\nseed: 1\neta: [0.5, 0.2]\n"))
        assert "eta: grid not ascending" in info.value.diagnostics

    def test_seed_is_mandatory(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(_write(tmp_path, "experiment: type1-bound\n"))
        assert any(d.startswith("seed") for d in info.value.diagnostics)

    def test_syntax_error_has_position(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(_write(tmp_path, "experiment: type1-bound\nseed: [1, 2\n"))
        assert "experiment.yaml:" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.yaml")


class TestValidateConfig:
    def test_lists_every_problem(self, tmp_path):
        path = _write(tmp_path, "experiment: type1-bound\nseed: 1\n")
        config = load_config(path).model_copy(
            update={"gamma": [0.2, 1.5], "quantile_samples": 10, "dataset": str(tmp_path / "none.txt")}
        )
        diagnostics = validate_config(config)
        assert "gamma: entries must lie in (0, 1)" in diagnostics
        assert any(d.startswith("quantile_samples") for d in diagnostics)
        assert any(d.startswith("dataset") for d in diagnostics)

    def test_valid_config_is_clean(self, tmp_path):
        config = load_config(_write(tmp_path, "experiment: single-dataset-irl\nseed: 3\nK: 1\n"))
        assert validate_config(config) == []
