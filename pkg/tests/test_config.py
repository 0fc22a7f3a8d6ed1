import pytest

from inrmask.config import FULL_SCHEDULE, RunConfig, field_names, format_value, load_config, parse_value
from inrmask.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text, encoding="utf-8")
    return path


class TestDefaults:
    def test_values(self):
        config = RunConfig()
        assert config.epochs == 1000 and config.learning_rate == 1e-3
        assert config.lambda_r == 50.0 and config.lambda_d == 1.0
        assert config.filter_radius_frac == 0.05
        assert config.area_grid == (0.025, 0.05, 0.1, 0.2)
        assert config.seeds == (0, 1, 2, 3, 4)
        assert config.phi0 is None and config.phi0_rel == 0.9
        assert config.perturbation == "blur"

    def test_derived_objects(self):
        explain = RunConfig(target_class=-1).explain_config(seed=3)
        assert explain.train.seed == 3 and explain.target_class is None
        assert explain.network.hidden_layers == 5 and explain.network.component_count == 128
        assert explain.search.threshold(1.0) == pytest.approx(0.9)
        assert RunConfig(target_class=2).explain_config(0).target_class == 2


class TestLoading:
    def test_file_with_comments_and_spaces(self, tmp_path):
        path = write(
            tmp_path,
            "# short run\n"
            "epochs = 50\n"
            "learning_rate=0.001\n"
            "area_grid = 0.05, 0.1\n"
            "seeds = 3,4  # two seeds\n"
            "perturbation = black\n"
            "soft_precision = yes\n"
            "phi0 = 0.5\n",
        )
        config = load_config(path)
        assert config.epochs == 50
        assert config.learning_rate == 0.001
        assert config.area_grid == (0.05, 0.1)
        assert config.seeds == (3, 4)
        assert config.perturbation == "black"
        assert config.soft_precision is True
        assert config.phi0 == 0.5

    def test_overrides_win_over_file(self, tmp_path):
        config = load_config(write(tmp_path, "epochs = 50\n"), epochs=7, out_dir=None)
        assert config.epochs == 7 and config.out_dir == "out"

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="colour"):
            load_config(write(tmp_path, "colour = blue\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ConfigError, match="epochs"):
            load_config(write(tmp_path, "epochs = many\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.conf")

    def test_dump_and_reload(self, tmp_path):
        config = RunConfig(epochs=12, seeds=(5, 9), area_grid=(0.05, 0.2), phi0=0.4, regularize_filtered=False)
        reloaded = load_config(config.dump(tmp_path / "dumped.conf"))
        assert reloaded == config

    def test_parse_value(self):
        assert parse_value("phi0", "none") is None
        assert parse_value("seeds", "1,2") == (1, 2)
        with pytest.raises(ConfigError):
            parse_value("regularize_filtered", "maybe")

    def test_format_value(self):
        assert format_value(None) == ""
        assert format_value(True) == "true"
        assert format_value((0.05, 0.1)) == "0.05,0.1"


class TestValidation:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"perturbation": "noise"},
            {"fourier_mode": "radial"},
            {"epochs": 0},
            {"cutoff": 1.0},
            {"phi0_rel": 0.0},
            {"area_min": 0.3, "area_max": 0.2},
            {"area_grid": (0.1, 0.05)},
            {"area_grid": (0.05, 0.5)},
            {"lambda_r": -1.0},
            {"learning_rate": 0.0},
        ],
    )
    def test_rejected(self, overrides):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(**overrides)

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(temperature=3)

    def test_none_leaves_value(self):
        config = RunConfig()
        assert config.with_overrides(epochs=None) is config

    def test_full_schedule(self):
        full = RunConfig().with_overrides(**FULL_SCHEDULE)
        assert full.epochs == 4000 and full.learning_rate == 1e-4
        assert full.lambda_r == RunConfig().lambda_r
        assert set(FULL_SCHEDULE) <= set(field_names())
