import pytest

from InpaintX.tta.attention import Fallback
from InpaintX.tta.config import TrainConfig, from_dict, load_config, to_dict
from InpaintX.tta.exception import ConfigError
from InpaintX.tta.model import AttentionMode, ModelConfig


def test_defaults_use_toy_preset():
    model_cfg, train_cfg = from_dict({})
    assert model_cfg == ModelConfig.toy()
    assert train_cfg.batch_size == 4


def test_large_preset():
    model_cfg, train_cfg = from_dict({"preset": "large"})
    assert (model_cfg.levels, model_cfg.input_size, model_cfg.base_channels) == (4, 256, 32)
    assert train_cfg.batch_size == 16
    assert model_cfg.tta_levels == (True,) * 4


def test_explicit_preset_argument_wins():
    model_cfg, _ = from_dict({"preset": "toy"}, preset="large")
    assert model_cfg.input_size == 256


def test_sections_override_preset():
    model_cfg, train_cfg = from_dict({
        "model": {"tta_levels": [True, False, True], "attention_mode": "weighted", "temperature": 1},
        "attention": {"fallback": "nearest_valid", "swap_patch": 3},
        "loss_weights": {"style": 50},
        "train": {"steps": 10, "families": ["blobs"]},
    })
    assert model_cfg.tta_levels == (True, False, True)
    assert model_cfg.attention_mode is AttentionMode.WEIGHTED
    assert model_cfg.temperature == 1.0 and isinstance(model_cfg.temperature, float)
    assert model_cfg.attention.fallback is Fallback.NEAREST_VALID
    assert model_cfg.attention.swap_patch == 3
    assert model_cfg.loss_weights.style == 50.0
    assert train_cfg.steps == 10 and train_cfg.families == ("blobs",)


def test_changing_levels_resets_tta_levels():
    model_cfg, _ = from_dict({"model": {"levels": 2}})
    assert model_cfg.tta_levels == (True, True)


def test_unknown_keys_are_all_named():
    with pytest.raises(ConfigError) as excinfo:
        from_dict({"model": {"depth": 3}, "train": {"epochs": 2}, "extra": {}})
    message = str(excinfo.value)
    assert "model.depth" in message
    assert "train.epochs" in message
    assert "[extra]" in message


def test_bad_enum_value():
    with pytest.raises(ConfigError, match="attention.fallback"):
        from_dict({"attention": {"fallback": "random"}})


def test_unknown_preset():
    with pytest.raises(ConfigError, match="preset"):
        from_dict({"preset": "huge"})


def test_semantic_violations_surface():
    with pytest.raises(ConfigError, match="lr_g"):
        from_dict({"train": {"lr_g": 0.0}})


def test_to_dict_round_trip():
    model_cfg, train_cfg = from_dict({"model": {"tta_levels": [False, True, True]},
                                      "attention": {"fallback": "nearest_valid"}})
    again = from_dict(to_dict(model_cfg, train_cfg))
    assert again == (model_cfg, train_cfg)


def test_load_toml(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('preset = "toy"\n\n[model]\nbase_channels = 8\n\n[train]\nlr_g = 2e-4\n')
    model_cfg, train_cfg = load_config(path)
    assert model_cfg.base_channels == 8
    assert train_cfg.lr_g == 2e-4


def test_malformed_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[model\nlevels = ")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.toml")


def test_train_config_mask_band():
    with pytest.raises(ConfigError, match="mask ratios"):
        TrainConfig(mask_min_ratio=0.5, mask_max_ratio=0.4).validate()


@pytest.mark.parametrize("section, key, value", [
    ("train", "steps", 2.5),
    ("train", "batch_size", 4.0),
    ("train", "seed", True),
    ("model", "levels", "3"),
    ("attention", "swap_patch", 3.0),
])
def test_integer_fields_reject_other_types(section, key, value):
    with pytest.raises(ConfigError, match=f"{section}.{key}: expected an integer"):
        from_dict({section: {key: value}})


def test_float_fields_reject_text():
    with pytest.raises(ConfigError, match="train.lr_g: expected a number"):
        from_dict({"train": {"lr_g": "fast"}})


def test_float_toml_value_for_step_count(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("[train]\nsteps = 1e3\n")
    with pytest.raises(ConfigError, match="train.steps"):
        load_config(config)
