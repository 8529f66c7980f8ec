import asyncio
from pathlib import Path

import pytest

from src.utils.config import Config, InferenceConfig, SynthesizerConfig, default_channels, load_config
from src.utils.context import RunContext, cleanup_context, derive_seed, get_context, initialize_context
from src.utils.errors import ConfigError, ContractError, DimensionError, NumericError, SetupError, SlaterError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_validate():
    config = load_config()
    assert config.synthesizer.final_resolution == 64
    assert config.synthesizer.channels == default_channels(5)
    assert config.discriminator.resolution == 64
    assert config.inference.lr == 0.1
    assert config.training.beta1 == 0.0


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIG_DIR.glob("*.ini")))
def test_shipped_configs_load(name):
    config = load_config(CONFIG_DIR / name)
    assert config.discriminator.resolution == config.synthesizer.final_resolution


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_config("no/such/config.ini")


def test_resolution_must_follow_layer_count():
    with pytest.raises(ValueError):
        SynthesizerConfig(n_layers=3, final_resolution=32)
    with pytest.raises(ValueError):
        SynthesizerConfig(n_layers=3, final_resolution=16, channels=[8, 8, 6])
    with pytest.raises(ConfigError):
        load_config(overrides={"synthesizer": {"n_layers": 4}})


def test_cross_section_checks(raw_config):
    raw_config["acquisition"]["size"] = 32
    raw_config["bogus"] = {}
    errors = Config(raw_config).validate()
    assert any("exceeds synthesizer output" in e for e in errors)
    assert any("[bogus]" in e for e in errors)


def test_overrides_skip_unset_flags():
    config = load_config(overrides={"inference": {"max_iterations": 7, "lambda2": None}})
    assert config.inference.max_iterations == 7
    assert config.inference.lambda2 == 0.0


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv("SLATER_SEED", "7")
    config = load_config()
    assert config.seed == 7
    assert config.inference.seed == 7
    assert load_config(seed=3).training.seed == 3


def test_bad_seed_variable(monkeypatch):
    monkeypatch.setenv("SLATER_SEED", "seven")
    with pytest.raises(ConfigError):
        load_config()


def test_sections_inherit_the_run_seed(raw_config):
    raw_config["run"]["seed"] = 11
    raw_config["acquisition"]["seed"] = 2
    config = Config(raw_config)
    assert config.inference.seed == 11
    assert config.acquisition.seed == 2


def test_canonical_text_and_hash(raw_config):
    a, b = Config(raw_config), Config(dict(raw_config))
    assert a.to_text() == b.to_text()
    assert a.config_hash() == b.config_hash()
    raw_config["inference"] = {"max_iterations": 4}
    assert Config(raw_config).config_hash() != a.config_hash()


def test_inference_problems():
    assert InferenceConfig(lambda1=0.0).problems() == ["lambda1 and lambda2 cannot both be 0"]
    assert InferenceConfig(optimize="latents, noise").optimize == ["latents", "noise"]
    with pytest.raises(ValueError):
        InferenceConfig(optimize=["everything"])


def test_error_exit_codes():
    assert ConfigError("x").exit_code == 2
    assert SetupError("x").exit_code == 2
    assert DimensionError("x").exit_code == 3
    assert ContractError("x").exit_code == 3
    assert NumericError("x").exit_code == 4
    assert SlaterError("x").exit_code == 1
    assert isinstance(ConfigError("x"), ValueError)


def test_derived_seeds_are_stable_and_recorded():
    context = RunContext(seed=5)
    first = context.rng("mask").integers(1 << 30)
    assert first == RunContext(seed=5).rng("mask").integers(1 << 30)
    assert context.seeds_used == {"mask": derive_seed(5, "mask")}
    assert derive_seed(5, "mask") != derive_seed(5, "coils")


def test_run_context_is_reset_between_commands(tmp_path):
    context = asyncio.run(initialize_context({"inference": {}}, seed=3, out_dir=tmp_path))
    assert get_context() is context
    context.rng("latents")
    assert context.seeds_used == {"latents": derive_seed(3, "latents")}

    asyncio.run(cleanup_context())
    assert context.seeds_used == {} and context.config == {} and context.out_dir is None

    again = asyncio.run(initialize_context({}, seed=4))
    assert again is context and again.seed == 4
