import pytest

from master_style.config import SEED_ENV, ConfigError, ExperimentConfig, load_config, parse_config


def test_defaults():
    cfg = ExperimentConfig()
    assert (cfg.inner_lr, cfg.outer_lr, cfg.k, cfg.max_layers, cfg.style_weight) == (1e-4, 1e-4, 2, 4, 10.0)
    assert (cfg.adapt_steps, cfg.adapt_lr, cfg.batch_size) == (100, 1e-4, 4)


def test_parse_with_comments():
    cfg = parse_config("# header\nk = 3   # inline\n\ninner_lr=0.5\nfusion = residual\n")
    assert (cfg.k, cfg.inner_lr, cfg.fusion) == (3, 0.5, "residual")


def test_dumps_round_trip():
    cfg = ExperimentConfig(k=3, seed=9, inner_lr=2.5e-3)
    assert parse_config(cfg.dumps()) == cfg


@pytest.mark.parametrize("text", ["nonsense", "unknown = 1", "k = two", "image_size = 40", "heads = 3",
                                  "shift = 4", "iterations = 0", "optimizer = rmsprop", "k = 0",
                                  "adapt_optimizer = lbfgs"])
def test_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_env_overrides_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("seed = 4\n", encoding="utf-8")
    assert load_config(p, env={}).seed == 4
    assert load_config(p, env={SEED_ENV: "11"}).seed == 11
    assert load_config(None, env={SEED_ENV: ""}).seed == 0
    with pytest.raises(ConfigError):
        load_config(None, env={SEED_ENV: "abc"})


def test_base_is_overlaid():
    base = ExperimentConfig(d_model=16)
    assert parse_config("k = 1", base).d_model == 16


def test_meta_and_adapt_views():
    cfg = ExperimentConfig(k=3, adapt_steps=7, seed=2)
    assert cfg.meta().k == 3 and cfg.meta().seed == 2
    assert cfg.adapt().steps == 7 and cfg.adapt().optimizer == "sgd" and cfg.model().d_model == cfg.d_model
