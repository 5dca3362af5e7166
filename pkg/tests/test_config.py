import math
import warnings

import pytest

from ana.config import ExperimentConfig, parse_config, parse_config_text
from ana.errors import ConfigError
from ana.noise import NoiseFamily
from ana.regulariser import Strategy
from ana.schedule import DecayInterval


def test_empty_config_fills_defaults():
    cfg = parse_config_text("")
    assert cfg.seed == 0
    assert cfg.network.hidden == (16, 16, 16)
    assert cfg.network.levels == (-1.0, 0.0, 1.0)
    assert cfg.noise.decay_interval is DecayInterval.PARTITION
    assert cfg.train.strategy is Strategy.MODE
    assert cfg.train.epochs == 200
    assert cfg.regcurve.std == pytest.approx(1 / (2 * math.sqrt(3)))
    assert cfg.check.family is NoiseFamily.LOGISTIC
    assert cfg.sweep_seeds == [0]
    assert cfg.dataset.seed == 0


def test_values_parsed():
    cfg = parse_config_text(
        """
        [experiment]
        seed = 7
        [network]
        hidden = 4, 5
        [noise]
        family = normal, logistic
        decay_interval = same_end  # trailing comment
        [train]
        lr_drop_epoch = 10
        strategy = random
        [data]
        seed = 3
        [sweep]
        seeds = 1,2,3
        """
    )
    assert cfg.seed == 7 and cfg.network.hidden == (4, 5)
    assert cfg.noise.family == ("normal", "logistic")
    assert cfg.noise.decay_interval is DecayInterval.SAME_END
    assert cfg.train.lr_drop_epoch == 10 and cfg.train.strategy is Strategy.RANDOM
    assert cfg.dataset.seed == 3
    assert cfg.sweep_seeds == [1, 2, 3]


def test_static_variance_with_expectation_rejected():
    with pytest.raises(ConfigError, match="train.strategy"):
        parse_config_text("[noise]\nstatic_variance = true\n[train]\nstrategy = expectation\n")


def test_decay_interval_with_static_noise_warns():
    text = "[noise]\nstatic_mean = true\nstatic_variance = true\ndecay_interval = same_end\n"
    with pytest.warns(UserWarning, match="not relevant"):
        cfg = parse_config_text(text)
    assert cfg.warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_config_text("[noise]\nstatic_variance = true\n")


def test_all_errors_reported_together():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[bogus]\na = 1\n[train]\nepochs = many\nfoo = 1\n[noise]\nc_beta = 0\n")
    msg = str(info.value)
    assert "bogus: unknown section" in msg
    assert "train.epochs" in msg
    assert "train.foo: unknown key" in msg


@pytest.mark.parametrize(
    "text,key",
    [
        ("[noise]\nc_beta = 0\n", "noise.c_beta"),
        ("[noise]\nc_alpha = 0.5\n", "noise.c_alpha"),
        ("[noise]\nfamily = cauchy\n", "noise.family"),
        ("[noise]\nfamily = uniform\nmatch_compact = uniform\n", "noise.match_compact"),
        ("[network]\nlevels = 0,1\n", "network.thresholds"),
        ("[network]\nhidden = 8\n", "network.hidden"),
        ("[train]\noptimiser = rmsprop\n", "train.optimiser"),
        ("[experiment]\nseed = -1\n", "experiment.seed"),
        ("[data]\nsize = 2\n", "data"),
        ("[check]\nwidths = 2,2\n", "check.widths"),
        ("[sweep]\nstrategies = median\n", "sweep.strategies"),
        ("[network]\nquantise_weights = maybe\n", "network.quantise_weights"),
    ],
)
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config_text(text)


def test_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("no section header\n")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.ini")
    p = tmp_path / "ok.ini"
    p.write_text("[experiment]\nseed = 2\n")
    cfg = parse_config(p)
    assert isinstance(cfg, ExperimentConfig) and cfg.base_dir == tmp_path
