import pytest

from aptgen.config import RunConfig
from aptgen.errors import ConfigError


def test_json_roundtrip():
    c = RunConfig(target="grid_a_reduced", delta=0.3, steps=1234, scripted_policy="random")
    assert RunConfig.from_json(c.to_json()) == c
    assert c.replace(seed=5).seed == 5 and c.seed == 0


def test_missing_target():
    with pytest.raises(ConfigError):
        RunConfig()


@pytest.mark.parametrize("kw", [dict(method="ppo"), dict(task_space="maze"), dict(steps=-1), dict(gamma=0.0),
                                dict(beta_init=16.0), dict(batch_size=0), dict(eps_start=1.5),
                                dict(scripted_policy="oracle"), dict(disc_every=0)])
def test_invalid_values(kw):
    with pytest.raises(ConfigError):
        RunConfig(target="grid_empty", **kw)


def test_bad_json():
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_json("[1, 2]")
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"target": "grid_empty", "learning_rat": 0.1})
