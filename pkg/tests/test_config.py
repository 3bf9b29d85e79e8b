import pytest

from pwxgb.boost import BoostParams
from pwxgb.config import DataConfig, RunConfig, SelectConfig, TopologyConfig, load_config
from pwxgb.errors import ConfigError


def test_defaults_round_trip():
    c = RunConfig()
    assert load_config(text=c.to_ini()) == c


def test_full_round_trip(tmp_path):
    c = RunConfig(
        TopologyConfig(0, (1, 2), (7, 8, 9), "tcp", {0: ("127.0.0.1", 9000)}),
        DataConfig({0: "a.csv", 1: "b.csv"}, {0: 50.0, 1: 80.0}, {0: (1.5, 2.0), 1: (3.0, 4.0)}, 8, 4, (4, 8), 0.7),
        BoostParams(n_trees=5, max_depth=2, n_bins=16, gamma=0.1, eta=0.5),
        SelectConfig(beta=1.2, multipliers=(1.0, 2.0)),
        seed=11,
    )
    p = tmp_path / "run.ini"
    p.write_text(c.to_ini())
    assert load_config(p) == c


@pytest.mark.parametrize("text", [
    "[boost]\nn_tree = 3\n",
    "[nope]\nx = 1\n",
    "[run]\nepoch = 2\n",
    "[boost]\nn_trees = many\n",
    "[boost]\nn_trees = 0\n",
    "[select]\nbeta = \n",
    "not an ini",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        load_config(text=text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
