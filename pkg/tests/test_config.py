import pytest

from cbmv.config import PipelineConfig, read_config_file, write_config_file
from cbmv.errors import ConfigError


def test_defaults_validate():
    cfg = PipelineConfig().validate()
    assert cfg.d_max == 64 and cfg.seed == 0
    assert cfg.sgm.p1 == 0.03 and cfg.sgm.p2 == 0.3
    assert cfg.cbca.l_max == 14
    assert cfg.forest.n_trees == 40


def test_flat_round_trip():
    cfg = PipelineConfig()
    cfg.apply_flat({
        "d_max": "32", "seed": "17",
        "sgm.p1": "0.05", "sgm.paths": "8",
        "cbca.tau": "0.1", "forest.n_trees": "12",
        "forest.bootstrap": "false", "post.median_window": "3",
        "matcher.census_window": "9", "sigma.ncc": "0.04",
    })
    assert cfg.d_max == 32 and cfg.seed == 17
    assert cfg.sgm.p1 == 0.05 and cfg.sgm.paths == 8
    assert cfg.forest.n_trees == 12 and cfg.forest.bootstrap is False
    assert cfg.matcher.census_window == 9 and cfg.sigma.ncc == 0.04

    flat = cfg.to_flat()
    again = PipelineConfig.from_flat(flat)
    assert again.to_flat() == flat


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"sgm.p3": "1"})
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"bogus": "1"})
    # the forest seed is owned by the top-level seed, not its own key
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"forest.seed": "4"})


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"sgm.p1": "abc"})
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"forest.n_trees": "2.5"})
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"forest.bootstrap": "maybe"})
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"d_max": "-1"})
    # values that parse but violate invariants still fail
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"sgm.p1": "0.9"})  # above p2
    with pytest.raises(ConfigError):
        PipelineConfig().apply_flat({"matcher.ncc_window": "4"})


def test_seed_drives_forest():
    cfg = PipelineConfig.from_flat({"seed": "123"})
    fp = cfg.forest_params()
    assert fp.seed == 123
    assert "forest.seed" not in cfg.to_flat()
    assert cfg.to_flat()["seed"] == "123"


def test_config_file_round_trip(tmp_path):
    cfg = PipelineConfig.from_flat({"sgm.p2": "0.4", "seed": "5"})
    p = tmp_path / "run.cfg"
    write_config_file(cfg, p)
    flat = read_config_file(p)
    assert PipelineConfig.from_flat(flat).to_flat() == cfg.to_flat()


def test_config_file_comments_and_errors(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\n\n  sgm.p1 = 0.02  \nd_max=8\n")
    flat = read_config_file(p)
    assert flat == {"sgm.p1": "0.02", "d_max": "8"}
    cfg = PipelineConfig.from_flat(flat)
    assert cfg.sgm.p1 == 0.02 and cfg.d_max == 8

    p.write_text("sgm.p1 0.02\n")
    with pytest.raises(ConfigError) as err:
        read_config_file(p)
    assert ":1:" in str(err.value)


def test_float_formatting_survives_round_trip():
    cfg = PipelineConfig()
    cfg.apply_flat({"sgm.p2": "0.30000000000000004"})
    flat = cfg.to_flat()
    assert PipelineConfig.from_flat(flat).sgm.p2 == cfg.sgm.p2
