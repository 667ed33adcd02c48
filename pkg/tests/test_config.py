import pytest

from lowswing.config import ConfigError, LinkConfig, dump_config, load_config, parse_config_text


def test_defaults_valid():
    cfg = LinkConfig().validate()
    assert cfg.bit_period == pytest.approx(400e-12)
    assert cfg.phase_step == pytest.approx(40e-12)
    assert cfg.vcdl_range > cfg.phase_step


def test_round_trip(tmp_path):
    cfg = LinkConfig().replace(rl=650.0, n_phases=12)
    p = tmp_path / "x.cfg"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


def test_shipped_default_cfg_matches_defaults():
    from pathlib import Path
    assert load_config(Path(__file__).parents[1] / "default.cfg") == LinkConfig()


def test_overrides_win_over_file(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("rl = 500\n")
    assert load_config(p, {"rl": "700"}).rl == 700.0


@pytest.mark.parametrize("text", ["rl 600", "rl =", "rl = 1\nrl = 2", "bogus = 1", "n_phases = 2.5"])
def test_bad_files(tmp_path, text):
    p = tmp_path / "x.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


@pytest.mark.parametrize("changes", [
    {"rl": -1}, {"swing": 0.02}, {"window_lo": 0.7}, {"n_phases": 1},
    {"vcdl_range": 30e-12}, {"prbs_seed": 0}, {"window_hi": 1.5},
])
def test_invalid_values(changes):
    with pytest.raises(ConfigError):
        LinkConfig().replace(**changes)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/cfg")


def test_comments_ignored():
    assert parse_config_text("# c\n rl = 5 # tail\n\n") == {"rl": "5"}
