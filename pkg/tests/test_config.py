"""Config parsing: defaults, round trips, vortex tokens and exhaustive error reporting."""

import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nematic2d import ConfigError
from nematic2d.config import TIERS, format_vortices, load_config, parse_config, parse_vortices

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, "..", "configs")


def test_defaults_fill_every_key():
    cfg = parse_config("tier = kinetic\n")
    assert cfg.tier == "kinetic"
    assert cfg["params.gamma"] == 6.0 and cfg["grid.nx"] == 32 and cfg["kinetic.scheme"] == "etd2"
    assert cfg["time.rescaled"] is False and cfg["initial.vortices"] == []


def test_comments_blank_lines_and_overrides():
    text = "# header\n\ntier = closure  # trailing\nparams.gamma = 4.5\n"
    cfg = parse_config(text, overrides={"params.epsilon": "0.2", "time.rescaled": "yes"})
    assert cfg["params.gamma"] == 4.5 and cfg["params.epsilon"] == 0.2 and cfg["time.rescaled"] is True


def test_vortex_tokens():
    got = parse_vortices("-0.2+0j:1 0.2-0.1j:-1 0.3j:+1")
    assert got == [(-0.2 + 0j, 1), (0.2 - 0.1j, -1), (0.3j, 1)]
    assert parse_vortices(format_vortices(got)) == got
    for bad in ("0.1", "0.1:2", "abc:1"):
        with pytest.raises(ValueError):
            parse_vortices(bad)


def test_all_problems_reported_together():
    text = "\n".join([
        "tier = nonsense",
        "bogus.key = 1",
        "params.gamma = -1",
        "grid.nx = many",
        "kinetic.scheme = rk4",
        "not a pair",
    ])
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    probs = "\n".join(err.value.problems)
    for piece in ("tier: must be one of", "bogus.key: unknown key", "grid.nx:", "kinetic.scheme: must be one of",
                  "line 6: expected"):
        assert piece in probs
    assert len(err.value.problems) >= 5


def test_semantic_problems():
    text = "tier = vortex\nparams.gamma = -2\ngrid.nx = 2\ntime.dt = 0\nboundary.type = none\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    probs = "\n".join(err.value.problems)
    for piece in ("params.gamma: must be positive", "grid.nx: need at least 3", "time.dt: must be positive",
                  "initial.vortices: the vortex tier", "boundary.type: the vortex tier needs"):
        assert piece in probs


def test_required_tier_and_duplicates():
    with pytest.raises(ConfigError) as err:
        parse_config("name = x\nname = y\n")
    assert "tier: required" in err.value.problems
    assert "name: given twice" in err.value.problems


def test_non_square_cells_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("tier = kinetic\ngrid.nx = 11\ngrid.ny = 21\n")
    assert any("square" in p for p in err.value.problems)


def test_missing_files(tmp_path):
    text = "tier = kinetic\nboundary.type = file\nboundary.file = nope.csv\ninitial.type = snapshot\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, str(tmp_path))
    probs = "\n".join(err.value.problems)
    assert "boundary.file: nope.csv does not exist" in probs and "initial.file: required" in probs
    with pytest.raises(ConfigError) as err:
        load_config(str(tmp_path / "absent.cfg"))
    assert err.value.problems[0].startswith("config file:")


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "b.csv").write_text("0,0\n")
    path = tmp_path / "run.cfg"
    path.write_text("tier = kinetic\nboundary.type = file\nboundary.file = b.csv\n")
    cfg = load_config(str(path))
    assert cfg.resolve_path(cfg["boundary.file"]) == os.path.join(str(tmp_path), "b.csv")


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_parse(name):
    cfg = load_config(os.path.join(CONFIGS, name))
    assert cfg.tier in TIERS


vortex_lists = st.lists(
    st.tuples(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), st.sampled_from([1, -1])),
    max_size=4)


@settings(max_examples=60, deadline=None)
@given(tier=st.sampled_from(["kinetic", "closure", "specfun-table", "maxslope-demo"]),
       gamma=st.floats(0.1, 50), eps=st.floats(1e-3, 1), n=st.integers(3, 200),
       dt=st.floats(1e-9, 1), rescaled=st.booleans(), vortices=vortex_lists,
       scheme=st.sampled_from(["maxent", "ldg"]))
def test_round_trip(tier, gamma, eps, n, dt, rescaled, vortices, scheme):
    text = "\n".join([
        f"tier = {tier}", f"params.gamma = {gamma!r}", f"params.epsilon = {eps!r}",
        f"grid.nx = {n}", f"grid.ny = {n}", f"time.dt = {dt!r}", f"time.rescaled = {rescaled}",
        f"initial.vortices = {format_vortices(vortices)}", f"tier2.scheme = {scheme}",
    ])
    cfg = parse_config(text)
    again = parse_config(cfg.to_text())
    assert again.values == cfg.values
    assert again.to_text() == cfg.to_text()
