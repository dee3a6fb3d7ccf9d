import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nchf import config
from nchf.exceptions import ConfigError


def test_defaults_round_trip():
    cfg = config.RunConfig.defaults().validate()
    assert config.loads(config.dumps(cfg)).values == cfg.values


def test_parse_example():
    text = """
    # a comment
    grid.dim = 3
    grid.res = 16          # trailing comment
    flow.b = 4
    initial.fixture = bump
    initial.center = 3.0, 3.1, 3.2
    probes.spec = 1,1,1@1.0; 2,2,2@0.8
    corpus.resolutions = 16, 32
    """
    cfg = config.loads(text)
    assert cfg.grid.res == 16 and cfg.grid.dim == 3
    assert cfg.L == 4
    assert cfg.constants.C_b == pytest.approx(3 * 4 / 2 - 3)
    assert cfg.fixture_params()["center"] == [3.0, 3.1, 3.2]
    assert len(cfg.probes.probes) == 2
    assert cfg["corpus.resolutions"] == [16, 32]
    again = config.loads(config.dumps(cfg))
    assert again.values == cfg.values


@settings(max_examples=40, deadline=None)
@given(
    dim=st.sampled_from([2, 3, 4]),
    res=st.integers(8, 128),
    eps=st.floats(1e-6, 1.0),
    extra_b=st.floats(0.01, 50.0),
    t_end=st.floats(1e-3, 10.0),
    seed=st.integers(0, 2**64 - 1),
    fixture=st.sampled_from(["constant", "great_circle", "bump", "random_bandlimited", "equator_wrap"]),
)
def test_round_trip_property(dim, res, eps, extra_b, t_end, seed, fixture):
    cfg = config.RunConfig.defaults().with_overrides(
        **{
            "grid.dim": dim, "grid.res": res, "flow.eps": eps, "flow.b": 6 / dim + extra_b,
            "flow.t_end": t_end, "seed": seed, "initial.fixture": fixture,
        }
    )
    once = config.loads(config.dumps(cfg))
    assert once.values == cfg.values
    assert config.dumps(once) == config.dumps(cfg)


def test_c_b_rejected_with_line():
    with pytest.raises(ConfigError, match=r"line 2: field 'flow.b': C_b"):
        config.loads("grid.dim = 3\nflow.b = 2.0\n")


@pytest.mark.parametrize(
    "text,pattern",
    [
        ("grid.res = sixteen", r"line 1: field 'grid.res'"),
        ("grid.rez = 16", r"line 1: unknown field 'grid.rez'"),
        ("grid.res 16", r"line 1: expected 'key = value'"),
        ("grid.res = 16\ngrid.res = 32", r"line 2: field 'grid.res' already set on line 1"),
        ("\n\nflow.eps = 0", r"line 3: field 'flow.eps'"),
        ("flow.mode = implicit", r"field 'control.cfl_safety'|flow.mode"),
        ("initial.fixture = spiral", r"line 1: field 'initial.fixture'"),
        ("grid.dim = 3\ninitial.fixture = bump\ntarget.L = 3", r"line 3: field 'target.L'"),
        ("flow.t_end = nan", r"field 'flow.t_end'"),
        ("probes.spec = 1,2", r"line 1: field 'probes.spec': bad probe spec"),
        ("outputs.cadence = 3\noutputs.checkpoint_every = 10", r"checkpoint_every"),
    ],
)
def test_errors_identify_line_and_field(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        config.loads(text)


def test_auto_values():
    cfg = config.loads("target.L = auto\ninitial.center = auto\n")
    assert cfg["target.L"] is None and cfg.L == 3
    with pytest.raises(ConfigError):
        config.loads("grid.res = auto")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "nope.cfg")


def test_side_is_exact():
    cfg = config.loads(config.dumps(config.RunConfig.defaults()))
    assert cfg["grid.side"] == 2 * math.pi
