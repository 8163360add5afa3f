import pytest

from mtmerlin.config import SCHEMA, load_config, parse_config
from mtmerlin.errors import ConfigError

DOC = """\
# comment
[run]
seed = 5

[scene]
height = 32
width = 48
tau_sweep = 0.5, 1.0 2.0
oversampling = 1.2 1.6

[train]
lr_schedule = 0:1e-3, 10:1e-4
aux_dates = 2, 1
"""


def test_parse_values_and_defaults():
    cfg = parse_config(DOC)
    assert cfg["run"]["seed"] == 5
    assert cfg["scene"]["height"] == 32 and cfg["scene"]["dates"] == SCHEMA["scene"]["dates"][1]
    assert cfg["scene"]["tau_sweep"] == (0.5, 1.0, 2.0)
    assert cfg["scene"]["oversampling"] == (1.2, 1.6)
    assert cfg["train"]["lr_schedule"] == ((0, 1e-3), (10, 1e-4))
    assert cfg["train"]["aux_dates"] == (2, 1)
    assert cfg["preprocess"]["whiten"] is True and cfg["preprocess"]["ds_quantile"] is None
    assert cfg.line_of("scene", "width") == 7


def test_unknown_key_reports_line_and_key():
    with pytest.raises(ConfigError) as info:
        parse_config(DOC + "bogus = 1\n")
    assert info.value.key == "bogus" and info.value.line == 14
    assert "line 14" in str(info.value) and "bogus" in str(info.value)


def test_unknown_section():
    with pytest.raises(ConfigError) as info:
        parse_config("[run]\nseed = 1\n\n[extra]\nx = 1\n")
    assert info.value.line == 4


@pytest.mark.parametrize("text,key", [
    ("[scene]\nheight = tall\n", "height"),
    ("[preprocess]\nwhiten = maybe\n", "whiten"),
    ("[scene]\ntau = nan\n", "tau"),
    ("[scene]\nsar_response = fancy\n", "sar_response"),
    ("[train]\nlr_schedule = \n", "lr_schedule"),
])
def test_invalid_values(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key and info.value.line == 2


def test_syntax_error_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("no section header\n")
    with pytest.raises(ConfigError):
        parse_config("[run]\nseed = 1\nseed = 2\n")


def test_overrides():
    cfg = parse_config(DOC, ["scene.height=16", "preprocess.whiten=off"])
    assert cfg["scene"]["height"] == 16 and cfg["preprocess"]["whiten"] is False
    with pytest.raises(ConfigError):
        parse_config(DOC, ["height=16"])
    with pytest.raises(ConfigError):
        parse_config(DOC, ["scene.colour=red"])


def test_canonical_text_is_order_independent():
    a = parse_config("[run]\nseed = 3\n[scene]\nheight = 8\n")
    b = parse_config("[scene]\nheight = 8\n[run]\nseed = 3\n")
    assert a.canonical() == b.canonical()
    assert a.canonical() != parse_config("[run]\nseed = 4\n").canonical()


def test_load_config(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(DOC)
    assert load_config(p)["scene"]["width"] == 48
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
