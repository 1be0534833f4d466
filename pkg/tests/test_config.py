import textwrap
from pathlib import Path

import pytest

from mixfujita.config import ConfigError, InitialKind, Mode, load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = """\
schema = 1
mode = "cauchy"

[operator]
a = 1.0
b = 1.0
s = 0.5

[grid]
half_width = 64.0
n = 512

[problem]
p = 2.0
initial = { kind = "gaussian", amplitude = 0.5, width = 2.0 }
"""


def parse(text, mode=None):
    return parse_config(textwrap.dedent(text), "cfg.toml", mode)


def test_base_parses():
    cfg = parse(BASE)
    assert cfg.mode is Mode.CAUCHY
    assert cfg.operator == {"a": 1.0, "b": 1.0, "s": 0.5}
    assert cfg.grid == {"dim": 1, "half_width": 64.0, "n": 512}
    assert cfg.initial.kind is InitialKind.GAUSSIAN and cfg.initial.width == 2.0
    assert cfg.formats == ("json", "csv", "png")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.mode.value == name.removesuffix(".toml")


def test_cli_mode_fills_missing():
    cfg = parse(BASE.replace('mode = "cauchy"\n', ""), mode="cauchy")
    assert cfg.mode is Mode.CAUCHY


def test_mode_mismatch():
    with pytest.raises(ConfigError, match="does not match") as exc:
        parse(BASE, mode="sweep")
    assert exc.value.line == 2


def test_unknown_key_line():
    text = BASE.replace("s = 0.5", "s = 0.5\nbeta = 2")
    with pytest.raises(ConfigError, match="beta") as exc:
        parse(text)
    assert exc.value.line == 8
    assert str(exc.value).startswith("cfg.toml:8:")


def test_unknown_inline_key():
    text = BASE.replace("width = 2.0 }", "width = 2.0, sigma = 1 }")
    with pytest.raises(ConfigError, match="sigma") as exc:
        parse(text)
    assert exc.value.line == 15


def test_unknown_table():
    with pytest.raises(ConfigError, match="solver"):
        parse(BASE + "\n[solver]\nx = 1\n")


def test_malformed_toml():
    with pytest.raises(ConfigError, match="malformed") as exc:
        parse(BASE.replace("n = 512", "n = = 512"))
    assert exc.value.line == 11


@pytest.mark.parametrize("old,new,what", [
    ("s = 0.5", "s = 1.0", "operator.s"),
    ("s = 0.5", "s = 0.0", "operator.s"),
    ("a = 1.0", "a = -1.0", "operator.a"),
    ("n = 512", "n = 500", "power of two"),
    ("p = 2.0", "p = 1.0", "problem.p"),
    ("half_width = 64.0", 'half_width = "wide"', "half_width"),
    ("schema = 1", "schema = 2", "schema"),
    ('mode = "cauchy"', 'mode = "banana"', "unknown mode"),
    ('kind = "gaussian"', 'kind = "spike"', "initial kind"),
])
def test_invalid_values(old, new, what):
    with pytest.raises(ConfigError, match=what):
        parse(BASE.replace(old, new))


def test_both_coefficients_zero():
    with pytest.raises(ConfigError, match="at least one"):
        parse(BASE.replace("a = 1.0", "a = 0.0").replace("b = 1.0", "b = 0.0"))


def test_mode_requirements():
    with pytest.raises(ConfigError, match=r"\[domain\]"):
        parse(BASE.replace('"cauchy"', '"dirichlet"'))
    with pytest.raises(ConfigError, match="sweep.p_list"):
        parse(BASE.replace('"cauchy"', '"sweep"'))
    with pytest.raises(ConfigError, match="bounded"):
        parse(BASE.replace('kind = "gaussian", amplitude = 0.5, width = 2.0',
                           'kind = "eigenfunction", scale = 2.0'))


def test_domain_too_coarse():
    text = BASE.replace('"cauchy"', '"dirichlet"') + '\n[domain]\nkind = "disk"\nn = 32\n'
    with pytest.raises(ConfigError, match="domain.n"):
        parse(text)


def test_bad_formats():
    with pytest.raises(ConfigError, match="formats"):
        parse(BASE + '\n[output]\nformats = ["pdf"]\n')


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")
