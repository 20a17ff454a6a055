import pytest

from fnx.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults():
    cfg = load_config()
    assert cfg.cells == 256 and cfg.dim == 2 and cfg.spacing == pytest.approx(3 / 256)
    assert cfg.scalar("omega").dim == 1 and cfg.scalar("p").dim == 2


def test_sections_are_read():
    cfg = parse_config("""
[grid]
cells = 128
[exponents]
p = 2+0.5*sin(x1)
q = 1.5
[analysis]
space = b
jmax = 6
[run]
suites = calderon, hardy
""")
    assert cfg.cells == 128 and cfg.space == "B" and cfg.jmax == 6
    assert cfg.suites == ("calderon", "hardy")
    assert not cfg.scalar("p").is_constant


@pytest.mark.parametrize("text", [
    "[grid]\ncells = 100\n",
    "[grid]\ncolour = red\n",
    "[exponents]\np = 2 +\n",
    "[run]\nsuites = calderon, nonsense\n",
    "[analysis]\nspace = Q\n",
    "no section header\n",
])
def test_bad_configurations_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_with_revalidates():
    cfg = load_config()
    assert cfg.with_(cells=512).spacing == pytest.approx(3 / 512)
    with pytest.raises(ConfigError):
        cfg.with_(cells=3)
    assert RunConfig().as_dict()["box"] == [-1.5, 1.5]
