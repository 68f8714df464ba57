import math

import pytest

from dpflbench.errors import ConfigError
from dpflbench.harness.config import ExperimentConfig, load_config, parse_config_text, render_config

MINIMAL = """
[experiment]
setups = centralized
epsilons = inf
"""


def test_minimal_config_uses_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.experiment.setups == ("centralized",)
    assert cfg.experiment.epsilons == (math.inf,)
    assert cfg.experiment.seeds == (1, 2, 3)
    assert cfg.train == ExperimentConfig().train


def test_epsilon_list_with_inf():
    cfg = parse_config_text("[experiment]\nsetups = centralized-dp\nepsilons = 0.5, 5, 15, inf\n")
    assert cfg.experiment.epsilons == (0.5, 5.0, 15.0, math.inf)


@pytest.mark.parametrize("name", ["demo", "full_protocol"])
def test_render_round_trip(name):
    cfg = load_config(name)
    assert parse_config_text(render_config(cfg)) == cfg
    assert render_config(parse_config_text(render_config(cfg))) == render_config(cfg)


def test_digest_tracks_content():
    a = parse_config_text(MINIMAL)
    b = parse_config_text(MINIMAL + "\n[train]\nlr = 0.25\n")
    assert a.digest == parse_config_text(MINIMAL).digest
    assert a.digest != b.digest


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("[experiment]\nsetups = centralized-dp\nepsilons = 0.5, -1\n", 3, "epsilon"),
        ("[experiment]\nsetups = centralized\n\n[train]\nmomentum = 0.9\n", 5, "unknown key"),
        ("[nope]\n", 1, "unknown section"),
        ("[train]\nlr = 0.1\nlr = 0.2\n", 3, "duplicate"),
        ("[train]\nepochs = many\n", 2, "cannot parse"),
        ("lr = 0.1\n", 1, "outside"),
        ("[train]\njust text\n", 2, "key = value"),
        ("[experiment]\nsetups = centralized, quantum\n", 2, "unknown"),
        ("[fl]\nfraction = 1.5\n", 2, "fraction"),
        ("[data]\ndelimiter = ;;\n", 2, "delimiter"),
    ],
)
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config_text(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_noniid_shard_arithmetic_checked():
    text = "[experiment]\nsetups = fl-noniid\n[fl]\nnum_clients = 10\nnum_shards = 15\n"
    with pytest.raises(ConfigError, match="num_shards"):
        parse_config_text(text)


def test_delta_auto_and_explicit():
    assert parse_config_text(MINIMAL).resolved_delta(2000) == 1e-5
    assert parse_config_text(MINIMAL).resolved_delta(100_000) == 5e-6
    assert parse_config_text(MINIMAL + "[dp]\ndelta = 1e-6\n").resolved_delta(2000) == 1e-6
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL + "[dp]\ndelta = 2\n")


def test_relative_source_resolved_against_config_dir(tmp_path):
    (tmp_path / "cfg.ini").write_text("[data]\nsource = corpus.csv\n")
    cfg = load_config(tmp_path / "cfg.ini")
    assert cfg.data.source == str((tmp_path / "corpus.csv").resolve())


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg.ini")
