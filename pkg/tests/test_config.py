import pytest

from atebench.config import (
    KNOWN_METHODS,
    ExperimentConfig,
    load_config,
    parse_config_text,
)
from atebench.errors import ConfigError


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.mode == "synthetic"
    assert cfg.methods == ("bootstrap-pc",)
    assert cfg.er_edges() == cfg.d


def test_text_round_trip_preserves_every_field():
    cfg = ExperimentConfig(
        d=7,
        n=250,
        num_seeds=3,
        methods=("bootstrap-ges", "mcmc"),
        er_expected_edges=9,
        mcmc_thin=17,
        filter_grid=(0.0, 0.1),
        output_root="/tmp/x",
        standardize=True,
    )
    back = parse_config_text(cfg.to_text())
    assert back == cfg


def test_known_methods_cover_the_three_families():
    assert set(KNOWN_METHODS) == {"bootstrap-pc", "bootstrap-ges", "mcmc"}


def test_unknown_method_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("gibbs",)).validate()


def test_dimension_bounds():
    with pytest.raises(ConfigError):
        ExperimentConfig(d=1).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(d=51).validate()


def test_real_mode_needs_paths_and_single_seed():
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="real").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(
            mode="real", dataset_path="d.csv", graph_path="g.txt", num_seeds=2
        ).validate()
    ExperimentConfig(mode="real", dataset_path="d.csv", graph_path="g.txt").validate()


def test_treatment_values_must_differ():
    with pytest.raises(ConfigError):
        ExperimentConfig(treatment_value_a=1.0, treatment_value_b=1.0).validate()


def test_filter_grid_must_be_increasing_in_unit_interval():
    with pytest.raises(ConfigError):
        ExperimentConfig(filter_grid=(0.1, 0.05)).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(filter_grid=(0.0, 1.0)).validate()


def test_digest_ignores_volatile_keys():
    base = ExperimentConfig(d=6, output_root="/tmp/a", workers=1)
    moved = ExperimentConfig(d=6, output_root="/tmp/b", workers=8)
    assert base.digest() == moved.digest()
    assert base.digest() != ExperimentConfig(d=7).digest()
    assert len(base.digest()) == 12


def test_digest_covers_input_paths():
    a = ExperimentConfig(mode="real", dataset_path="x.csv", graph_path="g.txt")
    b = ExperimentConfig(mode="real", dataset_path="y.csv", graph_path="g.txt")
    assert a.digest() != b.digest()


def test_with_overrides_skips_none_and_replaces_values():
    cfg = ExperimentConfig(d=5)
    same = cfg.with_overrides(d=None)
    assert same.d == 5
    bumped = cfg.with_overrides(d=9, methods=("mcmc",))
    assert bumped.d == 9 and bumped.methods == ("mcmc",)


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError) as err:
        parse_config_text("banana = 3\n")
    assert "banana" in str(err.value)


def test_parse_rejects_duplicate_key():
    with pytest.raises(ConfigError):
        parse_config_text("d = 3\nd = 4\n")


def test_parse_rejects_line_without_equals():
    with pytest.raises(ConfigError) as err:
        parse_config_text("d 3\n", source="cfg.txt")
    assert "cfg.txt" in str(err.value)


def test_parse_skips_comments_and_blanks():
    cfg = parse_config_text("# header\n\nd = 4\nmethods = mcmc\n")
    assert cfg.d == 4
    assert cfg.methods == ("mcmc",)


def test_parse_optional_ints_accept_none_and_auto():
    cfg = parse_config_text("max_condition_size = none\nmcmc_thin = auto\n")
    assert cfg.max_condition_size is None
    assert cfg.mcmc_thin is None
    cfg = parse_config_text("max_condition_size = 2\n")
    assert cfg.max_condition_size == 2


def test_parse_bool_values():
    assert parse_config_text("standardize = true\n").standardize is True
    assert parse_config_text("standardize = false\n").standardize is False
    with pytest.raises(ConfigError):
        parse_config_text("standardize = maybe\n")


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("d = 6\nn = 123\n")
    cfg = load_config(path)
    assert (cfg.d, cfg.n) == (6, 123)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")
