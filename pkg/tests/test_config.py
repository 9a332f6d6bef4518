from __future__ import annotations

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from metameta.config import (
    SEED_ENV_VAR,
    AggregatorConfig,
    ExperimentConfig,
    FileDataConfig,
    MetaConfig,
    ModalDataConfig,
    ModalMixtureSpec,
    apply_seed_override,
    load_experiment_config,
    parse_experiment_config,
)
from metameta.errors import ConfigError
from metameta.types import DropoutSemantics, GradOrder

DOCS = Path(__file__).resolve().parent.parent / "docs"


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def test_defaults():
    cfg = ExperimentConfig()
    assert isinstance(cfg.data, ModalDataConfig)
    assert cfg.data.spec.subspace_dim == 4
    assert cfg.learner.arch(16) == [16, 32, 2]
    assert (cfg.aggregator.dropout_input, cfg.aggregator.dropout_hidden) == (0.9, 0.6)
    assert cfg.aggregator.dropout_semantics is DropoutSemantics.KEEP
    assert cfg.meta.maml().order is GradOrder.SECOND


@pytest.mark.parametrize("name", ["experiment.example.json", "experiment.mmfb.example.json"])
def test_example_configs_parse(name):
    cfg = load_experiment_config(DOCS / name)
    assert cfg.meta.k == 4


def test_example_modal_spec_matches_the_default():
    data = json.loads((DOCS / "modal_spec.example.json").read_text(encoding="utf-8"))
    assert ModalMixtureSpec.model_validate(data) == ModalMixtureSpec()


def test_data_kind_selects_the_section():
    cfg = parse_experiment_config({"data": {"kind": "mmfb", "path": "bank.mmfb"}})
    assert isinstance(cfg.data, FileDataConfig)
    assert cfg.data.test_path is None
    with pytest.raises(ConfigError):
        parse_experiment_config({"data": {"kind": "csv", "path": "bank.csv"}})


@pytest.mark.parametrize(
    "data, field",
    [
        ({"meta": {"k": 0}}, "meta.k"),
        ({"episode": {"n_neg_train": 0}}, "episode.n_neg_train"),
        ({"aggregator": {"dropout_input": 1.5}}, "aggregator.dropout_input"),
        ({"eval": {"n_problems": 1}}, "eval.n_problems"),
        ({"learner": {"hidden_dims": [4, 0]}}, "learner"),
        ({"colour": "blue"}, "colour"),
    ],
)
def test_invalid_configs_name_the_field(data, field):
    with pytest.raises(ConfigError, match=field):
        parse_experiment_config(data)


def test_sections_are_frozen():
    cfg = ExperimentConfig()
    with pytest.raises(ValidationError):
        cfg.meta.k = 9


def test_spec_rejects_more_modes_than_dimensions():
    with pytest.raises(ValueError):
        ModalMixtureSpec(feature_dim=3, modes=4)


def test_aggregator_overrides_fall_back_to_meta():
    cfg = ExperimentConfig(meta=MetaConfig(meta_lr=0.01, meta_iterations=10))
    assert (cfg.aggregator_maml().meta_lr, cfg.aggregator_maml().meta_iterations) == (0.01, 10)

    cfg = ExperimentConfig(
        meta=MetaConfig(meta_lr=0.01, meta_iterations=10),
        aggregator=AggregatorConfig(meta_lr=0.5, meta_iterations=3),
    )
    assert (cfg.aggregator_maml().meta_lr, cfg.aggregator_maml().meta_iterations) == (0.5, 3)


def test_keep_semantics():
    agg = AggregatorConfig(dropout_semantics=DropoutSemantics.KEEP)
    assert agg.drop_probabilities() == pytest.approx((0.1, 0.4))


def test_default_dropout_leaves_most_units_on():
    assert AggregatorConfig().drop_probabilities() == pytest.approx((0.1, 0.4))
    literal = AggregatorConfig(dropout_semantics=DropoutSemantics.DROP)
    assert literal.drop_probabilities() == pytest.approx((0.9, 0.6))


@pytest.mark.parametrize(
    "semantics, value", [(DropoutSemantics.KEEP, 0.0), (DropoutSemantics.DROP, 1.0)]
)
def test_dropout_that_removes_every_unit_is_rejected(semantics, value):
    with pytest.raises(ValidationError, match="every unit"):
        AggregatorConfig(dropout_semantics=semantics, dropout_input=value)


def test_load_reports_the_path(tmp_path):
    missing = tmp_path / "absent.json"
    with pytest.raises(ConfigError, match="absent.json"):
        load_experiment_config(missing)

    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_experiment_config(broken)

    listing = tmp_path / "list.json"
    listing.write_text("[]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_experiment_config(listing)


def test_seed_override(monkeypatch):
    cfg = ExperimentConfig(seed=3)
    assert apply_seed_override(cfg).seed == 3

    monkeypatch.setenv(SEED_ENV_VAR, "  ")
    assert apply_seed_override(cfg).seed == 3

    monkeypatch.setenv(SEED_ENV_VAR, "11")
    assert apply_seed_override(cfg).seed == 11

    for bad in ("-1", "eleven", "1.5"):
        monkeypatch.setenv(SEED_ENV_VAR, bad)
        with pytest.raises(ConfigError):
            apply_seed_override(cfg)
