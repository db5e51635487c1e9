import json

import pytest

from rmf.config import ConfigError, config_digest, load_config, parse_config


MINIMAL = {
    "seed": 5,
    "attack": {"kind": "pattern_backdoor", "poison_fraction": 0.5, "target_label": 0},
}


class TestParse:
    def test_minimal_config_gets_defaults(self):
        cfg = parse_config(dict(MINIMAL))
        assert cfg.seed == 5
        assert cfg.dataset.synthetic is not None
        assert cfg.dataset.synthetic.class_count == 10
        assert cfg.model.train.epochs == 10
        assert cfg.attack.kind == "pattern_backdoor"
        assert cfg.attack.trigger is not None  # backdoor kinds default to a trigger
        assert cfg.attack.steps.counts() == (4, 3, 2)
        assert cfg.criteria.critical_threshold == 0.6
        assert cfg.probe_interval_ms == 100

    def test_seed_propagates_to_subsections(self):
        cfg = parse_config(dict(MINIMAL))
        assert cfg.dataset.synthetic.seed == 5
        assert cfg.model.train.seed == 5

    def test_explicit_subsection_seed_wins(self):
        raw = dict(MINIMAL)
        raw["dataset"] = {"synthetic": {"seed": 99}}
        raw["model"] = {"seed": 42}
        cfg = parse_config(raw)
        assert cfg.dataset.synthetic.seed == 99
        assert cfg.model.train.seed == 42

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key 'bogus'"):
            parse_config({**MINIMAL, "bogus": 1})

    def test_unknown_nested_key_names_path(self):
        raw = dict(MINIMAL)
        raw["attack"] = {**MINIMAL["attack"], "flavor": "spicy"}
        with pytest.raises(ConfigError, match="attack.flavor"):
            parse_config(raw)
        raw = dict(MINIMAL)
        raw["dataset"] = {"synthetic": {"n_classes": 10}}
        with pytest.raises(ConfigError, match="dataset.synthetic.n_classes"):
            parse_config(raw)

    def test_dataset_requires_exactly_one_source(self):
        raw = dict(MINIMAL)
        raw["dataset"] = {"synthetic": {}, "manifest": "x.csv"}
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(raw)

    def test_manifest_dataset(self):
        raw = dict(MINIMAL)
        raw["dataset"] = {"manifest": "signs/manifest.csv"}
        cfg = parse_config(raw)
        assert cfg.dataset.manifest == "signs/manifest.csv"
        assert cfg.dataset.synthetic is None

    def test_attack_kind_required(self):
        with pytest.raises(ConfigError, match="attack.kind"):
            parse_config({"attack": {"poison_fraction": 0.5}})

    def test_type_errors_are_config_errors(self):
        raw = dict(MINIMAL)
        raw["model"] = {"epochs": "ten"}
        with pytest.raises(ConfigError, match="model.epochs"):
            parse_config(raw)

    def test_invalid_attack_values_are_config_errors(self):
        raw = dict(MINIMAL)
        raw["attack"] = {"kind": "pattern_backdoor", "poison_fraction": 1.5, "target_label": 0}
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_steps_override(self):
        raw = dict(MINIMAL)
        raw["attack"] = {
            **MINIMAL["attack"],
            "steps": {"knowledge": ["a", "b"], "goal": ["c"], "specificity": []},
        }
        cfg = parse_config(raw)
        assert cfg.attack.steps.counts() == (2, 1, 0)

    def test_criteria_override(self):
        raw = dict(MINIMAL)
        raw["criteria"] = {"critical_threshold": 0.8, "major_threshold": 0.5}
        cfg = parse_config(raw)
        assert cfg.criteria.critical_threshold == 0.8

    def test_bad_criteria_rejected(self):
        raw = dict(MINIMAL)
        raw["criteria"] = {"critical_threshold": 0.2, "major_threshold": 0.5}
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_probe_interval_floor(self):
        with pytest.raises(ConfigError, match="probe_interval_ms"):
            parse_config({**MINIMAL, "probe_interval_ms": 5})

    def test_untargeted_label_flip(self):
        cfg = parse_config({"attack": {"kind": "label_flip", "poison_fraction": 0.3}})
        assert cfg.attack.specificity == "untargeted"
        assert cfg.attack.target_label is None
        assert cfg.attack.trigger is None


class TestLoadConfig:
    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(MINIMAL), encoding="utf-8")
        cfg = load_config(path)
        assert cfg.seed == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_non_object_root(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="object"):
            load_config(path)


class TestDigest:
    def test_digest_stable(self):
        a = config_digest(parse_config(dict(MINIMAL)))
        b = config_digest(parse_config(dict(MINIMAL)))
        assert a == b

    def test_digest_differs_on_change(self):
        a = config_digest(parse_config(dict(MINIMAL)))
        b = config_digest(parse_config({**MINIMAL, "seed": 6}))
        assert a != b
