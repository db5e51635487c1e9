import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmf import attacks, data
from rmf.telemetry import StepLedgerTotals, ledger_total


def targeted_spec(kind="pattern_backdoor", fraction=0.5, target=0, **kw):
    return attacks.AttackSpec(kind=kind, poison_fraction=fraction, target_label=target,
                              trigger=attacks.TriggerPattern(), specificity="targeted", **kw)


class TestTrigger:
    def test_stamping_is_idempotent(self, tiny_data):
        images = tiny_data[0].images[:5]
        trig = attacks.TriggerPattern()
        once = attacks.apply_trigger(images, trig)
        twice = attacks.apply_trigger(once, trig)
        assert np.array_equal(once, twice)

    def test_exactly_nine_positions_change(self):
        images = np.zeros((2, 30, 30, 3))
        out = attacks.apply_trigger(images, attacks.TriggerPattern(size=3, intensity=1.0))
        changed = np.any(out != images, axis=3)
        assert changed.sum(axis=(1, 2)).tolist() == [9, 9]
        assert changed[0, 27:, 27:].all()

    def test_intensity_sum_on_zero_image(self):
        # 9 pixels x 3 channels x intensity 1.0
        images = np.zeros((1, 30, 30, 3))
        out = attacks.apply_trigger(images, attacks.TriggerPattern(size=3, intensity=1.0))
        assert out.sum() == pytest.approx(27.0)

    def test_top_left_position(self):
        images = np.zeros((1, 10, 10, 1))
        out = attacks.apply_trigger(images, attacks.TriggerPattern(size=2, position="top_left"))
        assert out[0, :2, :2, 0].sum() == pytest.approx(4.0)
        assert out.sum() == pytest.approx(4.0)

    def test_checkerboard_alternates(self):
        images = np.full((1, 8, 8, 1), 0.5)
        out = attacks.apply_trigger(images, attacks.TriggerPattern(kind="checkerboard", size=3))
        patch = out[0, 5:, 5:, 0]
        ii, jj = np.mgrid[0:3, 0:3]
        assert np.array_equal(patch, np.where((ii + jj) % 2 == 0, 1.0, 0.0))

    def test_oversized_trigger_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            attacks.apply_trigger(np.zeros((1, 4, 4, 1)), attacks.TriggerPattern(size=5))

    def test_other_pixels_unchanged(self, tiny_data):
        images = tiny_data[0].images[:3]
        out = attacks.apply_trigger(images, attacks.TriggerPattern())
        assert np.array_equal(out[:, :-3, :, :], images[:, :-3, :, :])
        assert np.array_equal(out[:, -3:, :-3, :], images[:, -3:, :-3, :])


class TestPatternBackdoor:
    def test_fraction_zero_is_noop(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.pattern_backdoor(train_ds, targeted_spec(fraction=0.0), seed=1)
        assert data.datasets_equal(out, train_ds)

    def test_half_of_600_poisons_exactly_300(self, desk_data):
        train_ds, _ = desk_data
        out = attacks.pattern_backdoor(train_ds, targeted_spec(fraction=0.5, target=3), seed=1)
        assert out.poisoned.sum() == 300
        assert (out.labels[out.poisoned] == 3).all()

    def test_fraction_one_relabels_everything(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.pattern_backdoor(train_ds, targeted_spec(fraction=1.0, target=2), seed=1)
        assert (out.labels == 2).all()
        assert out.poisoned.all()

    def test_unselected_samples_bitwise_unchanged(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.pattern_backdoor(train_ds, targeted_spec(fraction=0.5), seed=5)
        clean = ~out.poisoned
        assert np.array_equal(out.images[clean], train_ds.images[clean])
        assert np.array_equal(out.labels[clean], train_ds.labels[clean])

    def test_selected_samples_carry_trigger(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.pattern_backdoor(train_ds, targeted_spec(fraction=0.5), seed=5)
        assert np.allclose(out.images[out.poisoned][:, -3:, -3:, :], 1.0)

    def test_deterministic_per_seed(self, tiny_data):
        train_ds, _ = tiny_data
        a = attacks.pattern_backdoor(train_ds, targeted_spec(), seed=9)
        b = attacks.pattern_backdoor(train_ds, targeted_spec(), seed=9)
        assert data.datasets_equal(a, b)

    def test_target_out_of_range_rejected(self, tiny_data):
        with pytest.raises(ValueError, match="out of range"):
            attacks.pattern_backdoor(tiny_data[0], targeted_spec(target=99), seed=1)

    @given(fraction=st.floats(min_value=0.0, max_value=1.0), n=st.integers(min_value=1, max_value=40))
    @settings(max_examples=40, deadline=None)
    def test_poison_count_is_floor(self, fraction, n):
        ds = data.LabeledDataset(
            images=np.zeros((n, 4, 4, 1)), labels=np.zeros(n, dtype=np.int64),
            poisoned=np.zeros(n, dtype=bool), class_count=2,
        )
        out = attacks.pattern_backdoor(ds, targeted_spec(fraction=fraction, target=1), seed=0)
        assert out.poisoned.sum() == int(np.floor(fraction * n))


class TestCleanLabel:
    def fast_spec(self, fraction=0.5, target=0, **params):
        defaults = dict(epsilon=0.1, pgd_steps=2, pgd_step_size=0.05, proxy_epochs=0)
        defaults.update(params)
        return targeted_spec(kind="clean_label_backdoor", fraction=fraction, target=target,
                             clean_label_params=attacks.CleanLabelParams(**defaults))

    def test_labels_unchanged(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.clean_label_backdoor(train_ds, self.fast_spec(), proxy_seed=3)
        assert np.array_equal(out.labels, train_ds.labels)

    def test_poison_restricted_to_target_class(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.clean_label_backdoor(train_ds, self.fast_spec(target=1), proxy_seed=3)
        assert out.poisoned.sum() == 4  # floor(0.5 * 8 target-class samples)
        assert (train_ds.labels[out.poisoned] == 1).all()

    def test_off_trigger_perturbation_within_epsilon(self, tiny_data):
        train_ds, _ = tiny_data
        eps = 0.1
        out = attacks.clean_label_backdoor(train_ds, self.fast_spec(pgd_steps=5), proxy_seed=3)
        diff = np.abs(out.images - train_ds.images)
        diff[:, -3:, -3:, :] = 0.0  # exclude the stamped trigger region
        assert diff.max() <= eps + 1e-12

    def test_degenerate_params_equal_stamping(self, tiny_data):
        train_ds, _ = tiny_data
        spec = self.fast_spec(epsilon=0.0, pgd_steps=0)
        out = attacks.clean_label_backdoor(train_ds, spec, proxy_seed=3)
        stamped = attacks.apply_trigger(train_ds.images[out.poisoned], spec.trigger)
        assert np.array_equal(out.images[out.poisoned], stamped)
        assert np.array_equal(out.labels, train_ds.labels)

    def test_deterministic_per_seed(self, tiny_data):
        train_ds, _ = tiny_data
        spec = self.fast_spec(proxy_epochs=1)
        a = attacks.clean_label_backdoor(train_ds, spec, proxy_seed=7)
        b = attacks.clean_label_backdoor(train_ds, spec, proxy_seed=7)
        assert data.datasets_equal(a, b)

    def test_absent_target_class_rejected(self, tiny_data):
        train_ds, _ = tiny_data
        only_class_zero = train_ds.take(np.flatnonzero(train_ds.labels == 0))
        with pytest.raises(ValueError, match="absent"):
            attacks.clean_label_backdoor(only_class_zero, self.fast_spec(target=2), proxy_seed=1)


class TestLabelFlip:
    def untargeted(self, fraction=0.5):
        return attacks.AttackSpec(kind="label_flip", poison_fraction=fraction,
                                  specificity="untargeted")

    def test_untargeted_never_keeps_label(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.label_flip(train_ds, self.untargeted(1.0), seed=4)
        assert (out.labels != train_ds.labels).all()

    def test_targeted_full_fraction(self, tiny_data):
        train_ds, _ = tiny_data
        spec = attacks.AttackSpec(kind="label_flip", poison_fraction=1.0, target_label=1,
                                  specificity="targeted")
        out = attacks.label_flip(train_ds, spec, seed=4)
        assert (out.labels == 1).all()

    def test_images_bitwise_identical(self, tiny_data):
        train_ds, _ = tiny_data
        out = attacks.label_flip(train_ds, self.untargeted(0.5), seed=4)
        assert np.array_equal(out.images, train_ds.images)

    def test_single_class_untargeted_rejected(self):
        ds = data.LabeledDataset(images=np.zeros((4, 4, 4, 1)), labels=np.zeros(4, dtype=np.int64),
                                 poisoned=np.zeros(4, dtype=bool), class_count=1)
        with pytest.raises(ValueError, match="at least 2"):
            attacks.label_flip(ds, self.untargeted(), seed=0)


class TestStepCatalogs:
    def test_clean_label_totals_match_reference(self):
        catalog = attacks.default_step_catalog("clean_label_backdoor")
        assert catalog.counts() == (10, 6, 5)
        assert sum(catalog.counts()) == 21

    def test_pattern_default(self):
        assert attacks.default_step_catalog("pattern_backdoor").counts() == (4, 3, 2)

    def test_label_flip_default(self):
        assert attacks.default_step_catalog("label_flip").counts() == (3, 2, 1)

    def test_empty_catalog_sums_to_zero(self):
        empty = attacks.StepCatalog()
        assert ledger_total(StepLedgerTotals(*empty.counts())) == 0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            attacks.default_step_catalog("rowhammer")

    def test_empty_step_name_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            attacks.StepCatalog(knowledge_steps=("ok", ""))


class TestAttackSpecValidation:
    def test_targeted_requires_target(self):
        with pytest.raises(ValueError, match="target_label"):
            attacks.AttackSpec(kind="label_flip", poison_fraction=0.5, specificity="targeted")

    def test_untargeted_forbids_target(self):
        with pytest.raises(ValueError, match="target_label"):
            attacks.AttackSpec(kind="label_flip", poison_fraction=0.5, target_label=1,
                               specificity="untargeted")

    def test_backdoors_require_trigger(self):
        with pytest.raises(ValueError, match="trigger"):
            attacks.AttackSpec(kind="pattern_backdoor", poison_fraction=0.5, target_label=0,
                               specificity="targeted", trigger=None)

    def test_default_catalog_attached(self):
        spec = targeted_spec(kind="clean_label_backdoor")
        assert spec.steps.counts() == (10, 6, 5)


class TestTriggeredEvaluationSet:
    def test_trigger_stamped_everywhere(self, tiny_data):
        _, test_ds = tiny_data
        out = attacks.triggered_evaluation_set(test_ds, targeted_spec())
        assert np.allclose(out.images[:, -3:, -3:, :], 1.0)
        assert np.array_equal(out.labels, test_ds.labels)
        assert out.poisoned.all()

    def test_triggerless_attack_keeps_test_untouched(self, tiny_data):
        _, test_ds = tiny_data
        spec = attacks.AttackSpec(kind="label_flip", poison_fraction=0.5, specificity="untargeted")
        out = attacks.triggered_evaluation_set(test_ds, spec)
        assert data.datasets_equal(out, test_ds)
