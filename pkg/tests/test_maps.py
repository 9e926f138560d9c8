import numpy as np
import pytest

from mrfkit import (
    ImageStack,
    ParamMap,
    compute_metrics,
    load_param_map_csv,
    load_stack,
    r_squared,
    save_param_map_csv,
    save_stack,
)


def checker_map(h=4, w=5):
    rng = np.random.default_rng(7)
    mask = (np.add.outer(np.arange(h), np.arange(w)) % 2).astype(bool)
    t1 = np.where(mask, rng.uniform(500.0, 3000.0, (h, w)), 0.0)
    t2 = np.where(mask, rng.uniform(20.0, 400.0, (h, w)), 0.0)
    return ParamMap(t1_map=t1, t2_map=t2, mask=mask)


class TestMetrics:
    def test_perfect_reconstruction(self):
        truth = checker_map()
        recon = ParamMap(
            t1_map=truth.t1_map.copy(), t2_map=truth.t2_map.copy(), mask=truth.mask.copy()
        )
        m = compute_metrics(truth, recon)
        assert m.rmse_t1_ms == 0.0 and m.rmse_t2_ms == 0.0
        assert m.bias_t1_ms == 0.0 and m.bias_t2_ms == 0.0
        assert m.r2_t1 == 1.0 and m.r2_t2 == 1.0

    def test_constant_offset(self):
        truth = checker_map()
        recon = ParamMap(
            t1_map=np.where(truth.mask, truth.t1_map + 5.0, 0.0),
            t2_map=np.where(truth.mask, truth.t2_map + 5.0, 0.0),
            mask=truth.mask.copy(),
        )
        m = compute_metrics(truth, recon)
        assert abs(m.bias_t1_ms - 5.0) < 1e-12
        assert abs(m.rmse_t1_ms - 5.0) < 1e-12
        assert abs(m.bias_t2_ms - 5.0) < 1e-12

    def test_hand_computed_two_by_two(self):
        # Spreadsheet-style arithmetic, written out explicitly.
        truth_vals = [1000.0, 2000.0, 500.0, 1500.0]
        recon_vals = [1100.0, 1900.0, 450.0, 1650.0]
        errors = [r - t for r, t in zip(recon_vals, truth_vals)]
        expected_bias = sum(errors) / 4.0
        expected_rmse = (sum(e * e for e in errors) / 4.0) ** 0.5
        mean_truth = sum(truth_vals) / 4.0
        ss_tot = sum((t - mean_truth) ** 2 for t in truth_vals)
        ss_res = sum(e * e for e in errors)
        expected_r2 = 1.0 - ss_res / ss_tot

        truth = ParamMap(
            t1_map=np.array(truth_vals).reshape(2, 2),
            t2_map=np.full((2, 2), 100.0),
            mask=np.ones((2, 2), bool),
        )
        recon = ParamMap(
            t1_map=np.array(recon_vals).reshape(2, 2),
            t2_map=np.full((2, 2), 100.0),
            mask=np.ones((2, 2), bool),
        )
        m = compute_metrics(truth, recon)
        assert abs(m.bias_t1_ms - expected_bias) < 1e-12
        assert abs(m.rmse_t1_ms - expected_rmse) < 1e-12
        assert abs(m.r2_t1 - expected_r2) < 1e-12

    def test_rmse_at_least_abs_bias(self):
        truth = checker_map()
        rng = np.random.default_rng(3)
        recon = ParamMap(
            t1_map=np.where(truth.mask, truth.t1_map + rng.normal(10, 30, truth.t1_map.shape), 0.0),
            t2_map=np.where(truth.mask, truth.t2_map + rng.normal(-3, 8, truth.t2_map.shape), 0.0),
            mask=truth.mask.copy(),
        )
        # Reconstruction values must stay positive for the map invariant.
        recon.t1_map[truth.mask] = np.abs(recon.t1_map[truth.mask]) + 1.0
        recon.t2_map[truth.mask] = np.abs(recon.t2_map[truth.mask]) + 1.0
        m = compute_metrics(truth, recon)
        assert m.rmse_t1_ms >= abs(m.bias_t1_ms)
        assert m.rmse_t2_ms >= abs(m.bias_t2_ms)
        assert m.r2_t1 <= 1.0 and m.r2_t2 <= 1.0

    def test_mask_subset_consistency(self):
        truth = checker_map(6, 6)
        rng = np.random.default_rng(1)
        noisy_t1 = np.where(truth.mask, truth.t1_map + rng.normal(0, 20, (6, 6)), 0.0)
        noisy_t1[truth.mask] = np.abs(noisy_t1[truth.mask]) + 1.0
        recon = ParamMap(t1_map=noisy_t1, t2_map=truth.t2_map.copy(), mask=truth.mask.copy())

        sub_mask = truth.mask.copy()
        sub_mask[3:] = False
        truth_sub = ParamMap(
            t1_map=np.where(sub_mask, truth.t1_map, 0.0),
            t2_map=np.where(sub_mask, truth.t2_map, 0.0),
            mask=sub_mask,
        )
        recon_sub = ParamMap(
            t1_map=np.where(sub_mask, recon.t1_map, 0.0),
            t2_map=np.where(sub_mask, recon.t2_map, 0.0),
            mask=sub_mask,
        )
        m_sub = compute_metrics(truth_sub, recon_sub)
        d = recon.t1_map[sub_mask] - truth.t1_map[sub_mask]
        assert abs(m_sub.rmse_t1_ms - np.sqrt(np.mean(d * d))) < 1e-12

    def test_errors(self):
        truth = checker_map()
        other_mask = ParamMap(
            t1_map=np.full(truth.t1_map.shape, 900.0),
            t2_map=np.full(truth.t2_map.shape, 90.0),
            mask=~truth.mask,
        )
        with pytest.raises(ValueError, match="mask"):
            compute_metrics(truth, other_mask)
        empty = ParamMap(
            t1_map=np.zeros((4, 5)), t2_map=np.zeros((4, 5)), mask=np.zeros((4, 5), bool)
        )
        with pytest.raises(ValueError, match="empty"):
            compute_metrics(empty, empty)

    def test_r_squared_constant_truth(self):
        assert r_squared([5.0, 5.0], [5.0, 5.0]) == 1.0
        assert np.isnan(r_squared([5.0, 5.0], [5.0, 6.0]))


class TestParamMapValidation:
    def test_rejects_nonpositive_masked_values(self):
        with pytest.raises(ValueError):
            ParamMap(
                t1_map=np.array([[0.0]]), t2_map=np.array([[1.0]]),
                mask=np.array([[True]]),
            )

    def test_allows_zeros_when_masked_out(self):
        pm = ParamMap(
            t1_map=np.zeros((2, 2)), t2_map=np.zeros((2, 2)), mask=np.zeros((2, 2), bool)
        )
        assert pm.width == 2 and pm.height == 2


class TestIo:
    def test_param_map_csv_round_trip(self, tmp_path):
        pm = checker_map()
        path = tmp_path / "map.csv"
        save_param_map_csv(pm, path)
        back = load_param_map_csv(path)
        assert np.array_equal(back.mask, pm.mask)
        assert np.array_equal(back.t1_map, pm.t1_map)
        assert np.array_equal(back.t2_map, pm.t2_map)

    def test_stack_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        stack = ImageStack(
            data=rng.uniform(0.0, 1.0, (7, 3, 4)),
            mask=rng.uniform(size=(3, 4)) > 0.4,
            schedule_digest=bytes(range(32)),
        )
        path = tmp_path / "stack.bin"
        save_stack(stack, path)
        back = load_stack(path)
        assert np.array_equal(back.data, stack.data)
        assert np.array_equal(back.mask, stack.mask)
        assert back.schedule_digest == stack.schedule_digest

    def test_stack_validation(self):
        with pytest.raises(ValueError):
            ImageStack(data=np.zeros((3, 4)), mask=np.zeros((3, 4), bool))
        with pytest.raises(ValueError):
            ImageStack(data=np.zeros((2, 3, 4)), mask=np.zeros((4, 3), bool))

    def test_masked_signals_layout(self):
        data = np.zeros((2, 2, 2))
        data[:, 1, 0] = [0.5, 0.25]
        mask = np.zeros((2, 2), bool)
        mask[1, 0] = True
        stack = ImageStack(data=data, mask=mask)
        signals = stack.masked_signals()
        assert signals.shape == (1, 2)
        assert np.array_equal(signals[0], [0.5, 0.25])
