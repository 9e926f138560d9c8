import numpy as np
import pytest

from mrfkit import (
    Dictionary,
    GridSpec,
    TissueParams,
    add_noise,
    build_dictionary,
    epg_simulate,
    grid_entries,
    load_dictionary,
    normalize,
    parse_grid_spec,
    save_dictionary,
    schedule_digest,
    subsample,
)

from oracles import count_grid_entries


def synthetic_dictionary(n=5000, l=25, seed=0):
    rng = np.random.default_rng(seed)
    t2 = rng.uniform(10.0, 1000.0, n)
    return Dictionary(
        t1_ms=t2 + rng.uniform(1.0, 3000.0, n),
        t2_ms=t2,
        atoms=rng.uniform(0.05, 1.0, (n, l)),
        schedule_digest=bytes(32),
    )


class TestGrid:
    def test_full_grid_count(self):
        spec = GridSpec(1.0, 10.0, 5000.0, 1.0, 10.0, 2000.0)
        assert grid_entries(spec).shape == (79900, 2)

    def test_single_entry(self):
        spec = GridSpec(1000.0, 1.0, 1000.0, 100.0, 1.0, 100.0)
        entries = grid_entries(spec)
        assert entries.shape == (1, 2)
        assert entries[0, 0] == 1000.0 and entries[0, 1] == 100.0

    def test_fully_excluded_grid_raises(self):
        with pytest.raises(ValueError, match="empty"):
            grid_entries(GridSpec(100.0, 100.0, 100.0, 100.0, 100.0, 200.0))

    def test_row_major_order(self):
        entries = grid_entries(GridSpec(200.0, 100.0, 400.0, 50.0, 50.0, 150.0))
        expected = [
            (200.0, 50.0), (200.0, 100.0), (200.0, 150.0),
            (300.0, 50.0), (300.0, 100.0), (300.0, 150.0),
            (400.0, 50.0), (400.0, 100.0), (400.0, 150.0),
        ]
        assert [tuple(row) for row in entries] == expected

    def test_exclusion_rules(self):
        spec = GridSpec(100.0, 100.0, 300.0, 100.0, 100.0, 300.0, exclusion="t1<=t2")
        strict = grid_entries(spec)
        assert np.all(strict[:, 0] > strict[:, 1])
        loose = grid_entries(
            GridSpec(100.0, 100.0, 300.0, 100.0, 100.0, 300.0, exclusion="t1<t2")
        )
        assert np.all(loose[:, 0] >= loose[:, 1])
        assert loose.shape[0] == strict.shape[0] + 3  # the diagonal
        everything = grid_entries(
            GridSpec(100.0, 100.0, 300.0, 100.0, 100.0, 300.0, exclusion="none")
        )
        assert everything.shape[0] == 9

    def test_count_matches_loop_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            t1_min = rng.uniform(1.0, 200.0)
            t1_step = rng.uniform(5.0, 300.0)
            t1_max = t1_min + rng.uniform(0.0, 2000.0)
            t2_min = rng.uniform(1.0, 200.0)
            t2_step = rng.uniform(5.0, 300.0)
            t2_max = t2_min + rng.uniform(0.0, 1000.0)
            rule = ("t1<=t2", "t1<t2", "none")[rng.integers(0, 3)]
            expected = count_grid_entries(
                t1_min, t1_step, t1_max, t2_min, t2_step, t2_max, rule
            )
            spec = GridSpec(t1_min, t1_step, t1_max, t2_min, t2_step, t2_max, rule)
            if expected == 0:
                with pytest.raises(ValueError):
                    grid_entries(spec)
            else:
                assert grid_entries(spec).shape[0] == expected

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(1.0, 0.0, 100.0, 1.0, 10.0, 100.0)
        with pytest.raises(ValueError):
            GridSpec(100.0, 10.0, 1.0, 1.0, 10.0, 100.0)
        with pytest.raises(ValueError):
            GridSpec(1.0, 10.0, 100.0, 1.0, 10.0, 100.0, exclusion="bogus")

    def test_parse_grid_spec(self):
        spec = parse_grid_spec("t1=1:10:5000,t2=1:10:2000")
        assert spec == GridSpec(1.0, 10.0, 5000.0, 1.0, 10.0, 2000.0)
        spec = parse_grid_spec("t1=1:10:100,t2=1:10:50,exclude=none")
        assert spec.exclusion == "none"
        for bad in ("t1=1:10", "t2=1:10:100", "t1=1:10:100,t2=1:2:50,foo=bar", ""):
            with pytest.raises(ValueError):
                parse_grid_spec(bad)


class TestBuild:
    def test_single_entry_matches_simulate(self, schedule):
        spec = GridSpec(800.0, 1.0, 800.0, 60.0, 1.0, 60.0)
        d = build_dictionary(spec, schedule)
        assert d.atoms.shape == (1, len(schedule))
        assert np.array_equal(d.atoms[0], epg_simulate(TissueParams(800.0, 60.0), schedule))
        assert not d.normalized
        assert d.schedule_digest == schedule_digest(schedule)

    def test_rebuild_bit_identical(self, schedule, small_grid):
        a = build_dictionary(small_grid, schedule)
        b = build_dictionary(small_grid, schedule)
        assert np.array_equal(a.atoms, b.atoms)
        assert np.array_equal(a.t1_ms, b.t1_ms)


class TestNoise:
    def test_zero_sigma_bit_identical(self, small_dict):
        out = add_noise(small_dict, 0.0, seed=3)
        assert np.array_equal(out.atoms, small_dict.atoms)

    def test_same_seed_same_noise(self, small_dict):
        a = add_noise(small_dict, 0.02, seed=9)
        b = add_noise(small_dict, 0.02, seed=9)
        assert np.array_equal(a.atoms, b.atoms)
        c = add_noise(small_dict, 0.02, seed=10)
        assert not np.array_equal(a.atoms, c.atoms)

    def test_noise_statistics_per_atom_reference(self):
        # Pooled over >= 1e5 samples after removing the per-atom scale,
        # the noise standard deviation must sit within 5% of sigma.
        d = synthetic_dictionary(n=5000, l=25)
        sigma = 0.02
        noisy = add_noise(d, sigma, seed=1)
        delta = noisy.atoms - d.atoms
        scaled = delta / np.max(np.abs(d.atoms), axis=1, keepdims=True)
        pooled = np.std(scaled)
        assert delta.size >= 1e5
        assert abs(pooled - sigma) / sigma < 0.05

    def test_noise_statistics_absolute_reference(self):
        d = synthetic_dictionary(n=5000, l=25)
        noisy = add_noise(d, 0.01, seed=2, reference="absolute")
        pooled = np.std(noisy.atoms - d.atoms)
        assert abs(pooled - 0.01) / 0.01 < 0.05

    def test_noise_not_clipped(self):
        d = synthetic_dictionary(n=200, l=25)
        d = Dictionary(
            t1_ms=d.t1_ms, t2_ms=d.t2_ms,
            atoms=np.full_like(d.atoms, 1e-4),
            schedule_digest=bytes(32),
        )
        noisy = add_noise(d, 2.0, seed=0, reference="absolute")
        assert (noisy.atoms < 0).any()

    def test_rejects_negative_sigma(self, small_dict):
        with pytest.raises(ValueError):
            add_noise(small_dict, -0.1, seed=0)


class TestSubsample:
    def test_identity_factor(self, small_dict):
        out = subsample(small_dict, 1)
        assert np.array_equal(out.atoms, small_dict.atoms)
        assert np.array_equal(out.t1_ms, small_dict.t1_ms)

    @pytest.mark.parametrize("n,factor", [(79900, 2), (79900, 60), (132, 5), (7, 3)])
    def test_sizes(self, n, factor):
        rng = np.random.default_rng(0)
        d = Dictionary(
            t1_ms=np.arange(n, dtype=float) + 10.0,
            t2_ms=np.full(n, 5.0),
            atoms=rng.uniform(0.1, 1.0, (n, 4)),
            schedule_digest=bytes(32),
        )
        out = subsample(d, factor)
        assert out.n_entries == int(np.ceil(n / factor))

    def test_factor_beyond_size_keeps_first(self, small_dict):
        out = subsample(small_dict, small_dict.n_entries + 100)
        assert out.n_entries == 1
        assert out.t1_ms[0] == small_dict.t1_ms[0]

    def test_kept_params_are_subset(self, small_dict):
        out = subsample(small_dict, 7)
        original = set(zip(small_dict.t1_ms, small_dict.t2_ms))
        assert set(zip(out.t1_ms, out.t2_ms)) <= original

    def test_composition_counts(self, small_dict):
        once = subsample(subsample(small_dict, 3), 2)
        direct = subsample(small_dict, 6)
        assert once.n_entries == direct.n_entries
        assert np.array_equal(once.t1_ms, direct.t1_ms)

    def test_rejects_bad_factor(self, small_dict):
        with pytest.raises(ValueError):
            subsample(small_dict, 0)


class TestNormalize:
    def test_unit_norms(self, small_dict):
        out = normalize(small_dict)
        norms = np.linalg.norm(out.atoms, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-9
        assert out.normalized

    def test_idempotent(self, small_dict):
        once = normalize(small_dict)
        twice = normalize(once)
        assert np.max(np.abs(twice.atoms - once.atoms)) < 1e-12

    def test_known_row(self):
        d = Dictionary(
            t1_ms=np.array([100.0]),
            t2_ms=np.array([50.0]),
            atoms=np.array([[3.0, 4.0, 0.0]]),
            schedule_digest=bytes(32),
        )
        out = normalize(d)
        assert np.allclose(out.atoms[0], [0.6, 0.8, 0.0], atol=1e-15)

    def test_zero_row_error_names_entry(self):
        d = Dictionary(
            t1_ms=np.array([100.0, 200.0]),
            t2_ms=np.array([50.0, 60.0]),
            atoms=np.array([[0.1, 0.2], [0.0, 0.0]]),
            schedule_digest=bytes(32),
        )
        with pytest.raises(ValueError, match=r"atom 1 .*t1=200"):
            normalize(d)


class TestPersistence:
    def test_round_trip_bit_identical(self, small_dict, tmp_path):
        path = tmp_path / "dict.bin"
        save_dictionary(small_dict, path)
        back = load_dictionary(path)
        assert np.array_equal(back.atoms, small_dict.atoms)
        assert np.array_equal(back.t1_ms, small_dict.t1_ms)
        assert np.array_equal(back.t2_ms, small_dict.t2_ms)
        assert back.normalized == small_dict.normalized
        assert back.schedule_digest == small_dict.schedule_digest

    def test_round_trip_preserves_flags(self, small_dict, tmp_path):
        path = tmp_path / "dict.bin"
        save_dictionary(normalize(small_dict), path)
        assert load_dictionary(path).normalized

    def test_save_is_byte_stable(self, small_dict, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_dictionary(small_dict, a)
        save_dictionary(small_dict, b)
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(ValueError, match="magic"):
            load_dictionary(path)

    def test_rejects_truncation(self, small_dict, tmp_path):
        path = tmp_path / "dict.bin"
        save_dictionary(small_dict, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ValueError, match="truncated"):
            load_dictionary(path)
