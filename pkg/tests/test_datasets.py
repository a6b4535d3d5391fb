import math

import numpy as np
import pytest

import elliptic_landscape as el
from elliptic_landscape.network import DomainError


class TestTwoMoons:
    def test_noiseless_class_zero_on_upper_half_circle(self, rng):
        ds = el.two_moons(40, 0.0, rng.child(0))
        cls0 = ds.features[ds.targets[:, 0] == 1.0]
        t = np.linspace(0.0, math.pi, 20)
        np.testing.assert_allclose(cls0, np.column_stack([np.cos(t), np.sin(t)]), atol=1e-15)

    def test_labels_balanced(self, rng):
        for n in (10, 11, 100, 101):
            ds = el.two_moons(n, 0.1, rng.child(1, n))
            c0 = int(ds.targets[:, 0].sum())
            assert abs(c0 - (n - c0)) <= 1

    def test_noisy_centroids_match_parameterization(self, rng):
        n, noise = 10_000, 0.1
        ds = el.two_moons(n, noise, rng.child(2))
        t = np.linspace(0.0, math.pi, n // 2)
        for cls, ref in (
            (0, np.column_stack([np.cos(t), np.sin(t)])),
            (1, np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])),
        ):
            got = ds.features[ds.targets[:, cls] == 1.0].mean(axis=0)
            se = noise / np.sqrt(n / 2)
            assert np.all(np.abs(got - ref.mean(axis=0)) <= 3.0 * se)

    def test_one_hot_targets(self, rng):
        ds = el.two_moons(30, 0.05, rng.child(3))
        assert ds.task == "classification" and ds.num_classes == 2
        assert np.all(ds.targets.sum(axis=1) == 1.0)
        assert np.all((ds.targets == 0.0) | (ds.targets == 1.0))


class TestSyntheticSine:
    def test_noiseless_matches_formula(self, rng):
        ds = el.synthetic_sine(200, 0.0, rng.child(4))
        np.testing.assert_array_equal(ds.targets, np.sin(2.0 * math.pi * ds.features))
        assert np.all((ds.features >= 0.0) & (ds.features <= 1.0))

    def test_quarter_period_peak(self):
        # the generating map sends x = 1/4 to exactly 1
        assert np.sin(2.0 * math.pi * 0.25) == 1.0

    def test_erm_baseline_reaches_noise_floor(self, rng):
        noise = 0.1
        gen = rng.child(5).generator()
        train = el.synthetic_sine(400, noise, gen)
        test = el.synthetic_sine(400, noise, gen)
        model = el.init_mlp([1, 32, 32, 1], gen, activation="leaky_relu")
        state = el.adam_state(model)
        for epoch in range(240):
            order = gen.permutation(train.n)
            for start in range(0, train.n, 64):
                idx = order[start : start + 64]
                _, grads = el.erm_objective(model, train.features[idx], train.targets[idx], "mse")
                el.optimizer_step(state, model, grads, 1e-2)
        pred = el.forward(model, test.features)
        rmse = float(np.sqrt(np.mean((pred - test.targets) ** 2)))
        assert rmse < 2.0 * noise


class TestLoadCsv:
    def write(self, tmp_path, text, name="data.csv"):
        p = tmp_path / name
        p.write_text(text)
        return p

    def test_min_max_normalization(self, tmp_path):
        p = self.write(tmp_path, "a,b,t\n0,7,1\n5,7,2\n10,7,3\n")
        ds = el.load_csv(p, ["t"])
        np.testing.assert_array_equal(ds.features[:, 0], [0.0, 0.5, 1.0])
        # constant column normalizes to zero
        np.testing.assert_array_equal(ds.features[:, 1], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(ds.targets[:, 0], [1.0, 2.0, 3.0])

    def test_round_trip_denormalization(self, tmp_path, rng):
        gen = rng.child(6).generator()
        rows = gen.standard_normal((20, 3)) * 5.0 + 2.0
        text = "x0,x1,y\n" + "\n".join(",".join(f"{v:.17g}" for v in r) for r in rows) + "\n"
        ds = el.load_csv(self.write(tmp_path, text), ["y"])
        back = el.denormalize_features(ds, ds.features)
        np.testing.assert_allclose(back, rows[:, :2], atol=1e-12)

    def test_unnormalized_load(self, tmp_path):
        p = self.write(tmp_path, "a,t\n3,1\n9,2\n")
        ds = el.load_csv(p, ["t"], normalize=False)
        np.testing.assert_array_equal(ds.features[:, 0], [3.0, 9.0])
        assert ds.feature_range is None

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DomainError, match="cannot open"):
            el.load_csv(tmp_path / "nope.csv", ["t"])

    def test_ragged_row_reported_with_number(self, tmp_path):
        p = self.write(tmp_path, "a,b,t\n1,2,3\n1,2\n")
        with pytest.raises(DomainError, match="row 3"):
            el.load_csv(p, ["t"])

    def test_non_numeric_rows_reported(self, tmp_path):
        p = self.write(tmp_path, "a,t\n1,2\nfoo,3\n4,bar\n")
        with pytest.raises(DomainError, match=r"rows \[3, 4\]"):
            el.load_csv(p, ["t"])

    def test_mean_padding_fills_missing_cells(self, tmp_path):
        p = self.write(tmp_path, "a,t\n1,5\n,6\n3,7\n")
        ds = el.load_csv(p, ["t"], normalize=False, mean_pad=True)
        assert ds.features[1, 0] == pytest.approx(2.0)

    def test_unknown_target_column_rejected(self, tmp_path):
        p = self.write(tmp_path, "a,t\n1,2\n")
        with pytest.raises(DomainError, match="'z'"):
            el.load_csv(p, ["z"])

    def test_airfoil_shaped_file_and_protocol_split(self, tmp_path, rng):
        gen = rng.child(7).generator()
        header = "freq,aoa,chord,velocity,thickness,pressure"
        rows = gen.random((1503, 6)) * 100.0
        text = header + "\n" + "\n".join(",".join(f"{v:.6f}" for v in r) for r in rows)
        ds = el.load_csv(self.write(tmp_path, text), ["pressure"])
        assert ds.n == 1503 and ds.d == 5 and ds.k == 1
        parts = el.split(ds, [1003 / 1503, 300 / 1503, 200 / 1503], rng.child(8))
        assert [p.n for p in parts] == [1003, 300, 200]


class TestSplit:
    def make(self, n, rng):
        gen = rng.child(9).generator()
        return el.Dataset(gen.standard_normal((n, 2)), gen.standard_normal((n, 1)))

    def test_identity_split(self, rng):
        ds = self.make(10, rng)
        (only,) = el.split(ds, [1.0], rng.child(10))
        assert only.n == 10
        assert sorted(map(tuple, only.features)) == sorted(map(tuple, ds.features))

    def test_half_half(self, rng):
        ds = self.make(10, rng)
        a, b = el.split(ds, [0.5, 0.5], rng.child(11))
        assert a.n == b.n == 5
        joined = np.vstack([a.features, b.features])
        assert sorted(map(tuple, joined)) == sorted(map(tuple, ds.features))

    def test_same_seed_same_assignment(self, rng):
        ds = self.make(30, rng)
        a1, b1 = el.split(ds, [0.3, 0.7], rng.child(12))
        a2, b2 = el.split(ds, [0.3, 0.7], rng.child(12))
        assert np.array_equal(a1.features, a2.features)
        assert np.array_equal(b1.features, b2.features)

    def test_empty_subset_rejected(self, rng):
        ds = self.make(3, rng)
        with pytest.raises(DomainError, match="empty"):
            el.split(ds, [0.99, 0.01], rng.child(13))

    def test_fractions_must_sum_to_one(self, rng):
        ds = self.make(4, rng)
        with pytest.raises(DomainError):
            el.split(ds, [0.5, 0.6], rng.child(14))
