import math

import numpy as np
import pytest

from occkit.dataset import Dataset, generate_gaussian_demo
from occkit.supervised import (
    ForestConfig,
    ForestModel,
    OmissionPlan,
    augment_with_noise,
    enumerate_combinations,
    gini_impurity,
    rf_fit,
    rf_predict,
    run_omission_experiment,
)


def _blobs(seed=0, n=50, centers=((0.2, 0.2), (0.8, 0.8))):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, 0.03, size=(n, 2)) for c in centers])
    y = np.array([0] * n + [1] * n)
    return X, y


# ---------------------------------------------------------------------------
# gini


def test_gini_pure_node():
    assert gini_impurity([10, 0]) == 0.0


def test_gini_even_split():
    assert gini_impurity([5, 5]) == 0.5


def test_gini_weighted():
    assert gini_impurity([2, 6]) == pytest.approx(0.375)


def test_gini_rejects_bad_counts():
    with pytest.raises(ValueError):
        gini_impurity([0, 0])
    with pytest.raises(ValueError):
        gini_impurity([-1, 3])


# ---------------------------------------------------------------------------
# forest


def test_rf_separable_blobs_perfect_training_accuracy():
    X, y = _blobs(1, n=50)
    model = rf_fit(X, y, ForestConfig(n_trees=30), seed=0)
    preds = rf_predict(model, X)
    assert np.array_equal(preds, y)


def test_rf_deterministic():
    X, y = _blobs(2)
    probes = np.random.default_rng(3).uniform(size=(25, 2))
    p1 = rf_predict(rf_fit(X, y, ForestConfig(n_trees=20), seed=9), probes)
    p2 = rf_predict(rf_fit(X, y, ForestConfig(n_trees=20), seed=9), probes)
    assert np.array_equal(p1, p2)


def test_rf_rejects_single_class():
    X = np.random.default_rng(4).uniform(size=(20, 2))
    with pytest.raises(ValueError, match="both classes"):
        rf_fit(X, np.zeros(20, dtype=int))


def test_rf_probe_at_centroid_gets_blob_label():
    X, y = _blobs(5, n=60)
    model = rf_fit(X, y, ForestConfig(n_trees=30), seed=1)
    preds = rf_predict(model, np.array([[0.2, 0.2], [0.8, 0.8]]))
    assert preds.tolist() == [0, 1]


def test_rf_empty_probe():
    X, y = _blobs(6)
    model = rf_fit(X, y, ForestConfig(n_trees=5), seed=0)
    assert rf_predict(model, np.zeros((0, 2))).shape == (0,)


def test_rf_tie_vote_is_attack():
    leaf0 = {"counts": [3, 0]}
    leaf1 = {"counts": [0, 3]}
    model = ForestModel(trees=(leaf0, leaf1), config=ForestConfig(n_trees=2), feature_count=1)
    assert rf_predict(model, np.array([[0.5]]))[0] == 1


def test_rf_leaf_tie_is_attack():
    model = ForestModel(
        trees=({"counts": [2, 2]},), config=ForestConfig(n_trees=1), feature_count=1
    )
    assert rf_predict(model, np.array([[0.0]]))[0] == 1


def test_rf_split_values_inside_node_range():
    X, y = _blobs(7, n=40)
    model = rf_fit(X, y, ForestConfig(n_trees=10), seed=2)

    def check(node, lo, hi):
        if "counts" in node:
            return
        f, v = node["feature"], node["value"]
        assert lo[f] <= v <= hi[f]
        left_hi = hi.copy()
        left_hi[f] = v
        right_lo = lo.copy()
        right_lo[f] = v
        check(node["left"], lo, left_hi)
        check(node["right"], right_lo, hi)

    for tree in model.trees:
        check(tree, np.full(2, -np.inf), np.full(2, np.inf))


def test_rf_majority_matches_brute_force_over_serialized_trees():
    X, y = _blobs(8, n=40)
    model = rf_fit(X, y, ForestConfig(n_trees=15), seed=3)
    probes = np.random.default_rng(9).uniform(size=(20, 2))
    got = rf_predict(model, probes)

    def tree_vote(node, x):
        while "counts" not in node:
            node = node["left"] if x[node["feature"]] < node["value"] else node["right"]
        return 1 if node["counts"][1] >= node["counts"][0] else 0

    for i, x in enumerate(probes):
        votes = sum(tree_vote(t, x) for t in model.trees)
        assert got[i] == (1 if 2 * votes >= len(model.trees) else 0)


# ---------------------------------------------------------------------------
# combinations and noise


def test_enumerate_combinations_counts():
    tags = ["a1", "a2", "a3", "a4"]
    assert len(enumerate_combinations(tags, 2)) == 6
    assert enumerate_combinations(tags, 0) == [()]
    assert enumerate_combinations(tags, 4) == [("a1", "a2", "a3", "a4")]
    with pytest.raises(ValueError):
        enumerate_combinations(tags, 5)


def test_enumerate_combinations_binomial_identity():
    tags = [f"a{i}" for i in range(10)]
    for k in range(11):
        expect = math.comb(10, k)
        assert len(enumerate_combinations(tags, k)) == expect


def _train_set(n_normal, n_attack, seed=0):
    rng = np.random.default_rng(seed)
    n = n_normal + n_attack
    X = rng.uniform(size=(n, 3))
    y = np.array([0] * n_normal + [1] * n_attack)
    tags = ("",) * n_normal + ("a1",) * n_attack
    return Dataset(X=X, y=y, attack_type=tags, feature_names=("f0", "f1", "f2"))


def test_augment_with_noise_counts():
    train = _train_set(700, 200)
    augmented = augment_with_noise(train, seed=1)
    assert augmented.n_rows == 700 + 200 + 700
    assert int((augmented.y == 1).sum()) == 900


def test_augment_with_noise_balances_pure_normal_training():
    train = _train_set(500, 0)
    augmented = augment_with_noise(train, seed=2)
    assert augmented.n_rows == 1000
    assert int((augmented.y == 0).sum()) == int((augmented.y == 1).sum()) == 500


def test_augment_noise_block_identical_across_omissions():
    # different surviving attacks, same normals, same seed -> same noise rows
    a = augment_with_noise(_train_set(300, 50, seed=3), seed=9)
    b = augment_with_noise(_train_set(300, 120, seed=4), seed=9)
    noise_a = a.X[-300:]
    noise_b = b.X[-300:]
    assert np.array_equal(noise_a, noise_b)


# ---------------------------------------------------------------------------
# omission experiment


@pytest.fixture(scope="module")
def small_demo_result():
    demo = generate_gaussian_demo(1, n_normal=300, n_attack=100)
    plan = OmissionPlan(
        attack_types=demo.attack_tags(), k_values=(1, 2), with_noise=True, n_runs=3, base_seed=5
    )
    return demo, plan, run_omission_experiment(demo, plan, ForestConfig(n_trees=30))


def test_omission_grid_shape(small_demo_result):
    _, plan, result = small_demo_result
    # k=0: 1 combo, k=1: 2 combos, k=2: 1 combo; 2 arms, 3 runs
    assert len(result.cells) == (1 + 2 + 1) * 2 * 3
    ks = sorted({c.k for c in result.cells})
    assert ks == [0, 1, 2]
    assert {c.arm for c in result.cells} == {"plain", "noise"}


def test_omission_unseen_middle_cluster_phenomenon(small_demo_result):
    _, _, result = small_demo_result
    plain = [c.omitted_recall for c in result.cells if c.k == 1 and c.combination == ("a1",) and c.arm == "plain"]
    noisy = [c.omitted_recall for c in result.cells if c.k == 1 and c.combination == ("a1",) and c.arm == "noise"]
    assert np.mean(plain) <= 20.0
    assert np.mean(noisy) >= 80.0


def test_omission_all_attacks_removed_collapses_plain_arm(small_demo_result):
    _, _, result = small_demo_result
    k2_plain = [c for c in result.cells if c.k == 2 and c.arm == "plain"]
    assert all(c.attack_recall == 0.0 and c.attack_f1 == 0.0 for c in k2_plain)


def test_omission_noise_neutral_at_k0(small_demo_result):
    _, _, result = small_demo_result
    acc = {arm: result.per_k[(0, arm)]["accuracy"][0] for arm in ("plain", "noise")}
    assert abs(acc["plain"] - acc["noise"]) < 2.0


def test_omission_aggregate_recomputation(small_demo_result):
    _, _, result = small_demo_result
    # independent recomputation of Avg(metric_k) from the stored cells
    for (k, arm), summary in result.per_k.items():
        for metric, (mean, std) in summary.items():
            by_combo = {}
            for cell in result.cells:
                if cell.k == k and cell.arm == arm:
                    by_combo.setdefault(cell.combination_id, []).append(cell.metric(metric))
            combo_means = [sum(v) / len(v) for _, v in sorted(by_combo.items())]
            want_mean = sum(combo_means) / len(combo_means)
            want_std = math.sqrt(
                sum((v - want_mean) ** 2 for v in combo_means) / len(combo_means)
            )
            assert abs(mean - want_mean) <= 1e-12
            assert abs(std - want_std) <= 1e-12


def test_omission_plain_recall_non_increasing_in_k():
    demo = generate_gaussian_demo(2, n_normal=300, n_attack=100)
    plan = OmissionPlan(
        attack_types=demo.attack_tags(),
        k_values=(1, 2),
        with_noise=False,
        n_runs=10,
        base_seed=11,
    )
    result = run_omission_experiment(demo, plan, ForestConfig(n_trees=30))
    recalls = [result.per_k[(k, "plain")]["attack_recall"][0] for k in (0, 1, 2)]
    inversions = sum(1 for a, b in zip(recalls, recalls[1:]) if b > a + 1e-9)
    assert inversions <= 1
    assert all(b <= a + 2.0 for a, b in zip(recalls, recalls[1:]))


def test_omission_rejects_unknown_attack_type():
    demo = generate_gaussian_demo(3, n_normal=60, n_attack=20)
    plan = OmissionPlan(attack_types=("zzz",), k_values=(1,), n_runs=1)
    with pytest.raises(ValueError, match="not present"):
        run_omission_experiment(demo, plan, ForestConfig(n_trees=2))


def test_omission_combination_cap():
    rng = np.random.default_rng(12)
    tags = tuple(f"a{i}" for i in range(6))
    n_attack = 6 * 12
    X = rng.uniform(size=(120 + n_attack, 2))
    y = np.array([0] * 120 + [1] * n_attack)
    attack_type = ("",) * 120 + tuple(tags[i // 12] for i in range(n_attack))
    data = Dataset(X=X, y=y, attack_type=attack_type, feature_names=("f0", "f1"))
    plan = OmissionPlan(
        attack_types=tags,
        k_values=(3,),
        with_noise=False,
        n_runs=1,
        base_seed=1,
        combination_cap=5,
    )
    result = run_omission_experiment(data, plan, ForestConfig(n_trees=4))
    k3 = {c.combination for c in result.cells if c.k == 3}
    assert len(k3) == 5  # capped below C(6,3) = 20
