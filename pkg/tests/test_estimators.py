import numpy as np
import pytest

from ncelm.diagnostics import (
    exact_oracle_check,
    flatten_gradient,
    gradient_check,
    nce_limit_gaps,
    random_instance,
)
from ncelm.errors import DegenerateWeightsError, SupportError
from ncelm.estimators import (
    Gradient,
    exact_nce_gradient,
    is_gradient,
    ml_gradient,
    ml_gradient_and_objective,
    ml_objective,
    nce_gradient,
    nce_gradient_and_objective,
    nce_objective,
    update_normalizers,
    zero_gradient,
)
from ncelm.model import LblParams, NormalizerStore, init_params
from ncelm.noise import from_counts, uniform


def _zero_params(v=5, d=2, c=1):
    return init_params(v, d, c, init_scale=0.0, dtype=np.float64)


def test_ml_gradient_at_uniform_model_by_hand():
    params = _zero_params()
    batch = (np.array([[2]]), np.array([3]))
    grad, objective = ml_gradient_and_objective(params, NormalizerStore(), batch)

    # All scores are zero, so the model is uniform over the 5 words.
    assert np.isclose(objective, np.log(1 / 5))
    expected_bias = np.full(5, -0.2)
    expected_bias[3] += 1.0
    assert np.allclose(grad.bias_grads, expected_bias)
    # Zero feature vectors mean zero feature gradients.
    assert np.allclose(grad.target_vector_grads, 0.0)
    assert np.allclose(grad.context_vector_grads, 0.0)
    assert np.allclose(grad.transform_grads, 0.0)
    assert grad.normalizer_grads == {}


def test_ml_objective_matches_gradient_and_objective():
    params, normalizers, batch, _, _ = random_instance(3)
    _, objective = ml_gradient_and_objective(params, normalizers, batch)
    assert np.isclose(objective, ml_objective(params, normalizers, batch))


def test_ml_gradient_is_additive_over_examples():
    params, normalizers, batch, _, _ = random_instance(4)
    contexts, targets = batch
    first = (contexts[:2], targets[:2])
    rest = (contexts[2:], targets[2:])

    merged = ml_gradient(params, normalizers, first).add(
        ml_gradient(params, normalizers, rest)
    )
    whole = ml_gradient(params, normalizers, batch)
    assert np.allclose(
        flatten_gradient(merged, params), flatten_gradient(whole, params)
    )


def test_batch_adapter_accepts_dataset_tuple_and_example_list():
    from ncelm.corpus import Dataset

    params, normalizers, (contexts, targets), _, _ = random_instance(5)
    as_tuple = ml_gradient(params, normalizers, (contexts, targets))
    as_dataset = ml_gradient(
        params, normalizers, Dataset(contexts, targets, contexts.shape[1], "stream")
    )
    as_list = ml_gradient(
        params, normalizers, list(zip(contexts, targets))
    )
    flat = flatten_gradient(as_tuple, params)
    assert np.array_equal(flat, flatten_gradient(as_dataset, params))
    assert np.array_equal(flat, flatten_gradient(as_list, params))


@pytest.mark.parametrize("seed", [0, 1])
def test_finite_difference_agreement_all_estimators(seed):
    errors = gradient_check(seed)
    assert set(errors) == {"ml", "nce", "nce_shared", "is"}
    for name, err in errors.items():
        assert err < 1e-5, name


def test_enumeration_oracle_matches_finite_differences():
    assert exact_oracle_check(0) < 1e-8
    assert exact_oracle_check(1) < 1e-8


def test_nce_monte_carlo_mean_matches_enumeration():
    rng = np.random.default_rng(11)
    v, d, k = 12, 3, 3
    params = init_params(v, d, 2, init_scale=0.4, seed=2, dtype=np.float64)
    noise = from_counts(rng.integers(1, 9, size=v))
    normalizers = NormalizerStore()
    context = np.array([4, 7])
    target = 5
    batch = (context[None, :], np.array([target]))

    one_hot = np.zeros(v)
    one_hot[target] = 1.0
    exact = flatten_gradient(
        exact_nce_gradient(params, normalizers, one_hot, context, noise, k), params
    )

    draws = 3000
    flats = np.empty((draws, exact.size))
    for i in range(draws):
        grad = nce_gradient(params, normalizers, batch, noise, k, rng)
        flats[i] = flatten_gradient(grad, params)
    mean = flats.mean(axis=0)
    sem = flats.std(axis=0, ddof=1) / np.sqrt(draws)
    assert np.all(np.abs(mean - exact) <= 5.0 * sem + 1e-12)


def test_nce_limit_gaps_shrink_toward_ml():
    grid, gaps = nce_limit_gaps(0, k_grid=(1, 10, 100))
    assert grid == [1, 10, 100]
    assert gaps[0] >= gaps[1] >= gaps[2]
    assert gaps[2] < 0.1


def test_nce_objective_replays_gradient_draws():
    params, normalizers, batch, noise, _ = random_instance(7)
    for shared in (False, True):
        _, obj = nce_gradient_and_objective(
            params, normalizers, batch, noise, 4,
            np.random.default_rng(123), share_samples=shared,
        )
        replayed = nce_objective(
            params, normalizers, batch, noise, 4,
            np.random.default_rng(123), share_samples=shared,
        )
        assert obj == replayed
        assert obj < 0.0  # sum of log probabilities of binary labels


def test_nce_shared_touches_at_most_k_sample_rows():
    params, normalizers, (contexts, targets), noise, _ = random_instance(9)
    k = 3
    grad, _ = nce_gradient_and_objective(
        params, normalizers, (contexts, targets), noise, k,
        np.random.default_rng(0), share_samples=True,
    )
    assert grad.target_vector_ids.size <= np.unique(targets).size + k


def test_nce_rejects_targets_outside_noise_support():
    params = _zero_params(v=4)
    noise = from_counts([5, 0, 5, 5], smoothing=0.0)
    batch = (np.array([[2]]), np.array([1]))
    with pytest.raises(SupportError, match="word 1"):
        nce_gradient(params, NormalizerStore(), batch, noise, 2, np.random.default_rng(0))


def test_is_stats_are_simplex_weights():
    params, normalizers, batch, noise, _ = random_instance(2)
    k = 6
    grad, stats = is_gradient(params, normalizers, batch, noise, k, np.random.default_rng(5))
    assert 0.0 < stats.max_weight_fraction <= 1.0
    assert 1.0 <= stats.ess <= k
    assert stats.sum_weights > 0.0
    assert grad.normalizer_grads == {}


def test_is_gradient_ignores_stored_normalizers():
    params, _, batch, noise, _ = random_instance(6)
    contexts = batch[0]
    shifted = NormalizerStore("per-context")
    for row in contexts:
        shifted.table[tuple(int(i) for i in row)] = 2.5

    a, _ = is_gradient(params, NormalizerStore(), batch, noise, 4, np.random.default_rng(9))
    b, _ = is_gradient(params, shifted, batch, noise, 4, np.random.default_rng(9))
    assert np.array_equal(flatten_gradient(a, params), flatten_gradient(b, params))


def test_is_raises_when_all_weights_vanish():
    params = _zero_params(v=4)
    params.biases -= np.inf
    batch = (np.array([[0]]), np.array([2]))
    with pytest.raises(DegenerateWeightsError):
        is_gradient(params, NormalizerStore(), batch, uniform(4), 3, np.random.default_rng(0))


def test_zero_gradient_is_additive_identity():
    params, normalizers, batch, _, _ = random_instance(8)
    grad = ml_gradient(params, normalizers, batch)
    same = grad.add(zero_gradient(params))
    assert np.array_equal(
        flatten_gradient(same, params), flatten_gradient(grad, params)
    )


def test_gradient_add_merges_normalizer_terms():
    empty = np.empty(0, dtype=np.int64)
    shell = dict(
        context_vector_ids=empty, context_vector_grads=np.zeros((0, 2)),
        target_vector_ids=empty, target_vector_grads=np.zeros((0, 2)),
        transform_grads=np.zeros((1, 2)), bias_ids=empty, bias_grads=np.zeros(0),
    )
    a = Gradient(**shell, normalizer_grads={(1, 2): 1.0, (3, 4): 0.5})
    b = Gradient(**shell, normalizer_grads={(1, 2): -0.25})
    merged = a.add(b)
    assert merged.normalizer_grads == {(1, 2): 0.75, (3, 4): 0.5}


def test_update_normalizers_accumulates_per_context():
    grad = zero_gradient(init_params(3, 2, 2))
    grad.normalizer_grads = {(1, 2): 2.0}
    store = NormalizerStore("per-context")
    update_normalizers(grad, store, 0.1)
    assert np.isclose(store.lookup([1, 2]), 0.2)
    update_normalizers(grad, store, 0.1)
    assert np.isclose(store.lookup([1, 2]), 0.4)

    fixed = NormalizerStore("fixed-one")
    update_normalizers(grad, fixed, 0.1)
    assert fixed.table == {}


def test_nce_uses_stored_normalizer_in_scores():
    # Raising the stored log-normalizer makes the model look more
    # confident, shifting every posterior weight the same direction.
    params, _, batch, noise, _ = random_instance(10, normalizer_mode="fixed-one")
    contexts = batch[0]
    raised = NormalizerStore("per-context")
    for row in contexts:
        raised.table[tuple(int(i) for i in row)] = 3.0

    flat = NormalizerStore()
    obj_flat = nce_objective(params, flat, batch, noise, 2, np.random.default_rng(1))
    obj_raised = nce_objective(params, raised, batch, noise, 2, np.random.default_rng(1))
    assert obj_flat != obj_raised
