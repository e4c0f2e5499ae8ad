"""Numerical health checks: finite-difference gradient verification,
the large-k agreement between contrastive and ML gradients, the
importance-sampling instability probe, and the update-cost predictions.

These run at desk scale (tiny vocabularies, float64) in seconds and are
shared by the test suite and the diagnose command.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from . import estimators
from .errors import ConfigError, DegenerateWeightsError, DivergenceError
from .estimators import (
    Gradient,
    exact_nce_gradient,
    expected_ml_gradient,
)
from .model import LblParams, NormalizerStore, init_params
from .noise import NoiseDistribution, from_counts
from .trainer import TrainConfig, train
from .corpus import extract_pairs
from .synthetic import make_vocab
from .evaluation import predicted_speedup

FD_STEP = 1e-5


def flatten_params(
    params: LblParams,
    normalizers: NormalizerStore | None = None,
    norm_keys=(),
) -> np.ndarray:
    """All parameters as one float64 vector, normalizer entries last."""
    parts = [
        np.asarray(t, dtype=np.float64).ravel()
        for t in (
            params.context_vectors,
            params.target_vectors,
            params.context_transforms,
            params.biases,
        )
    ]
    if norm_keys:
        parts.append(
            np.array(
                [normalizers.table.get(key, 0.0) for key in norm_keys],
                dtype=np.float64,
            )
        )
    return np.concatenate(parts)


def unflatten_params(
    params: LblParams,
    normalizers: NormalizerStore,
    norm_keys,
    vector: np.ndarray,
) -> tuple[LblParams, NormalizerStore]:
    """Rebuild float64 parameters and normalizers from a flat vector."""
    new = params.astype(np.float64)
    offset = 0
    for tensor in (
        new.context_vectors,
        new.target_vectors,
        new.context_transforms,
        new.biases,
    ):
        n = tensor.size
        tensor[...] = vector[offset : offset + n].reshape(tensor.shape)
        offset += n
    store = normalizers.copy()
    for key in norm_keys:
        store.table[key] = float(vector[offset])
        offset += 1
    if offset != vector.size:
        raise ConfigError(
            f"vector has {vector.size} entries, expected {offset}"
        )
    return new, store


def flatten_gradient(
    gradient: Gradient, params: LblParams, norm_keys=()
) -> np.ndarray:
    """Densify a sparse Gradient into the flatten_params layout."""
    v, d = params.vocab_size, params.dim
    ctx = np.zeros((v, d))
    ctx[gradient.context_vector_ids] = gradient.context_vector_grads
    tgt = np.zeros((v, d))
    tgt[gradient.target_vector_ids] = gradient.target_vector_grads
    bias = np.zeros(v)
    bias[gradient.bias_ids] = gradient.bias_grads
    parts = [
        ctx.ravel(),
        tgt.ravel(),
        np.asarray(gradient.transform_grads, dtype=np.float64).ravel(),
        bias,
    ]
    if norm_keys:
        parts.append(
            np.array(
                [gradient.normalizer_grads.get(key, 0.0) for key in norm_keys]
            )
        )
    return np.concatenate(parts)


def finite_difference_gradient(
    objective_fn,
    params: LblParams,
    normalizers: NormalizerStore | None = None,
    norm_keys=(),
    step: float = FD_STEP,
) -> np.ndarray:
    """Central differences of objective_fn over every parameter.

    objective_fn takes (params, normalizers) and must be deterministic;
    stochastic objectives need their sample draws frozen (replay the
    same rng seed on every call).
    """
    if normalizers is None:
        normalizers = NormalizerStore(mode="fixed-one")
    base = flatten_params(params, normalizers, norm_keys)
    grad = np.empty_like(base)
    probe = base.copy()
    for i in range(base.size):
        probe[i] = base[i] + step
        plus = objective_fn(*unflatten_params(params, normalizers, norm_keys, probe))
        probe[i] = base[i] - step
        minus = objective_fn(*unflatten_params(params, normalizers, norm_keys, probe))
        probe[i] = base[i]
        grad[i] = (plus - minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst coordinate-wise relative disagreement, floored at unit scale.

    |a - n| / max(|a|, |n|, 1) per coordinate, so tiny absolute noise on
    near-zero coordinates does not register as huge relative error.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())


def random_instance(
    seed: int,
    vocab_size: int | None = None,
    dim: int | None = None,
    context_size: int | None = None,
    batch_size: int = 4,
    matrix_mode: str | None = None,
    normalizer_mode: str = "per-context",
):
    """A small random model, batch, and noise distribution for checks.

    Shapes default to random draws within desk-scale bounds (V <= 50,
    d <= 8, c <= 3); matrix mode alternates with the seed unless pinned.
    """
    rng = np.random.default_rng(seed)
    v = vocab_size if vocab_size is not None else int(rng.integers(8, 51))
    d = dim if dim is not None else int(rng.integers(2, 9))
    c = context_size if context_size is not None else int(rng.integers(1, 4))
    mode = matrix_mode if matrix_mode is not None else ("full", "diagonal")[seed % 2]
    if mode == "full":
        transforms = rng.normal(0.0, 0.5, size=(c, d, d))
    else:
        transforms = rng.normal(1.0, 0.3, size=(c, d))
    params = LblParams(
        context_vectors=rng.normal(0.0, 0.6, size=(v, d)),
        target_vectors=rng.normal(0.0, 0.6, size=(v, d)),
        context_transforms=transforms,
        biases=rng.normal(0.0, 0.5, size=v),
        matrix_mode=mode,
        dim=d,
        context_size=c,
    )
    contexts = rng.integers(0, v, size=(batch_size, c)).astype(np.int64)
    targets = rng.integers(0, v, size=batch_size).astype(np.int64)
    noise = from_counts(rng.integers(1, 20, size=v).astype(np.int64))
    normalizers = NormalizerStore(mode=normalizer_mode)
    norm_keys = sorted({tuple(int(i) for i in row) for row in contexts})
    if normalizer_mode == "per-context":
        for key in norm_keys:
            normalizers.table[key] = float(rng.normal(0.0, 0.3))
    else:
        norm_keys = []
    return params, normalizers, (contexts, targets), noise, norm_keys


def gradient_check(
    seed: int = 0, batch_size: int = 4, k: int = 3, step: float = FD_STEP
) -> dict[str, float]:
    """Max relative error of each estimator's gradient against central
    finite differences of its own objective, samples frozen by replaying
    one rng seed. Includes the per-context normalizer coordinates."""
    params, normalizers, batch, noise, norm_keys = random_instance(
        seed, batch_size=batch_size
    )
    draw_seed = np.random.SeedSequence([seed, 77]).generate_state(1)[0]
    errors = {}

    grad = estimators.ml_gradient(params, normalizers, batch)
    fd = finite_difference_gradient(
        lambda p, nm: estimators.ml_objective(p, nm, batch),
        params, normalizers, norm_keys, step,
    )
    errors["ml"] = max_relative_error(
        flatten_gradient(grad, params, norm_keys), fd
    )

    for share in (False, True):
        label = "nce_shared" if share else "nce"
        grad = estimators.nce_gradient(
            params, normalizers, batch, noise, k,
            np.random.default_rng(draw_seed), share_samples=share,
        )
        fd = finite_difference_gradient(
            lambda p, nm: estimators.nce_objective(
                p, nm, batch, noise, k,
                np.random.default_rng(draw_seed), share_samples=share,
            ),
            params, normalizers, norm_keys, step,
        )
        errors[label] = max_relative_error(
            flatten_gradient(grad, params, norm_keys), fd
        )

    grad, _ = estimators.is_gradient(
        params, normalizers, batch, noise, k, np.random.default_rng(draw_seed)
    )
    fd = finite_difference_gradient(
        lambda p, nm: estimators.is_objective(
            p, nm, batch, noise, k, np.random.default_rng(draw_seed)
        ),
        params, normalizers, norm_keys, step,
    )
    errors["is"] = max_relative_error(
        flatten_gradient(grad, params, norm_keys), fd
    )
    return errors


def exact_oracle_check(seed: int = 0, k: int = 7, step: float = FD_STEP) -> float:
    """Finite-difference check of the enumeration oracle itself."""
    params, normalizers, batch, noise, norm_keys = random_instance(seed)
    rng = np.random.default_rng(seed + 1)
    data_dist = rng.dirichlet(np.ones(params.vocab_size))
    context = batch[0][0]
    key = tuple(int(i) for i in context)
    keys = [key]
    grad = exact_nce_gradient(params, normalizers, data_dist, context, noise, k)
    fd = finite_difference_gradient(
        lambda p, nm: estimators.exact_nce_objective(
            p, nm, data_dist, context, noise, k
        ),
        params, normalizers, keys, step,
    )
    return max_relative_error(flatten_gradient(grad, params, keys), fd)


def nce_limit_gaps(seed: int = 0, k_grid=(1, 10, 100, 1000, 10_000)):
    """Relative gap between the contrastive expected gradient and the ML
    expected gradient as the noise multiple k grows.

    The instance stores the exact negative log partition function as its
    per-context normalizer, so the unnormalized model is in fact
    normalized and the large-k limit is the ML expected gradient.
    """
    params, normalizers, batch, noise, _ = random_instance(
        seed, normalizer_mode="per-context"
    )
    rng = np.random.default_rng(seed + 1000)
    context = batch[0][0]
    key = tuple(int(i) for i in context)

    from .model import predicted_representation

    qhat = predicted_representation(params, context).astype(np.float64)
    scores = params.target_vectors.astype(np.float64) @ qhat
    scores += params.biases.astype(np.float64)
    normalizers.table[key] = float(-logsumexp(scores))

    data_dist = rng.dirichlet(np.ones(params.vocab_size))
    keys = [key]
    ml_vec = flatten_gradient(
        expected_ml_gradient(params, normalizers, data_dist, context),
        params, keys,
    )
    ml_norm = float(np.linalg.norm(ml_vec))
    gaps = []
    for k in k_grid:
        vec = flatten_gradient(
            exact_nce_gradient(params, normalizers, data_dist, context, noise, k),
            params, keys,
        )
        gaps.append(float(np.linalg.norm(vec - ml_vec)) / ml_norm)
    return list(k_grid), gaps


def importance_stability_probe(
    seed: int = 0,
    vocab_size: int = 60,
    dim: int = 8,
    context_size: int = 2,
    k: int = 5,
    max_epochs: int = 20,
    learning_rate: float = 0.02,
    minibatch_size: int = 50,
    weight_penalty: float = 1e-4,
) -> dict:
    """Train the same mismatched instance with IS and with NCE.

    The instance is adversarial for importance sampling: the initial
    model piles probability onto one word while the proposal is uniform,
    so a sampled high-score word grabs nearly the whole weight sum. The
    data itself is well-behaved (drawn from a coherent generating
    model); only the starting point and proposal are hostile. The probe
    reports how the IS run ended (degenerate weights, divergence, or
    neither) and whether the NCE run completed; NCE's per-word weights
    are bounded in [0, 1] by construction and asserted in the estimator.
    """
    from .synthetic import generate_sentences, make_truth_params

    rng = np.random.default_rng(seed)
    truth = make_truth_params(
        vocab_size, dim, context_size, seed=seed + 5, feature_scale=0.3
    )
    sentences = generate_sentences(truth, 400, 5, 10, rng)
    train_set = extract_pairs(sentences[:360], context_size)
    valid_set = extract_pairs(sentences[360:], context_size)
    vocab = make_vocab(vocab_size)

    def peaked_params():
        p = init_params(
            vocab_size, dim, context_size, init_scale=0.2, seed=seed
        )
        p.biases[2] = 12.0
        return p

    result = {"k": k, "max_epochs": max_epochs}
    base = dict(
        k=k,
        noise_kind="uniform",
        minibatch_size=minibatch_size,
        initial_lr=learning_rate,
        max_epochs=max_epochs,
        weight_penalty=weight_penalty,
        seed=seed,
        dim=dim,
        warm_start_bias=False,
    )
    try:
        # The hostile run is expected to overflow float32 on its way
        # down; keep its warnings out of caller logs.
        with np.errstate(over="ignore", invalid="ignore"):
            _, _, history = train(
                TrainConfig(estimator="is", **base),
                train_set, valid_set, vocab,
                initial_params=peaked_params(),
            )
    except DivergenceError as err:
        result["is_outcome"] = "divergence"
        result["is_epoch"] = err.epoch
        result["is_max_weight"] = None
    except DegenerateWeightsError:
        result["is_outcome"] = "degenerate-weights"
        result["is_max_weight"] = None
    else:
        peak = max(history.max_weight_fractions)
        result["is_outcome"] = "completed"
        result["is_max_weight"] = peak

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            _, _, nce_history = train(
                TrainConfig(estimator="nce", **base),
                train_set, valid_set, vocab,
                initial_params=peaked_params(),
            )
    except (DivergenceError, DegenerateWeightsError) as err:
        result["nce_completed"] = False
        result["nce_failure"] = type(err).__name__
    else:
        result["nce_completed"] = True
        result["nce_epochs"] = len(nce_history.records)

    triggered = result["is_outcome"] in ("divergence", "degenerate-weights") or (
        result["is_max_weight"] is not None and result["is_max_weight"] > 0.95
    )
    result["is_unstable"] = triggered
    return result


def speedup_values() -> dict[str, float]:
    """Predicted update-cost ratios at the reference shape."""
    return {
        "full": predicted_speedup(2, 100, 10_000, 25, "full"),
        "diagonal": predicted_speedup(2, 100, 10_000, 25, "diagonal"),
    }


def run_diagnostic(name: str, seed: int = 0) -> tuple[dict, bool]:
    """Execute one named diagnostic; returns (report, passed)."""
    if name == "gradcheck":
        report = {}
        worst = 0.0
        for s in range(seed, seed + 5):
            errors = gradient_check(s)
            for label, err in errors.items():
                worst = max(worst, err)
                report[f"seed{s}_{label}"] = f"{err:.3e}"
        report["max_rel_err"] = f"{worst:.3e}"
        report["threshold"] = "1e-05"
        return report, worst < 1e-5
    if name == "nce-limit":
        report = {}
        ok = True
        for s in range(seed, seed + 5):
            grid, gaps = nce_limit_gaps(s)
            non_increasing = all(b <= a * (1 + 1e-12) for a, b in zip(gaps, gaps[1:]))
            ok = ok and non_increasing and gaps[-1] < 1e-2
            report[f"seed{s}_gaps"] = "->".join(f"{g:.2e}" for g in gaps)
        report["k_grid"] = "->".join(str(k) for k in grid)
        report["threshold_final_gap"] = "1e-02"
        return report, ok
    if name == "is-stability":
        result = importance_stability_probe(seed)
        report = {key: value for key, value in result.items()}
        return report, bool(result["is_unstable"] and result["nce_completed"])
    if name == "speedup":
        values = speedup_values()
        report = {
            "full": f"{values['full']:.4f}",
            "diagonal": f"{values['diagonal']:.4f}",
            "expected_full": "45.3",
            "expected_diagonal": "370.4",
        }
        ok = abs(values["full"] - 45.3) <= 0.1 and abs(values["diagonal"] - 370.4) <= 0.1
        return report, ok
    raise ConfigError(f"unknown diagnostic {name!r}")
