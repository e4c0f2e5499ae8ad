"""Fill-in-the-blank scoring with forward-only and two-sided context.

Generates five-candidate completion problems from a ground-truth model,
trains two models of the same size on its text, and compares them. The
forward-only model scores a candidate by the log probability of the
whole completed sentence; the two-sided model reads one word on each
side of the blank and needs a single conditional per candidate.
"""

import numpy as np

from ncelm.corpus import extract_bidirectional_pairs, extract_pairs
from ncelm.evaluation import completion_accuracy, perplexity
from ncelm.synthetic import (
    corpus_vocab,
    generate_completion_problems,
    generate_sentences,
    make_truth_params,
)
from ncelm.trainer import TrainConfig, train

VOCAB_SIZE = 300

truth = make_truth_params(VOCAB_SIZE, 12, 2, seed=4, feature_scale=0.6)
rng = np.random.default_rng(33)
sentences = generate_sentences(truth, 3000, 4, 12, rng)
train_sents, valid_sents, test_sents = (
    sentences[:2600], sentences[2600:2800], sentences[2800:],
)
vocab = corpus_vocab(VOCAB_SIZE, train_sents)

config = TrainConfig(
    estimator="nce", k=25, minibatch_size=200,
    initial_lr=0.01, max_epochs=10, seed=1, dim=12,
)

# Forward-only: context is the two preceding words.
uni_params, _, _ = train(
    config,
    extract_pairs(train_sents, 2),
    extract_pairs(valid_sents, 2),
    vocab,
)

# Two-sided: context is one word before and one after the target.
bi_params, _, _ = train(
    config,
    extract_bidirectional_pairs(train_sents, 1),
    extract_bidirectional_pairs(valid_sents, 1),
    vocab,
)

uni_ppl = perplexity(uni_params, extract_pairs(test_sents, 2))
bi_ppl = perplexity(bi_params, extract_bidirectional_pairs(test_sents, 1))
print(f"test perplexity: forward-only {uni_ppl:.1f}, two-sided {bi_ppl:.1f}")

problems = generate_completion_problems(truth, 60, np.random.default_rng(7))
choices, uni_acc = completion_accuracy(uni_params, problems, mode="uni")
_, bi_acc = completion_accuracy(bi_params, problems, mode="bi")
print(f"completion accuracy over {len(problems)} problems "
      f"(chance 0.20): forward-only {uni_acc:.2f}, two-sided {bi_acc:.2f}")

# Show one problem the forward-only model got right.
for problem, choice in zip(problems, choices):
    if choice == problem.answer:
        words = [str(w) for w in problem.sentence]
        words[problem.blank_position] = "___"
        print("\nexample problem (word ids):")
        print("  " + " ".join(words))
        print(f"  candidates: {problem.candidates}, model picked "
              f"{problem.candidates[choice]} (correct)")
        break
