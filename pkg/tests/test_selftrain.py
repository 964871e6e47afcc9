import numpy as np
import pytest

from dasearch.corpus import generate_synthetic_corpus
from dasearch.decoder import Hypothesis, SearchConfig, plain_beam_search
from dasearch.generator import train_generator
from dasearch.selftrain import (
    DiscriminatorHparams,
    bootstrap,
    hypothesis_content,
    run_until_convergence,
    self_train_step,
)

SEARCH = SearchConfig(beam_size=2, k_rerank=5, alpha=1.0, t_max=40)
HPARAMS = DiscriminatorHparams(epochs=2, seed=0)


@pytest.fixture(scope="module")
def loop_corpus():
    return generate_synthetic_corpus(5, 40)


@pytest.fixture(scope="module")
def loop_generator(loop_corpus):
    return train_generator(loop_corpus, lambda_copy=0.75)


@pytest.fixture(scope="module")
def state0(loop_corpus, loop_generator):
    return bootstrap(loop_corpus, loop_generator, HPARAMS, SEARCH)


def test_hypothesis_content_strips_frame():
    h = Hypothesis(tokens=(0, 3, 4, 1), s_gen=-1.0, ended=True)
    assert hypothesis_content(h) == (3, 4)


def test_bootstrap_starts_at_iteration_zero(state0):
    assert state0.iteration == 0
    assert len(state0.history) == 1
    assert state0.history[0]["iteration"] == 0


def test_bootstrap_generations_match_standalone_plain_search(state0, loop_corpus,
                                                             loop_generator):
    for p in loop_corpus.pairs[:10]:
        standalone = hypothesis_content(
            plain_beam_search(loop_generator, p.source, SEARCH)[0])
        assert state0.last_generations[p.id] == standalone


def test_bootstrap_discriminator_beats_chance(state0):
    assert state0.history[0]["val_accuracy"] > 0.5


def test_step_increments_and_appends_history(state0, loop_corpus, loop_generator):
    state1 = self_train_step(state0, loop_generator, loop_corpus, SEARCH, HPARAMS)
    assert state1.iteration == 1
    assert len(state1.history) == len(state0.history) + 1
    # original state untouched
    assert state0.iteration == 0 and len(state0.history) == 1


def test_step_changes_generations_when_alpha_positive(state0, loop_corpus,
                                                      loop_generator):
    state1 = self_train_step(state0, loop_generator, loop_corpus, SEARCH, HPARAMS)
    assert state1.last_generations != state0.last_generations


def test_step_with_alpha_zero_keeps_bootstrap_generations(state0, loop_corpus,
                                                          loop_generator):
    degenerate = SearchConfig(beam_size=2, k_rerank=5, alpha=0.0, t_max=40)
    state1 = self_train_step(state0, loop_generator, loop_corpus, degenerate, HPARAMS)
    assert state1.last_generations == state0.last_generations


def test_replay_option_changes_training_set(state0, loop_corpus, loop_generator):
    with_replay = self_train_step(state0, loop_generator, loop_corpus, SEARCH,
                                  DiscriminatorHparams(epochs=2, seed=0, replay=True))
    without = self_train_step(state0, loop_generator, loop_corpus, SEARCH, HPARAMS)
    assert with_replay.past_generations == [state0.last_generations]
    assert not np.array_equal(with_replay.discriminator.dense_w,
                              without.discriminator.dense_w)


def test_warm_start_initializes_from_previous_model(state0, loop_corpus,
                                                    loop_generator):
    warm = self_train_step(state0, loop_generator, loop_corpus, SEARCH,
                           DiscriminatorHparams(epochs=2, seed=0, warm_start=True))
    cold = self_train_step(state0, loop_generator, loop_corpus, SEARCH, HPARAMS)
    assert not np.array_equal(warm.discriminator.dense_w, cold.discriminator.dense_w)


def test_convergence_runs_exactly_one_step_with_max_iters_one(state0, loop_corpus,
                                                              loop_generator):
    out = run_until_convergence(state0, loop_generator, loop_corpus, SEARCH, HPARAMS,
                                max_iters=1, tau_acc=0.0, tau_delta=-1e9)
    assert out.iteration == 1
    assert out.stopped_reason == "max_iters"


def test_convergence_accuracy_floor_one_is_degenerate(state0, loop_corpus,
                                                      loop_generator):
    out = run_until_convergence(state0, loop_generator, loop_corpus, SEARCH, HPARAMS,
                                max_iters=5, tau_acc=1.0)
    assert out.stopped_reason == "accuracy_floor"
    # it stops at the first step whose validation accuracy drops below 1.0
    accs = [e["val_accuracy"] for e in out.history[1:]]
    assert accs[-1] < 1.0 and all(a == 1.0 for a in accs[:-1])


def test_convergence_validates_max_iters(state0, loop_corpus, loop_generator):
    with pytest.raises(ValueError):
        run_until_convergence(state0, loop_generator, loop_corpus, SEARCH, HPARAMS,
                              max_iters=0)


def test_loop_is_deterministic(loop_corpus, loop_generator):
    a = bootstrap(loop_corpus, loop_generator, HPARAMS, SEARCH)
    b = bootstrap(loop_corpus, loop_generator, HPARAMS, SEARCH)
    a1 = self_train_step(a, loop_generator, loop_corpus, SEARCH, HPARAMS)
    b1 = self_train_step(b, loop_generator, loop_corpus, SEARCH, HPARAMS)
    assert a1.last_generations == b1.last_generations
    assert np.array_equal(a1.discriminator.dense_w, b1.discriminator.dense_w)
    assert a1.history == b1.history
