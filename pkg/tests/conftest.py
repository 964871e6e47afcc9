"""Shared fixtures: tiny hand-built corpora and a small synthetic setup."""

import pytest

from dasearch.corpus import Corpus, DocumentPair, Vocabulary, generate_synthetic_corpus
from dasearch.generator import train_generator


def make_vocab(*tokens):
    return Vocabulary(list(tokens))


def make_corpus(vocab, records, split="train"):
    """records: iterable of (id, source_token_strings, reference_token_strings)."""
    pairs = tuple(
        DocumentPair(rid, vocab.encode(src), vocab.encode(ref))
        for rid, src, ref in records
    )
    return Corpus(pairs, vocab, split)


@pytest.fixture(scope="session")
def synth_corpus():
    return generate_synthetic_corpus(7, 60)


@pytest.fixture(scope="session")
def synth_generator(synth_corpus):
    return train_generator(synth_corpus, order=3, kappa=1.0, lambda_copy=0.75)
