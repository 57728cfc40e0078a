"""Synthetic corpora and survey panels with known ground truth."""
from tweetpoll.synth.corpus import ElectorateSpec, SynthCorpus, generate_corpus, write_corpus
from tweetpoll.synth.panel import allocate_counts, generate_panel, skewed_sample

__all__ = [
    "ElectorateSpec",
    "SynthCorpus",
    "allocate_counts",
    "generate_corpus",
    "generate_panel",
    "skewed_sample",
    "write_corpus",
]
