"""Sentence encoding: embedding lookups with count-based word dropout, a
stacked BiLSTM, and span/target representations.

Every token is represented by the concatenation of a word, lemma and POS
embedding.  During training a word is replaced by UNK with probability
alpha / (1 + count(word)), so rare words train the UNK vector while frequent
words mostly keep their own.  The dropout decision happens outside the
computation graph; lemma and POS lookups are never dropped.

Span representations concatenate the BiLSTM states at both boundaries with
log2-scaled length/distance features and pass them through a two-layer tanh
MLP.  Target representations use a separate MLP and only the length feature.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .autodiff import Graph, Node, ParameterStore, ShapeError
from .autodiff import lstm_cell
from .parts import Sentence, Target

UNK = "<unk>"


class Vocabulary:
    """String-to-index map with UNK reserved at index 0."""

    def __init__(self, tokens: Iterable[str]):
        seen = dict.fromkeys(tokens)
        seen.pop(UNK, None)
        self.tokens: tuple[str, ...] = (UNK, *seen)
        self._index = {t: i for i, t in enumerate(self.tokens)}

    def index(self, token: str) -> int:
        return self._index.get(token, 0)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index


def build_vocabularies(sentences: Sequence[Sentence]):
    """Collect word/lemma/POS vocabularies and word counts from training data."""
    counts: dict[str, int] = {}
    lemmas: list[str] = []
    tags: list[str] = []
    for s in sentences:
        for tok in s.tokens:
            counts[tok.form] = counts.get(tok.form, 0) + 1
            lemmas.append(tok.lemma)
            tags.append(tok.pos)
    return Vocabulary(counts), Vocabulary(lemmas), Vocabulary(tags), counts


def discrete_features(span: tuple[int, int], target_start: int) -> np.ndarray:
    """Length and boundary-to-target distances, log2-compressed."""
    i, j = span
    return np.array([
        math.log2(j - i + 2),
        math.log2(abs(i - target_start) + 1),
        math.log2(abs(j - target_start) + 1),
    ])


class Encoder:
    """Owns the lookup tables, BiLSTM stacks and representation MLPs.

    Parameters are registered into ``store`` under ``prefix`` so several
    encoders (say, the full model's and the pruner's) can share one store.
    """

    def __init__(self, store: ParameterStore, words: Vocabulary,
                 lemmas: Vocabulary, pos_tags: Vocabulary,
                 word_counts: Mapping[str, int],
                 rng: np.random.Generator,
                 word_dim: int = 100, lemma_dim: int = 50, pos_dim: int = 50,
                 bilstm_layers: int = 2, bilstm_dim: int = 200,
                 mlp_dim: int = 100, word_dropout: float = 1.0,
                 pretrained_words: Optional[Mapping[str, np.ndarray]] = None,
                 prefix: str = "enc"):
        if bilstm_dim % 2:
            raise ValueError(f"bilstm_dim must be even, got {bilstm_dim}")
        self.store = store
        self.words = words
        self.lemmas = lemmas
        self.pos_tags = pos_tags
        self.word_counts = dict(word_counts)
        self.word_dropout = float(word_dropout)
        self.bilstm_layers = bilstm_layers
        self.bilstm_dim = bilstm_dim
        self.mlp_dim = mlp_dim
        self.prefix = prefix

        word_table = 0.1 * rng.standard_normal((len(words), word_dim))
        if pretrained_words is not None:
            loaded_dim = len(next(iter(pretrained_words.values())))
            if loaded_dim != word_dim:
                raise ShapeError(
                    f"pretrained word vectors are {loaded_dim}-dimensional "
                    f"but the encoder expects {word_dim}")
            for i, tok in enumerate(words.tokens):
                if tok in pretrained_words:
                    word_table[i] = pretrained_words[tok]
        store.add(f"{prefix}.word", (len(words), word_dim), init=word_table)
        store.add(f"{prefix}.lemma", (len(lemmas), lemma_dim),
                  init=0.1 * rng.standard_normal((len(lemmas), lemma_dim)))
        store.add(f"{prefix}.pos", (len(pos_tags), pos_dim),
                  init=0.1 * rng.standard_normal((len(pos_tags), pos_dim)))

        half = bilstm_dim // 2
        in_dim = word_dim + lemma_dim + pos_dim
        for layer in range(bilstm_layers):
            for direction in ("fw", "bw"):
                name = f"{prefix}.lstm{layer}.{direction}"
                store.add(f"{name}.w", (in_dim + half, 4 * half), rng=rng)
                store.add(f"{name}.b", (4 * half,))
            in_dim = bilstm_dim

        for tag, feat in (("span", 3), ("tgt", 1)):
            store.add(f"{prefix}.{tag}.w1", (2 * bilstm_dim + feat, mlp_dim), rng=rng)
            store.add(f"{prefix}.{tag}.b1", (mlp_dim,))
            store.add(f"{prefix}.{tag}.w2", (mlp_dim, mlp_dim), rng=rng)
            store.add(f"{prefix}.{tag}.b2", (mlp_dim,))

    # --- embedding ----------------------------------------------------------

    def word_indices(self, sentence: Sentence,
                     rng: Optional[np.random.Generator] = None,
                     training: bool = False) -> list[int]:
        """Word ids, with count-based UNK replacement when training."""
        ids = []
        for tok in sentence.tokens:
            idx = self.words.index(tok.form)
            if training and self.word_dropout > 0.0:
                count = self.word_counts.get(tok.form, 0)
                if rng.random() < self.word_dropout / (1.0 + count):
                    idx = 0
            ids.append(idx)
        return ids

    def embed(self, g: Graph, sentence: Sentence,
              rng: Optional[np.random.Generator] = None,
              training: bool = False) -> Node:
        """Per-token concatenated embeddings as an (n, d) matrix node."""
        word_ids = self.word_indices(sentence, rng=rng, training=training)
        lemma_ids = [self.lemmas.index(t.lemma) for t in sentence.tokens]
        pos_ids = [self.pos_tags.index(t.pos) for t in sentence.tokens]
        return g.concat_cols(
            g.lookup(g.param(self.store, f"{self.prefix}.word"), word_ids),
            g.lookup(g.param(self.store, f"{self.prefix}.lemma"), lemma_ids),
            g.lookup(g.param(self.store, f"{self.prefix}.pos"), pos_ids),
        )

    # --- BiLSTM -------------------------------------------------------------

    def _sweep(self, g: Graph, rows: list[Node], layer: int,
               direction: str) -> list[Node]:
        half = self.bilstm_dim // 2
        w = g.param(self.store, f"{self.prefix}.lstm{layer}.{direction}.w")
        b = g.param(self.store, f"{self.prefix}.lstm{layer}.{direction}.b")
        h = g.input(np.zeros(half))
        c = g.input(np.zeros(half))
        order = range(len(rows)) if direction == "fw" else reversed(range(len(rows)))
        out: dict[int, Node] = {}
        for t in order:
            h, c = lstm_cell(g, rows[t], h, c, w, b)
            out[t] = h
        return [out[t] for t in range(len(rows))]

    def bilstm(self, g: Graph, rows: list[Node]) -> list[Node]:
        """Stacked bidirectional pass over per-token vectors."""
        for layer in range(self.bilstm_layers):
            fw = self._sweep(g, rows, layer, "fw")
            bw = self._sweep(g, rows, layer, "bw")
            rows = [g.concat(f, w) for f, w in zip(fw, bw)]
        return rows

    def encode(self, g: Graph, sentence: Sentence,
               rng: Optional[np.random.Generator] = None,
               training: bool = False) -> list[Node]:
        """Contextualized token vectors h_i, one node per token."""
        emb = self.embed(g, sentence, rng=rng, training=training)
        rows = [g.select_row(emb, i) for i in range(len(sentence))]
        return self.bilstm(g, rows)

    # --- representations ----------------------------------------------------

    def _mlp(self, g: Graph, x: Node, tag: str) -> Node:
        p = lambda s: g.param(self.store, f"{self.prefix}.{tag}.{s}")
        h1 = g.tanh(g.affine(x, p("w1"), p("b1")))
        return g.tanh(g.affine(h1, p("w2"), p("b2")))

    def span_representation(self, g: Graph, hs: list[Node],
                            span: tuple[int, int], target_start: int) -> Node:
        i, j = span
        x = g.concat(hs[i], hs[j], g.input(discrete_features(span, target_start)))
        return self._mlp(g, x, "span")

    def span_representations(self, g: Graph, hs: list[Node],
                             spans: Sequence[tuple[int, int]],
                             target_start: int) -> Node:
        """All spans at once as a (len(spans), mlp_dim) matrix node."""
        xs = [g.concat(hs[i], hs[j],
                       g.input(discrete_features((i, j), target_start)))
              for i, j in spans]
        return self._mlp(g, g.stack_rows(xs), "span")

    def target_representation(self, g: Graph, hs: list[Node],
                              target: Target) -> Node:
        length = np.array([math.log2(target.end - target.start + 2)])
        x = g.concat(hs[target.start], hs[target.end], g.input(length))
        return self._mlp(g, x, "tgt")
