"""Semi-Markov dynamic programs over labeled spans.

A "segmentation" here is any set of non-overlapping labeled spans; uncovered
tokens are simply skipped at zero score.  Items are given as (start, end, key)
triples with 0-based inclusive bounds and an arbitrary hashable key (role,
frame/role pair, or a collapsed is-argument label), plus a parallel score
array.  Items longer than ``max_len`` are present but never selectable, so
callers can pass a full candidate list unfiltered.

Three entry points: exact MAP (with deterministic tie-breaking: fewer
segments first, then earliest construction index), log-partition with
per-item posteriors in log space, and an autodiff op computing the negative
log-likelihood of a gold segmentation.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Hashable, Sequence

import numpy as np

from .. import autodiff

SpanItem = tuple[int, int, Hashable]


def _check_spans(spans: Sequence[SpanItem], n: int) -> None:
    for (i, j, _k) in spans:
        if not 0 <= i <= j < n:
            raise ValueError(f"span ({i},{j}) out of range for n={n}")


def semi_markov_map(spans: Sequence[SpanItem], scores: np.ndarray,
                    n: int, max_len: int) -> tuple[list[int], float]:
    """Highest-scoring set of non-overlapping spans; the empty set scores 0.

    Returns (chosen item indices in left-to-right order, total score).
    """
    scores = np.asarray(scores, dtype=float)
    _check_spans(spans, n)
    # per (i, j) cell keep only the best-scoring item (earliest index on ties)
    cell: dict[tuple[int, int], int] = {}
    for idx, (i, j, _k) in enumerate(spans):
        if j - i + 1 > max_len:
            continue
        cur = cell.get((i, j))
        if cur is None or scores[idx] > scores[cur]:
            cell[(i, j)] = idx
    by_end: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for (i, j), idx in sorted(cell.items()):
        by_end[j].append((i, idx))

    val = np.zeros(n + 1)
    cnt = np.zeros(n + 1, dtype=int)
    back: list = [None] * (n + 1)
    for j in range(1, n + 1):
        v, c, b = val[j - 1], cnt[j - 1], None  # skip token j-1
        for (i, idx) in by_end[j - 1]:
            nv = val[i] + scores[idx]
            nc = cnt[i] + 1
            if nv > v or (nv == v and nc < c):
                v, c, b = nv, nc, (i, idx)
        val[j], cnt[j], back[j] = v, c, b

    chosen: list[int] = []
    j = n
    while j > 0:
        if back[j] is None:
            j -= 1
        else:
            i, idx = back[j]
            chosen.append(idx)
            j = i
    chosen.reverse()
    return chosen, float(val[n])


def _selectable(spans, scores, n, max_len):
    by_end: dict[int, list[tuple[int, int]]] = defaultdict(list)
    by_start: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for idx, (i, j, _k) in enumerate(spans):
        if j - i + 1 > max_len:
            continue
        by_end[j].append((i, idx))
        by_start[i].append((j, idx))
    return by_end, by_start


def semi_markov_log_partition(spans: Sequence[SpanItem], scores: np.ndarray,
                              n: int, max_len: int
                              ) -> tuple[float, np.ndarray, np.ndarray]:
    """log Σ over segmentations of exp(score).  Returns (logZ, alpha, beta)
    with alpha[j] summing prefixes [0, j) and beta[j] suffixes [j, n)."""
    scores = np.asarray(scores, dtype=float)
    _check_spans(spans, n)
    by_end, by_start = _selectable(spans, scores, n, max_len)
    alpha = np.full(n + 1, -np.inf)
    alpha[0] = 0.0
    for j in range(1, n + 1):
        terms = [alpha[j - 1]]
        terms += [alpha[i] + scores[idx] for (i, idx) in by_end[j - 1]]
        alpha[j] = np.logaddexp.reduce(terms)
    beta = np.full(n + 1, -np.inf)
    beta[n] = 0.0
    for j in range(n - 1, -1, -1):
        terms = [beta[j + 1]]
        terms += [scores[idx] + beta[jj + 1] for (jj, idx) in by_start[j]]
        beta[j] = np.logaddexp.reduce(terms)
    return float(alpha[n]), alpha, beta


def semi_markov_marginals(spans: Sequence[SpanItem], scores: np.ndarray,
                          n: int, max_len: int) -> tuple[float, np.ndarray]:
    """Posterior probability that each item is part of the segmentation.

    Items over the length cap get posterior 0.  posterior[idx] =
    exp(alpha[i] + score + beta[j+1] - logZ).
    """
    scores = np.asarray(scores, dtype=float)
    logz, alpha, beta = semi_markov_log_partition(spans, scores, n, max_len)
    post = np.zeros(len(spans))
    for idx, (i, j, _k) in enumerate(spans):
        if j - i + 1 > max_len:
            continue
        post[idx] = np.exp(alpha[i] + scores[idx] + beta[j + 1] - logz)
    return logz, post


# --- autodiff integration ---------------------------------------------------
# Negative log-likelihood of a gold segmentation: logZ - score(gold).
# ctx = (spans, n, max_len, gold item indices).  Gradient wrt the score
# vector is posterior - gold indicator.

def _nll_forward(node):
    spans, n, max_len, gold = node.ctx
    scores = node.parents[0].value
    logz, _, _ = semi_markov_log_partition(spans, scores, n, max_len)
    return np.asarray(logz - scores[list(gold)].sum())


def _nll_backward(node):
    spans, n, max_len, gold = node.ctx
    scores = node.parents[0].value
    _, post = semi_markov_marginals(spans, scores, n, max_len)
    g = post.copy()
    g[list(gold)] -= 1.0
    autodiff.accumulate(node.parents[0], float(node.grad) * g)


autodiff.register_op("semimarkov_nll", _nll_forward, _nll_backward)


def nll_node(graph: autodiff.Graph, score_node: autodiff.Node,
             spans: Sequence[SpanItem], n: int, max_len: int,
             gold_indices: Sequence[int]) -> autodiff.Node:
    """Graph node for logZ - gold score over the given span items."""
    gold = tuple(int(i) for i in gold_indices)
    seen = set()
    for gi in gold:
        i, j, _ = spans[gi]
        if j - i + 1 > max_len:
            raise ValueError(f"gold span ({i},{j}) exceeds max_len={max_len}")
        for t in range(i, j + 1):
            if t in seen:
                raise ValueError("gold segmentation overlaps itself")
            seen.add(t)
    return graph.apply("semimarkov_nll", [score_node],
                       (tuple(spans), n, max_len, gold))
