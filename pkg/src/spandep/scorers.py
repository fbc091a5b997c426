"""Part scorers.

Frame-side parts (predicates, arguments, cross-task) are scored by low-rank
multilinear forms: a score is a sum over r rank-one terms, each term a
product of one dot product per input slot.  Slot order is fr/tgt/lu for
predicates, plus span/role for arguments, plus arc-weight/arc-representation
for cross-task parts.  The arc-weight slot consumes the unlabeled scorer's
own final linear weight vector, which ties the two tasks' parameters.

Dependency parts are scored by a two-layer tanh MLP and a final linear layer,
with separate parameters per part type (head, unlabeled, labeled, top).

Batched variants score whole part lists through matrix ops; they share
parameters with the single-part paths and must agree with them exactly.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .autodiff import Graph, Node, ParameterStore
from .parts import SpandepError

_DEP_IN = {"head": 1, "ua": 2, "lab": 2, "top": 1}


class Scorers:
    """Owns label embeddings, rank factors, and the dependency MLPs."""

    def __init__(self, store: ParameterStore, frames: Sequence[str],
                 lus: Sequence[str], roles: Sequence[str],
                 dep_labels: Sequence[str], rng: np.random.Generator,
                 rank: int = 100, label_dim: int = 100, mlp_dim: int = 100,
                 bilstm_dim: int = 200, prefix: str = "sc"):
        self.store = store
        self.prefix = prefix
        self.rank = rank
        self.frame_ix = {f: i for i, f in enumerate(frames)}
        self.lu_ix = {l: i for i, l in enumerate(lus)}
        self.role_ix = {r: i for i, r in enumerate(roles)}
        self.label_ix = {l: i for i, l in enumerate(dep_labels)}

        def table(name, n, dim):
            store.add(f"{prefix}.emb.{name}", (max(n, 1), dim),
                      init=0.1 * rng.standard_normal((max(n, 1), dim)))

        table("frame", len(frames), label_dim)
        table("lu", len(lus), label_dim)
        table("role", len(roles), label_dim)
        table("label", len(dep_labels), label_dim)

        for name, dim in (("w1", label_dim), ("w2", mlp_dim), ("w3", label_dim),
                          ("u1", mlp_dim), ("u2", label_dim),
                          ("v1", mlp_dim), ("v2", mlp_dim)):
            store.add(f"{prefix}.{name}", (rank, dim), rng=rng)

        for tag, mult in _DEP_IN.items():
            in_dim = mult * bilstm_dim + (label_dim if tag == "lab" else 0)
            store.add(f"{prefix}.{tag}.w1", (in_dim, mlp_dim), rng=rng)
            store.add(f"{prefix}.{tag}.b1", (mlp_dim,))
            store.add(f"{prefix}.{tag}.w2", (mlp_dim, mlp_dim), rng=rng)
            store.add(f"{prefix}.{tag}.b2", (mlp_dim,))
            store.add(f"{prefix}.{tag}.w", (mlp_dim,),
                      init=0.1 * rng.standard_normal(mlp_dim))

    # --- parameter access -----------------------------------------------

    def _p(self, g: Graph, name: str) -> Node:
        return g.param(self.store, f"{self.prefix}.{name}")

    def _vec(self, g: Graph, table: str, index: dict, key: str) -> Node:
        if key not in index:
            raise SpandepError(f"unknown {table}: {key!r}")
        return g.select_row(self._p(g, f"emb.{table}"), index[key])

    def frame_vec(self, g: Graph, frame: str) -> Node:
        return self._vec(g, "frame", self.frame_ix, frame)

    def lu_vec(self, g: Graph, lu: str) -> Node:
        return self._vec(g, "lu", self.lu_ix, lu)

    def role_vec(self, g: Graph, role: str) -> Node:
        return self._vec(g, "role", self.role_ix, role)

    def label_vec(self, g: Graph, label: str) -> Node:
        return self._vec(g, "label", self.label_ix, label)

    # --- multilinear scores (single part) ---------------------------------

    def _slots(self, g: Graph, pairs) -> Node:
        """Product over slots of (factor matrix) @ (slot vector), an r-vector."""
        out = None
        for factor, vec in pairs:
            dots = g.matvec(self._p(g, factor), vec)
            out = dots if out is None else g.mul(out, dots)
        return out

    def score_predicate(self, g: Graph, g_fr: Node, g_tgt: Node,
                        g_lu: Node) -> Node:
        prod = self._slots(g, [("w1", g_fr), ("w2", g_tgt), ("w3", g_lu)])
        return g.sum(prod)

    def score_argument(self, g: Graph, g_fr: Node, g_tgt: Node, g_lu: Node,
                       g_span: Node, g_role: Node) -> Node:
        prod = self._slots(g, [("w1", g_fr), ("w2", g_tgt), ("w3", g_lu),
                               ("u1", g_span), ("u2", g_role)])
        return g.sum(prod)

    def score_cross_task(self, g: Graph, g_fr: Node, g_tgt: Node, g_lu: Node,
                         g_span: Node, g_role: Node, g_arc: Node) -> Node:
        prod = self._slots(g, [("w1", g_fr), ("w2", g_tgt), ("w3", g_lu),
                               ("u1", g_span), ("u2", g_role),
                               ("v1", self._p(g, "ua.w")), ("v2", g_arc)])
        return g.sum(prod)

    # --- dependency scores (single part) -----------------------------------

    def _mlp(self, g: Graph, x: Node, tag: str) -> Node:
        h1 = g.tanh(g.affine(x, self._p(g, f"{tag}.w1"), self._p(g, f"{tag}.b1")))
        return g.tanh(g.affine(h1, self._p(g, f"{tag}.w2"), self._p(g, f"{tag}.b2")))

    def arc_representation(self, g: Graph, hs: list[Node], head: int,
                           dep: int) -> Node:
        """g^ua for one ordered (head, dep) token pair."""
        return self._mlp(g, g.concat(hs[head], hs[dep]), "ua")

    def score_head(self, g: Graph, hs: list[Node], token: int) -> Node:
        return g.inner(self._mlp(g, hs[token], "head"), self._p(g, "head.w"))

    def score_unlabeled(self, g: Graph, hs: list[Node], head: int,
                        dep: int) -> Node:
        return g.inner(self.arc_representation(g, hs, head, dep),
                       self._p(g, "ua.w"))

    def score_labeled(self, g: Graph, hs: list[Node], head: int, dep: int,
                      label: str) -> Node:
        x = g.concat(hs[head], hs[dep], self.label_vec(g, label))
        return g.inner(self._mlp(g, x, "lab"), self._p(g, "lab.w"))

    def score_top(self, g: Graph, hs: list[Node], dep: int) -> Node:
        return g.inner(self._mlp(g, hs[dep], "top"), self._p(g, "top.w"))

    # --- batched paths ------------------------------------------------------

    def _fixed_slots(self, g: Graph, g_tgt: Node, g_lu: Node) -> Node:
        return g.mul(g.matvec(self._p(g, "w2"), g_tgt),
                     g.matvec(self._p(g, "w3"), g_lu))

    def _frame_rows(self, g: Graph, frames: Sequence[str]) -> Node:
        ids = [self.frame_ix[f] for f in frames]
        return g.matmul(g.lookup(self._p(g, "emb.frame"), ids),
                        g.transpose(self._p(g, "w1")))

    def predicate_scores(self, g: Graph, frames: Sequence[str], g_tgt: Node,
                         g_lu: Node) -> Node:
        """Scores for predicate parts sharing one target, as a vector node."""
        return g.matvec(self._frame_rows(g, frames),
                        self._fixed_slots(g, g_tgt, g_lu))

    def _arg_products(self, g: Graph, frames, roles, span_rows: Node) -> Node:
        role_ids = [self.role_ix[r] for r in roles]
        a = self._frame_rows(g, frames)
        d = g.matmul(span_rows, g.transpose(self._p(g, "u1")))
        e = g.matmul(g.lookup(self._p(g, "emb.role"), role_ids),
                     g.transpose(self._p(g, "u2")))
        return g.mul(g.mul(a, d), e)

    def argument_scores(self, g: Graph, frames: Sequence[str],
                        roles: Sequence[str], span_rows: Node,
                        g_tgt: Node, g_lu: Node) -> Node:
        """span_rows holds one span representation per part, row-aligned."""
        return g.matvec(self._arg_products(g, frames, roles, span_rows),
                        self._fixed_slots(g, g_tgt, g_lu))

    def cross_task_scores(self, g: Graph, frames: Sequence[str],
                          roles: Sequence[str], span_rows: Node,
                          arc_rows: Node, g_tgt: Node, g_lu: Node) -> Node:
        prod = g.mul(self._arg_products(g, frames, roles, span_rows),
                     g.matmul(arc_rows, g.transpose(self._p(g, "v2"))))
        fixed = g.mul(self._fixed_slots(g, g_tgt, g_lu),
                      g.matvec(self._p(g, "v1"), self._p(g, "ua.w")))
        return g.matvec(prod, fixed)

    def head_scores(self, g: Graph, hs: list[Node],
                    tokens: Sequence[int]) -> Node:
        x = g.stack_rows([hs[t] for t in tokens])
        return g.matvec(self._mlp(g, x, "head"), self._p(g, "head.w"))

    def arc_representations(self, g: Graph, hs: list[Node],
                            pairs: Sequence[tuple[int, int]]) -> Node:
        x = g.stack_rows([g.concat(hs[h], hs[d]) for h, d in pairs])
        return self._mlp(g, x, "ua")

    def unlabeled_scores(self, g: Graph, arc_rows: Node) -> Node:
        """Takes the matrix from ``arc_representations`` so cross-task scoring
        can reuse the same rows."""
        return g.matvec(arc_rows, self._p(g, "ua.w"))

    def labeled_scores(self, g: Graph, hs: list[Node],
                       triples: Sequence[tuple[int, int, str]]) -> Node:
        label_tbl = self._p(g, "emb.label")
        rows = []
        for h, d, label in triples:
            if label not in self.label_ix:
                raise SpandepError(f"unknown label: {label!r}")
            rows.append(g.concat(hs[h], hs[d],
                                 g.select_row(label_tbl, self.label_ix[label])))
        return g.matvec(self._mlp(g, g.stack_rows(rows), "lab"),
                        self._p(g, "lab.w"))

    def top_scores(self, g: Graph, hs: list[Node],
                   tokens: Sequence[int]) -> Node:
        x = g.stack_rows([hs[t] for t in tokens])
        return g.matvec(self._mlp(g, x, "top"), self._p(g, "top.w"))
