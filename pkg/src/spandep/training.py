"""Max-margin training over disjoint corpora, plus prediction helpers.

Frame-annotated sentences carry no dependency supervision, so their loss
maximizes over the dependency side: L = max_{y,z}(S(y,z) + d(y, y*)) -
max_z S(y*, z), where d is the weighted Hamming cost over frame parts.
Dependency sentences use the ordinary structured hinge.  Both maxima are
computed by the exact decoder, so a single subgradient rule covers all
instances: +1 on the parts of the cost-augmented argmax, -1 on the parts
of the gold completion.

An epoch trains on the union of the full frame corpus, a fresh random
sample of the exemplar pool, and the dependency corpus, shuffled
uniformly.  The learning rate halves every ten epochs, dev metrics are
logged each epoch, and the parameters of the best frame dev F1 epoch are
restored at the end (ties keep the earlier epoch).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Graph, Node, clip_and_step
from .evaluation import eval_frames, eval_sdp
from .inference.ad3 import SolverOptions
from .inference.decode import DecodeResult, cost_augment, decode
from .model import ParserModel
from .parts import (
    CandidateSpace,
    CostConfig,
    DependencyGraph,
    FrameAnnotations,
    FrameParse,
    Ontology,
    Sentence,
    SpaceLimits,
    SpandepError,
    build_candidate_space,
    dep_parts,
    frame_parts,
    weighted_hamming,
    FRAME_PART_TYPES,
)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.33
    anneal_factor: float = 0.5
    anneal_every: int = 10
    max_epochs: int = 30
    clip: float = 1.0
    l2: float = 1e-6
    l1_weight: float = 0.01
    exemplar_fraction: float = 0.35
    word_dropout_alpha: float = 1.0
    max_span_len: int = 20
    include_cross_task: bool = True
    joint: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0 or self.anneal_factor <= 0 or self.clip <= 0:
            raise SpandepError("rates must be positive")
        if self.anneal_every < 1 or self.max_epochs < 0:
            raise SpandepError("epoch counts must be positive")
        if self.l2 < 0 or self.l1_weight < 0 or self.word_dropout_alpha < 0:
            raise SpandepError("penalty weights must be nonnegative")
        if not 0.0 <= self.exemplar_fraction <= 1.0:
            raise SpandepError("exemplar_fraction must lie in [0, 1]")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.anneal_factor ** (epoch // self.anneal_every)

    def fn_limits(self, dep_labels: Sequence[str]) -> SpaceLimits:
        return SpaceLimits(
            max_span_len=self.max_span_len,
            include_dependencies=self.joint,
            include_cross_task=self.joint and self.include_cross_task,
            dep_labels=tuple(dep_labels) if self.joint else ())

    def dm_limits(self, dep_labels: Sequence[str]) -> SpaceLimits:
        return SpaceLimits(
            max_span_len=self.max_span_len,
            include_dependencies=True, include_cross_task=False,
            dep_labels=tuple(dep_labels))


@dataclass
class FnInstance:
    id: str
    sentence: Sentence
    parse: FrameParse
    space: CandidateSpace


@dataclass
class DmInstance:
    id: str
    sentence: Sentence
    graph: DependencyGraph
    space: CandidateSpace


Instance = Union[FnInstance, DmInstance]


def fn_instances(sentences: Sequence[Sentence], ontology: Ontology,
                 limits: SpaceLimits) -> List[FnInstance]:
    out = []
    for s in sentences:
        if not isinstance(s.supervision, FrameAnnotations):
            raise SpandepError(f"sentence {s.id!r} carries no frame annotations")
        for parse in s.supervision.parses:
            t = parse.target
            out.append(FnInstance(
                id=f"{s.id}#{t.start}-{t.end}", sentence=s, parse=parse,
                space=build_candidate_space(s, t, ontology, limits)))
    return out


def dm_instances(sentences: Sequence[Sentence],
                 limits: SpaceLimits) -> List[DmInstance]:
    out = []
    for s in sentences:
        if not isinstance(s.supervision, DependencyGraph):
            raise SpandepError(f"sentence {s.id!r} carries no dependency graph")
        out.append(DmInstance(
            id=s.id, sentence=s, graph=s.supervision,
            space=build_candidate_space(s, None, Ontology({}, {}), limits)))
    return out


@dataclass
class HingeResult:
    """One hinge evaluation.  ``node`` is None when the loss truncates at
    zero, in which case there is nothing to backpropagate."""

    node: Optional[Node]
    value: float
    augmented: DecodeResult
    completion_parts: frozenset
    cross: Optional[Node]


def _part_sum(space: CandidateSpace, scores: np.ndarray, parts) -> float:
    return float(sum(scores[space.part_to_id[p]] for p in parts))


def _with_cross(space: CandidateSpace, parts) -> set:
    """Close a decoded part set over its pair parts.

    The decoder reports structural parts only; a cross-task score fires
    whenever its argument and its arc are both active, so those parts are
    added here to make plain part sums equal the decoder's objective."""
    full = set(parts)
    for cid in space.cross_ids:
        c = space.parts[cid]
        if space.parts[c.arg_id] in full and space.parts[c.arc_id] in full:
            full.add(c)
    return full


def _difference_node(g: Graph, score_node: Node, space: CandidateSpace,
                     plus, minus, constant: float) -> Node:
    a = np.zeros(len(space.parts))
    for p in plus:
        a[space.part_to_id[p]] += 1.0
    for p in minus:
        a[space.part_to_id[p]] -= 1.0
    return g.add(g.inner(score_node, g.input(a)),
                 g.input(np.asarray(constant)))


def latent_hinge_loss(model: ParserModel, space: CandidateSpace,
                      gold_parse: FrameParse, g: Optional[Graph] = None,
                      rng: Optional[np.random.Generator] = None,
                      training: bool = False,
                      cost: CostConfig = CostConfig(),
                      options: Optional[SolverOptions] = None) -> HingeResult:
    g = g if g is not None else Graph()
    scored = model.score_space(g, space, rng=rng, training=training)
    raw_scores = scored.node.value.copy()
    raw = space.with_scores(raw_scores)
    gold = frame_parts(space, gold_parse)

    best = decode(cost_augment(raw, gold, cost, scope="frames"),
                  mode="joint", options=options)
    delta = weighted_hamming(
        [p for p in best.parts if isinstance(p, FRAME_PART_TYPES)], gold, cost)
    comp = decode(raw, mode="latent_completion", gold_parse=gold_parse,
                  options=options)
    best_full = _with_cross(space, best.parts)
    comp_full = _with_cross(space, comp.parts)
    value = (_part_sum(space, raw_scores, best_full) + delta
             - _part_sum(space, raw_scores, comp_full))
    if value <= 0.0:
        return HingeResult(None, 0.0, best, frozenset(comp_full), scored.cross)
    node = _difference_node(g, scored.node, space, best_full, comp_full,
                            delta)
    return HingeResult(node, value, best, frozenset(comp_full), scored.cross)


def sdp_hinge_loss(model: ParserModel, space: CandidateSpace,
                   gold_graph: DependencyGraph, g: Optional[Graph] = None,
                   rng: Optional[np.random.Generator] = None,
                   training: bool = False,
                   cost: CostConfig = CostConfig(),
                   options: Optional[SolverOptions] = None) -> HingeResult:
    g = g if g is not None else Graph()
    scored = model.score_space(g, space, rng=rng, training=training)
    raw_scores = scored.node.value.copy()
    raw = space.with_scores(raw_scores)
    gold = dep_parts(space, gold_graph)

    best = decode(cost_augment(raw, gold, cost, scope="dependencies"),
                  mode="dependencies_only", options=options)
    delta = weighted_hamming(best.parts, gold, cost)
    value = (_part_sum(space, raw_scores, best.parts) + delta
             - _part_sum(space, raw_scores, gold))
    if value <= 0.0:
        return HingeResult(None, 0.0, best, frozenset(gold), scored.cross)
    node = _difference_node(g, scored.node, space, best.parts, gold, delta)
    return HingeResult(node, value, best, frozenset(gold), scored.cross)


def l1_penalty(g: Graph, cross: Optional[Node],
               weight: float) -> Optional[Node]:
    """weight times the sum of absolute cross-task scores, as a node."""
    if cross is None or weight == 0.0:
        return None
    return g.scale(g.sum(g.abs(cross)), weight)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    dev_fn_f1: float
    dev_sdp_f1: float
    seconds: float

    def tsv(self) -> str:
        return (f"{self.epoch}\t{self.lr:.10g}\t{self.mean_loss:.6f}\t"
                f"{self.dev_fn_f1:.4f}\t{self.dev_sdp_f1:.4f}\t"
                f"{self.seconds:.3f}")


@dataclass
class TrainResult:
    model: ParserModel
    history: List[EpochStats]
    best_epoch: int
    best_dev_fn_f1: float

    @property
    def log_lines(self) -> List[str]:
        return [st.tsv() for st in self.history]


def _predict_fn(models: Sequence[ParserModel], sentences: Sequence[Sentence],
                instances: Sequence[FnInstance],
                options: Optional[SolverOptions]) -> List[Sentence]:
    parses: dict[int, list] = {id(s): [] for s in sentences}
    for inst in instances:
        scored = ensemble_scores(models, inst.space)
        res = decode(scored, mode="joint", options=options)
        parses[id(inst.sentence)].append(res.parse)
    return [replace(s, supervision=FrameAnnotations(tuple(parses[id(s)])))
            for s in sentences]


def _predict_dm(models: Sequence[ParserModel], instances: Sequence[DmInstance],
                options: Optional[SolverOptions]) -> List[Sentence]:
    out = []
    for inst in instances:
        scored = ensemble_scores(models, inst.space)
        res = decode(scored, mode="dependencies_only", options=options)
        out.append(replace(inst.sentence, supervision=res.graph))
    return out


def _as_members(models) -> List[ParserModel]:
    members = list(models) if isinstance(models, (list, tuple)) else [models]
    if not members:
        raise SpandepError("empty ensemble")
    first = members[0]
    for m in members[1:]:
        if m.dep_labels != first.dep_labels or \
                m.ontology.frames != first.ontology.frames:
            raise SpandepError("ensemble members disagree on label inventory")
    return members


def ensemble_scores(models, space: CandidateSpace) -> CandidateSpace:
    """Score a space with the arithmetic mean of the members' part scores."""
    members = _as_members(models)
    acc = np.zeros(len(space.parts))
    for m in members:
        acc += m.scored_space(space).scores
    return space.with_scores(acc / len(members))


def predict_frames(models, sentences: Sequence[Sentence],
                   limits: Optional[SpaceLimits] = None,
                   options: Optional[SolverOptions] = None) -> List[Sentence]:
    """Re-annotate each sentence's targets with decoded frames/arguments.

    Targets and lexical units are taken from the existing annotations; the
    frame and argument set are replaced by the decoder's output.
    """
    members = _as_members(models)
    cfg = TrainConfig()
    limits = limits if limits is not None else cfg.fn_limits(
        members[0].dep_labels)
    instances = fn_instances(sentences, members[0].ontology, limits)
    return _predict_fn(members, list(sentences), instances, options)


def predict_dependencies(models, sentences: Sequence[Sentence],
                         limits: Optional[SpaceLimits] = None,
                         options: Optional[SolverOptions] = None
                         ) -> List[Sentence]:
    members = _as_members(models)
    limits = limits if limits is not None else TrainConfig().dm_limits(
        members[0].dep_labels)
    have_gold = all(isinstance(s.supervision, DependencyGraph)
                    for s in sentences)
    if have_gold:
        instances = dm_instances(sentences, limits)
    else:
        instances = [DmInstance(s.id, s, DependencyGraph(frozenset()),
                                build_candidate_space(s, None, Ontology({}, {}),
                                                      limits))
                     for s in sentences]
    return _predict_dm(members, instances, options)


def train(model: ParserModel,
          fn_train: Sequence[Sentence],
          dm_train: Sequence[Sentence],
          *,
          fn_exemplar: Sequence[Sentence] = (),
          fn_dev: Sequence[Sentence] = (),
          dm_dev: Sequence[Sentence] = (),
          config: TrainConfig = TrainConfig(),
          options: Optional[SolverOptions] = None,
          log_path=None) -> TrainResult:
    """Run the full training loop and restore the best-dev-F1 parameters.

    Without a frame dev set there is nothing to select on, so the final
    parameters are kept as-is.
    """
    rng = np.random.default_rng(config.seed)
    model.encoder.word_dropout = config.word_dropout_alpha
    model.store.l2 = config.l2
    model.store.clip = config.clip

    fn_lim = config.fn_limits(model.dep_labels)
    dm_lim = config.dm_limits(model.dep_labels)
    fn_insts = fn_instances(fn_train, model.ontology, fn_lim)
    ex_insts = fn_instances(fn_exemplar, model.ontology, fn_lim)
    dm_insts = dm_instances(dm_train, dm_lim)
    if not (fn_insts or ex_insts or dm_insts):
        raise SpandepError("no training instances")
    dev_fn_insts = fn_instances(fn_dev, model.ontology, fn_lim)
    dev_dm_insts = dm_instances(dm_dev, dm_lim)

    history: List[EpochStats] = []
    best_f1 = -math.inf
    best_epoch = -1
    best_params = None

    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        lr = config.lr_at(epoch)
        sample: List[Instance] = []
        if ex_insts:
            k = math.ceil(config.exemplar_fraction * len(ex_insts))
            picks = rng.choice(len(ex_insts), size=k, replace=False)
            sample = [ex_insts[int(i)] for i in picks]
        pool: List[Instance] = list(fn_insts) + sample + list(dm_insts)
        order = rng.permutation(len(pool))

        losses = []
        for idx in order:
            inst = pool[int(idx)]
            g = Graph()
            if isinstance(inst, FnInstance):
                res = latent_hinge_loss(model, inst.space, inst.parse, g=g,
                                        rng=rng, training=True,
                                        options=options)
                pen = l1_penalty(g, res.cross, config.l1_weight)
            else:
                res = sdp_hinge_loss(model, inst.space, inst.graph, g=g,
                                     rng=rng, training=True, options=options)
                pen = None
            value = res.value + (float(pen.value) if pen is not None else 0.0)
            if not np.isfinite(value):
                raise SpandepError(f"non-finite loss at instance {inst.id!r}")
            losses.append(value)
            node = res.node
            if pen is not None:
                node = pen if node is None else g.add(node, pen)
            if node is not None:
                g.backward(node)
                clip_and_step(model.store, lr)

        dev_fn = dev_sdp = 0.0
        if fn_dev:
            pred = _predict_fn([model], list(fn_dev), dev_fn_insts, options)
            dev_fn = eval_frames(list(fn_dev), pred, model.ontology).f1
        if dm_dev:
            pred = _predict_dm([model], dev_dm_insts, options)
            dev_sdp = eval_sdp(list(dm_dev), pred).f1

        stats = EpochStats(epoch=epoch, lr=lr,
                           mean_loss=float(np.mean(losses)) if losses else 0.0,
                           dev_fn_f1=dev_fn, dev_sdp_f1=dev_sdp,
                           seconds=time.perf_counter() - t0)
        history.append(stats)
        if fn_dev and dev_fn > best_f1:
            best_f1 = dev_fn
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.store.values.items()}

    if best_params is not None:
        for name, value in best_params.items():
            model.store.values[name][...] = value
    else:
        best_epoch = len(history) - 1
        best_f1 = history[-1].dev_fn_f1 if history else 0.0

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for st in history:
                fh.write(st.tsv() + "\n")

    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_dev_fn_f1=best_f1)
