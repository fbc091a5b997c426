"""Alternating-directions dual decomposition over binary factor graphs.

Each iteration solves one quadratic subproblem per factor (closed-form
projections, or the min-norm-point routine for segmentation factors),
averages the factor copies into a consensus vector, and takes a dual step.
Unary scores are split evenly among the factors touching each variable.

Exactness is certified by comparing a feasible thresholded assignment
against the running dual bound; when the relaxation stays fractional the
solver falls back to a small branch-and-bound over clamped subgraphs and,
past that budget, to a constructive rounding repair.  Status is "exact"
only with a certificate or a completed search.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .factor_graph import FactorGraph, Infeasible, clamp_graph
from .projections import (
    SemiMarkovProjector,
    project_amo_rows,
    project_implication,
    project_pair,
    project_xor_rows,
)
from .semimarkov import semi_markov_map


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 1000
    tol: float = 1e-6
    rho: float = 0.05
    adaptive_rho: bool = True
    check_every: int = 10
    branch_nodes: int = 64
    node_max_iter: int = 300


@dataclass
class SolveResult:
    assignment: frozenset
    active: np.ndarray
    objective: float
    dual: float
    status: str
    iterations: int


class _PaddedGroup:
    """XOR or AtMostOne factors padded into (F, K) matrices."""

    def __init__(self, factors, negated: bool):
        rows = [f.vars for f in factors]
        k = max(len(r) for r in rows)
        nf = len(rows)
        self.idx = np.zeros((nf, k), dtype=int)
        self.mask = np.zeros((nf, k), dtype=bool)
        self.neg = np.zeros((nf, k), dtype=bool)
        for r, f in enumerate(factors):
            self.idx[r, :len(f.vars)] = f.vars
            self.mask[r, :len(f.vars)] = True
            if negated:
                self.neg[r, :len(f.vars)] = f.neg
        self.lam = np.zeros((nf, k))
        self.u = np.zeros((nf, k))
        self.negated = negated

    def solve(self, p, omega, rho):
        z = p[self.idx] + (omega[self.idx] + self.lam) / rho
        if self.negated:
            self.u = project_xor_rows(z, self.neg, self.mask)
        else:
            self.u = project_amo_rows(z, self.mask)

    def eta(self, omega):
        return omega[self.idx] + self.lam

    def scatter(self, acc):
        np.add.at(acc, self.idx[self.mask], self.u[self.mask])

    def lam_step(self, p, rho):
        d = self.u - p[self.idx]
        d[~self.mask] = 0.0
        self.lam -= rho * d
        return float((d * d).sum())

    def dual_contrib(self, omega):
        eta = self.eta(omega)
        if self.negated:
            lit = np.where(self.neg, -eta, eta)
            base = (eta * self.neg).sum(axis=1)
            lit = np.where(self.mask, lit, -np.inf)
            return float((base + lit.max(axis=1)).sum())
        vals = np.where(self.mask, eta, -np.inf)
        return float(np.maximum(vals.max(axis=1), 0.0).sum())


class _EdgeGroup:
    """Implication or Pair factors as parallel index arrays."""

    def __init__(self, factors, pair: bool):
        self.a = np.array([f.a for f in factors], dtype=int)
        self.b = np.array([f.b for f in factors], dtype=int)
        self.c = np.array([f.score for f in factors]) if pair else None
        self.lam_a = np.zeros(len(factors))
        self.lam_b = np.zeros(len(factors))
        self.ua = np.zeros(len(factors))
        self.ub = np.zeros(len(factors))
        self.pair = pair

    def solve(self, p, omega, rho):
        za = p[self.a] + (omega[self.a] + self.lam_a) / rho
        zb = p[self.b] + (omega[self.b] + self.lam_b) / rho
        if self.pair:
            self.ua, self.ub = project_pair(za, zb, self.c / rho)
        else:
            self.ua, self.ub = project_implication(za, zb)

    def scatter(self, acc):
        np.add.at(acc, self.a, self.ua)
        np.add.at(acc, self.b, self.ub)

    def lam_step(self, p, rho):
        da = self.ua - p[self.a]
        db = self.ub - p[self.b]
        self.lam_a -= rho * da
        self.lam_b -= rho * db
        return float((da * da).sum() + (db * db).sum())

    def dual_contrib(self, omega):
        ea = omega[self.a] + self.lam_a
        eb = omega[self.b] + self.lam_b
        if self.pair:
            both = ea + eb + self.c
        else:
            both = ea + eb
        best = np.maximum(np.maximum(0.0, eb), both)
        if self.pair:
            best = np.maximum(best, ea)
        return float(best.sum())


class _SemiGroup:
    def __init__(self, factors):
        self.factors = factors
        self.vars = [np.array(f.vars, dtype=int) for f in factors]
        self.proj = [SemiMarkovProjector(f.spans, f.n, f.max_len)
                     for f in factors]
        self.lam = [np.zeros(len(f.vars)) for f in factors]
        self.u = [np.zeros(len(f.vars)) for f in factors]

    def solve(self, p, omega, rho):
        for i, f in enumerate(self.factors):
            z = p[self.vars[i]] + (omega[self.vars[i]] + self.lam[i]) / rho
            self.u[i] = self.proj[i].project(z)

    def scatter(self, acc):
        for i in range(len(self.factors)):
            np.add.at(acc, self.vars[i], self.u[i])

    def lam_step(self, p, rho):
        total = 0.0
        for i in range(len(self.factors)):
            d = self.u[i] - p[self.vars[i]]
            self.lam[i] -= rho * d
            total += float(d @ d)
        return total

    def dual_contrib(self, omega):
        total = 0.0
        for i, f in enumerate(self.factors):
            eta = omega[self.vars[i]] + self.lam[i]
            _, val = semi_markov_map(f.spans, eta, f.n, f.max_len)
            total += val
        return total


class _LoopState:
    def __init__(self, graph: FactorGraph, options: SolverOptions):
        self.graph = graph
        self.options = options
        deg = graph.degrees()
        self.deg = deg
        self.constrained = deg > 0
        self.free = ~self.constrained
        self.groups = []
        if graph.xors:
            self.groups.append(_PaddedGroup(graph.xors, negated=True))
        if graph.amos:
            self.groups.append(_PaddedGroup(graph.amos, negated=False))
        if graph.imps:
            self.groups.append(_EdgeGroup(graph.imps, pair=False))
        if graph.pairs:
            self.groups.append(_EdgeGroup(graph.pairs, pair=True))
        if graph.semis:
            self.groups.append(_SemiGroup(graph.semis))
        self.nslots = int(deg.sum())
        safe_deg = np.maximum(deg, 1)
        self.omega = graph.theta / safe_deg
        self.p = np.full(graph.nvars, 0.5)
        self.p[self.free] = (graph.theta[self.free] > 0).astype(float)
        self.dual_history: list[float] = []

    def free_value(self) -> float:
        th = self.graph.theta[self.free]
        return float(th[th > 0].sum())

    def dual_bound(self) -> float:
        total = self.graph.offset + self.free_value()
        for g in self.groups:
            total += g.dual_contrib(self.omega)
        return total

    def threshold_assignment(self) -> np.ndarray:
        active = self.p > 0.5
        active[self.free] = self.graph.theta[self.free] > 0
        return active

    def run(self):
        """Returns (best feasible assignment or None, its objective, dual
        bound, iterations, certified_exact)."""
        graph, opt = self.graph, self.options
        if self.nslots == 0:
            active = self.threshold_assignment()
            return active, graph.objective(active), graph.objective(active), 0, True

        rho = opt.rho
        best_primal = -np.inf
        best_active: Optional[np.ndarray] = None
        best_dual = np.inf
        scale = np.sqrt(max(self.nslots, 1))
        it = 0
        for it in range(1, opt.max_iter + 1):
            for g in self.groups:
                g.solve(self.p, self.omega, rho)
            acc = np.zeros(graph.nvars)
            for g in self.groups:
                g.scatter(acc)
            p_old = self.p
            p_new = acc / np.maximum(self.deg, 1)
            p_new[self.free] = p_old[self.free]
            self.p = p_new
            r_sq = 0.0
            for g in self.groups:
                r_sq += g.lam_step(p_new, rho)
            s_sq = float((self.deg * (p_new - p_old) ** 2).sum()) * rho * rho

            if it % opt.check_every == 0 or (r_sq <= (opt.tol * scale) ** 2
                                             and s_sq <= (opt.tol * scale) ** 2):
                active = self.threshold_assignment()
                if graph.check_assignment(active):
                    val = graph.objective(active)
                    if val > best_primal:
                        best_primal, best_active = val, active
                dual = self.dual_bound()
                self.dual_history.append(dual)
                best_dual = min(best_dual, dual)
                if best_active is not None and best_primal >= best_dual - opt.tol:
                    return best_active, best_primal, best_dual, it, True
                if (r_sq <= (opt.tol * scale) ** 2
                        and s_sq <= (opt.tol * scale) ** 2):
                    break
            if opt.adaptive_rho and it % 10 == 0:
                if r_sq > 100.0 * s_sq and rho < 1e3:
                    rho *= 2.0
                elif s_sq > 100.0 * r_sq and rho > 1e-4:
                    rho /= 2.0

        if not np.isfinite(best_dual):
            best_dual = self.dual_bound()
        return best_active, best_primal, best_dual, it, False


def _rounding_repair(graph: FactorGraph, p: np.ndarray) -> np.ndarray:
    """Build a feasible assignment guided by the relaxed solution: satisfy
    XOR factors by their strongest literal, segmentation factors by a MAP
    rerun over still-free variables, then absorb leftovers greedily."""
    decisions: dict[int, bool] = {}
    rounds = graph.nvars + len(graph.xors) + len(graph.semis) + len(graph.amos) + 8
    for _ in range(rounds):
        cr = clamp_graph(graph, decisions)
        g = cr.graph
        inv = {new: old for old, new in cr.var_map.items()}
        if g.xors:
            f = g.xors[0]
            lits = np.array([p[inv[v]] for v in f.vars])
            lits = np.where(f.neg, 1.0 - lits, lits)
            for j in np.argsort(-lits):
                attempt = dict(decisions)
                attempt[inv[f.vars[j]]] = not f.neg[j]
                try:
                    clamp_graph(graph, attempt)
                except Infeasible:
                    continue
                decisions = attempt
                break
            else:
                raise Infeasible("no satisfiable literal during rounding")
            continue
        if g.semis:
            f = g.semis[0]
            chosen, _ = semi_markov_map(f.spans, g.theta[list(f.vars)],
                                        f.n, f.max_len)
            on = {f.vars[k] for k in chosen}
            for v in f.vars:
                decisions[inv[v]] = v in on
            continue
        if g.amos:
            f = g.amos[0]
            th = g.theta[list(f.vars)]
            j = int(np.argmax(th))
            for k, v in enumerate(f.vars):
                decisions[inv[v]] = bool(k == j and th[j] > 0)
            continue
        # only implications/pairs remain: threshold, then force chains closed
        active = g.theta > 0
        for _ in range(len(g.imps) + 1):
            moved = False
            for f in g.imps:
                if active[f.a] and not active[f.b]:
                    active[f.b] = True
                    moved = True
            if not moved:
                break
        full = cr.lift(active)
        return full
    raise Infeasible("rounding repair failed to terminate")


def _most_fractional(p: np.ndarray, constrained: np.ndarray) -> int:
    frac = np.where(constrained, np.abs(p - 0.5), np.inf)
    return int(np.argmin(frac))


def ad3_solve(graph: FactorGraph, max_iter: int = 1000, tol: float = 1e-6,
              options: Optional[SolverOptions] = None,
              fixed: Optional[dict] = None) -> SolveResult:
    """MAP inference via dual decomposition with exactness certificates.

    ``fixed`` pins variables of ``graph`` before solving; the returned
    assignment and objective still refer to the original graph.
    """
    opt = options if options is not None \
        else SolverOptions(max_iter=max_iter, tol=tol)

    cr = clamp_graph(graph, fixed or {})
    state = _LoopState(cr.graph, opt)
    active, primal, dual, iters, exact = state.run()

    if not exact and state.constrained.any():
        # branch and bound on the most fractional variable
        node_opt = replace(opt, max_iter=opt.node_max_iter)
        budget = [opt.branch_nodes]
        incumbent = [primal, active]

        def descend(fixed: dict) -> bool:
            """Explore the subtree pinning ``fixed`` (state.graph ids).
            Returns True when exhausted rather than cut off by the budget."""
            if budget[0] <= 0:
                return False
            budget[0] -= 1
            try:
                node = clamp_graph(state.graph, fixed)
            except Infeasible:
                return True
            st = _LoopState(node.graph, node_opt)
            a, _, dub, _, ex = st.run()
            if a is not None:
                lifted = node.lift(a)
                got = state.graph.objective(lifted)
                if got > incumbent[0] or incumbent[1] is None:
                    incumbent[0], incumbent[1] = got, lifted
            if dub <= incumbent[0] + opt.tol or ex or not st.constrained.any():
                return True
            v_new = _most_fractional(st.p, st.constrained)
            inv = {new: old for old, new in node.var_map.items()}
            first = st.p[v_new] >= 0.5
            done = True
            for b in (first, not first):
                child = dict(node.forced)
                child[inv[v_new]] = bool(b)
                done = descend(child) and done
            return done

        v0 = _most_fractional(state.p, state.constrained)
        first = state.p[v0] >= 0.5
        complete = True
        for b in (first, not first):
            complete = descend({v0: bool(b)}) and complete
        primal, active = incumbent
        if active is not None and (complete or primal >= dual - opt.tol):
            exact = True
        if active is None:
            active = _rounding_repair(state.graph, state.p)
            primal = state.graph.objective(active)

    full = cr.lift(active)
    objective = graph.objective(full)
    labels = frozenset(graph.labels[v] for v in range(graph.nvars) if full[v])
    return SolveResult(assignment=labels, active=full, objective=objective,
                       dual=dual, status="exact" if exact else "rounded",
                       iterations=iters)
