"""Local causal discovery from the treatment toward the outcome.

The pipeline: a partial-correlation conditional-independence test feeds a
parent-children (PC) set discovery, collider tests identify definite
parents, remaining PC members are oriented pairwise, and a breadth-first
traversal from the treatment assembles a partial graph whose treatment
descendants form the forbidden (post-treatment) set.

Pairwise orientation uses cubic-regression residual comparison for
continuous pairs.  Pairs involving the binary treatment column are oriented
by a generative likelihood ratio instead: residual comparison carries no
directional information there (predicting a binary variable from a
continuous one is always the easier regression, whichever way the edge
points).  Continuous verdicts only classify a node as a child when the
residual asymmetry is decisive; near-ties default to the parent side,
which never removes a feature.

Both the independence test and the orienter can be swapped for graph-backed
oracles, which is how exact-recovery tests run.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple, Protocol

import numpy as np
from scipy.stats import norm

from .errors import ConstantColumn
from .scm_gen import CausalGraph

logger = logging.getLogger(__name__)

RECI_TIE_TOL = 1e-6
CHILD_GATE = 0.02  # min relative residual gap to call a node a child
LR_THRESHOLD = 0.5  # log-likelihood margin to call a treatment edge outgoing


@dataclass(frozen=True)
class CiTestConfig:
    """Conditional-independence testing parameters."""

    alpha: float = 0.05
    max_cond: int = 3
    test: str = "fisherz"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_cond < 0:
            raise ValueError("max_cond must be nonnegative")


class CiTester(Protocol):
    def independent(self, i: int, j: int, cond: tuple[int, ...]) -> bool: ...


class FisherZTester:
    """Partial-correlation independence test with a cached correlation matrix."""

    def __init__(self, data: np.ndarray, cfg: CiTestConfig):
        self.data = np.asarray(data, dtype=np.float64)
        self.cfg = cfg
        self.n = self.data.shape[0]
        with np.errstate(invalid="ignore"):
            self.corr = np.corrcoef(self.data, rowvar=False)
        self.corr = np.nan_to_num(self.corr, nan=0.0)
        np.fill_diagonal(self.corr, 1.0)
        self._cache: dict = {}

    def test(self, i: int, j: int, cond: tuple[int, ...] = ()) -> tuple[float, bool]:
        """Two-sided p-value and the independence verdict at level alpha."""
        key = (min(i, j), max(i, j), tuple(sorted(cond)))
        if key not in self._cache:
            self._cache[key] = self._run(i, j, tuple(cond))
        p = self._cache[key]
        return p, p > self.cfg.alpha

    def independent(self, i: int, j: int, cond: tuple[int, ...] = ()) -> bool:
        return self.test(i, j, cond)[1]

    def _run(self, i: int, j: int, cond: tuple[int, ...]) -> float:
        n_cond = len(cond)
        if self.n <= n_cond + 3:
            raise ValueError("need n > |cond| + 3 samples for the z transform")
        if i == j:
            return 0.0
        if n_cond == 0:
            r = self.corr[i, j]
        else:
            idx = [i, j, *cond]
            sub = self.corr[np.ix_(idx, idx)]
            try:
                precision = np.linalg.inv(sub)
            except np.linalg.LinAlgError:
                logger.warning(
                    "singular conditioning set %s for (%d, %d); treating as dependent",
                    cond, i, j,
                )
                return 0.0
            denom = precision[0, 0] * precision[1, 1]
            if denom <= 0:
                logger.warning(
                    "ill-conditioned precision for (%d, %d | %s); treating as dependent",
                    i, j, cond,
                )
                return 0.0
            r = -precision[0, 1] / math.sqrt(denom)
        r = min(0.9999999, max(-0.9999999, float(r)))
        z = 0.5 * math.log((1.0 + r) / (1.0 - r)) * math.sqrt(self.n - n_cond - 3)
        return float(2.0 * norm.sf(abs(z)))


def fisher_z(
    data: np.ndarray, i: int, j: int, cond: Iterable[int], cfg: CiTestConfig
) -> tuple[float, bool]:
    """One-shot partial-correlation test; see FisherZTester for the cached form."""
    return FisherZTester(data, cfg).test(i, j, tuple(cond))


def d_separated(graph: CausalGraph, i: int, j: int, cond: Iterable[int]) -> bool:
    """Exact d-separation via reachability in the moralized ancestral graph."""
    if i == j:
        return False
    cond = set(cond)
    if i in cond or j in cond:
        return True
    relevant: set[int] = set()
    for node in {i, j} | cond:
        relevant |= graph.ancestors(node)
    neighbors: dict[int, set[int]] = {v: set() for v in relevant}
    for v in relevant:
        parents = [int(p) for p in graph.parents(v) if int(p) in relevant]
        for p in parents:
            neighbors[p].add(v)
            neighbors[v].add(p)
        for a, b in combinations(parents, 2):
            neighbors[a].add(b)
            neighbors[b].add(a)
    seen = {i}
    stack = [i]
    while stack:
        for nxt in neighbors[stack.pop()]:
            if nxt in cond or nxt in seen:
                continue
            if nxt == j:
                return False
            seen.add(nxt)
            stack.append(nxt)
    return True


class DSepOracle:
    """CI oracle answering from the true graph instead of data."""

    def __init__(self, graph: CausalGraph):
        self.graph = graph

    def independent(self, i: int, j: int, cond: tuple[int, ...] = ()) -> bool:
        return d_separated(self.graph, i, j, cond)

    def test(self, i: int, j: int, cond: tuple[int, ...] = ()) -> tuple[float, bool]:
        indep = self.independent(i, j, cond)
        return (1.0 if indep else 0.0), indep


# ---------------------------------------------------------------------------
# PC-set discovery and collider-based parent identification
# ---------------------------------------------------------------------------


def pc_simple(
    tester: CiTester, target: int, candidates: Iterable[int], cfg: CiTestConfig
) -> set[int]:
    """Parents-and-children set of ``target`` by leveled elimination.

    Level 0 drops candidates marginally independent of the target; level l
    drops a survivor if it is independent of the target given any size-l
    subset of the other survivors.  Stops once survivors cannot supply a
    conditioning set or l exceeds max_cond.
    """
    survivors = sorted(c for c in set(candidates) if c != target)
    survivors = [c for c in survivors if not tester.independent(c, target, ())]
    level = 1
    while level <= cfg.max_cond and len(survivors) > level:
        for c in list(survivors):
            others = [o for o in survivors if o != c]
            if len(others) < level:
                continue
            for cond in combinations(others, level):
                if tester.independent(c, target, cond):
                    survivors.remove(c)
                    break
        level += 1
    return set(survivors)


def discover_colliders(
    tester: CiTester, target: int, pc: Iterable[int], cfg: CiTestConfig
) -> set[int]:
    """Parents of ``target`` found through collider signatures.

    A pair of PC members that is marginally independent but becomes
    dependent given the target must point into the target.
    """
    parents: set[int] = set()
    for a, b in combinations(sorted(pc), 2):
        if tester.independent(a, b, ()) and not tester.independent(a, b, (target,)):
            parents.add(a)
            parents.add(b)
    return parents


# ---------------------------------------------------------------------------
# pairwise orientation
# ---------------------------------------------------------------------------


class OrientResult(NamedTuple):
    direction: str  # "i_to_j" or "j_to_i"
    tie: bool
    gap: float  # relative residual difference in [0, 1]


def _cubic_residual_mse(cause: np.ndarray, effect: np.ndarray) -> float:
    design = np.column_stack(
        [np.ones_like(cause), cause, cause**2, cause**3]
    )
    gram = design.T @ design + 1e-8 * np.eye(4)
    w = np.linalg.solve(gram, design.T @ effect)
    resid = effect - design @ w
    return float(np.mean(resid**2))


def orient_reci(data: np.ndarray, i: int, j: int) -> OrientResult:
    """Pairwise direction from cubic-regression residual comparison.

    Both columns are standardized; the variable that is easier to predict
    (strictly smaller mean squared residual) is taken to be the effect.
    Residuals equal within 1e-6 raise the tie flag and fall back to the
    low-index-first convention.  Swapping the arguments always yields the
    same physical direction.

    Raises:
        ConstantColumn: either column has zero variance.
    """
    a, b = np.asarray(data[:, i], float), np.asarray(data[:, j], float)
    if a.std() == 0.0 or b.std() == 0.0:
        raise ConstantColumn(f"columns {i}, {j} must be non-constant")
    a = (a - a.mean()) / a.std()
    b = (b - b.mean()) / b.std()
    err_ij = _cubic_residual_mse(a, b)  # predict j from i
    err_ji = _cubic_residual_mse(b, a)
    diff = err_ij - err_ji
    gap = abs(diff) / max(err_ij, err_ji, 1e-300)
    if abs(diff) <= RECI_TIE_TOL:
        direction = "i_to_j" if i < j else "j_to_i"
        return OrientResult(direction, True, gap)
    return OrientResult("i_to_j" if diff < 0 else "j_to_i", False, gap)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def binary_direction_loglik(binary: np.ndarray, cont: np.ndarray) -> float:
    """Log-likelihood margin for 'binary causes continuous'.

    Compares two four-parameter generative models of the pair: Bernoulli
    plus Gaussian arms with pooled variance, versus a Gaussian margin with a
    logistic conditional.  Positive values favor the binary variable as the
    cause.
    """
    b = np.asarray(binary, float)
    c = np.asarray(cont, float)
    n = len(b)
    p = min(max(float(b.mean()), 1e-12), 1.0 - 1e-12)
    ll_bern = float(b.sum()) * math.log(p) + float(n - b.sum()) * math.log(1.0 - p)
    mu1 = c[b == 1].mean() if (b == 1).any() else 0.0
    mu0 = c[b == 0].mean() if (b == 0).any() else 0.0
    resid = c - np.where(b == 1, mu1, mu0)
    var_pool = max(float(resid.var()), 1e-12)
    ll_arms = -0.5 * n * math.log(2 * math.pi * var_pool) - 0.5 * n
    ll_forward = ll_bern + ll_arms

    var_c = max(float(c.var()), 1e-12)
    ll_margin = -0.5 * n * math.log(2 * math.pi * var_c) - 0.5 * n
    from .supervised import fit_logistic

    model = fit_logistic(c[:, None], b, lam=1e-3)
    score = model.weights[0] + c * model.weights[1]
    probs = np.clip(_sigmoid(score), 1e-12, 1.0 - 1e-12)
    ll_logistic = float(b @ np.log(probs) + (1.0 - b) @ np.log(1.0 - probs))
    return ll_forward - (ll_margin + ll_logistic)


class Orienter(Protocol):
    def classify(self, target: int, member: int) -> str: ...


class GraphOrienter:
    """True-direction oracle used alongside the d-separation oracle."""

    def __init__(self, graph: CausalGraph):
        self.graph = graph

    def classify(self, target: int, member: int) -> str:
        if self.graph.adj[member, target]:
            return "parent"
        if self.graph.adj[target, member]:
            return "child"
        return "parent"  # non-adjacent leakage: never treat as descendant


class DataOrienter:
    """Data-driven parent/child classification for unresolved PC members.

    Treatment-adjacent pairs use the generative likelihood margin; all other
    pairs use cubic-residual comparison, calling a member a child only when
    the verdict points away from the target with a relative gap of at least
    ``child_gate``.
    """

    def __init__(
        self,
        data: np.ndarray,
        binary_col: int | None = None,
        child_gate: float = CHILD_GATE,
        lr_threshold: float = LR_THRESHOLD,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.binary_col = binary_col
        self.child_gate = child_gate
        self.lr_threshold = lr_threshold

    def classify(self, target: int, member: int) -> str:
        if self.binary_col is not None and self.binary_col in (target, member):
            other = member if target == self.binary_col else target
            margin = binary_direction_loglik(
                self.data[:, self.binary_col], self.data[:, other]
            )
            binary_causes = margin > self.lr_threshold
            if target == self.binary_col:
                return "child" if binary_causes else "parent"
            return "parent" if binary_causes else "child"
        result = orient_reci(self.data, target, member)
        away = result.direction == "i_to_j"  # args were (target, member)
        if away and not result.tie and result.gap >= self.child_gate:
            return "child"
        return "parent"


def local_structure(
    tester: CiTester,
    orienter: Orienter,
    target: int,
    candidates: Iterable[int],
    cfg: CiTestConfig,
) -> tuple[set[int], set[int]]:
    """(parents, children) of ``target`` among ``candidates``.

    Collider discovery marks definite parents; every unmarked PC member is
    classified by the orienter.
    """
    pc = pc_simple(tester, target, candidates, cfg)
    parents = discover_colliders(tester, target, pc, cfg)
    children: set[int] = set()
    for member in sorted(pc - parents):
        if orienter.classify(target, member) == "child":
            children.add(member)
        else:
            parents.add(member)
    return parents, children


# ---------------------------------------------------------------------------
# partial-structure traversal
# ---------------------------------------------------------------------------


@dataclass
class PartialGraph:
    """Directed structure discovered around the treatment-outcome path."""

    nodes: set[int] = field(default_factory=set)
    directed_edges: set[tuple[int, int]] = field(default_factory=set)
    undirected_edges: set[frozenset] = field(default_factory=set)

    def reaches(self, src: int, dst: int) -> bool:
        seen = {src}
        stack = [src]
        while stack:
            node = stack.pop()
            for u, v in self.directed_edges:
                if u == node and v not in seen:
                    if v == dst:
                        return True
                    seen.add(v)
                    stack.append(v)
        return False

    def add_directed_edge(self, u: int, v: int) -> bool:
        """Add u -> v unless it would close a cycle; then keep v -> u.

        Returns True if the edge was added as requested.
        """
        if u == v:
            return False
        self.nodes.update((u, v))
        if (u, v) in self.directed_edges:
            return True
        if self.reaches(v, u):
            self.directed_edges.add((v, u))
            return False
        self.directed_edges.add((u, v))
        return True

    def descendants(self, node: int) -> set[int]:
        seen = {node}
        stack = [node]
        while stack:
            cur = stack.pop()
            for u, v in self.directed_edges:
                if u == cur and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def to_json(self) -> str:
        return json.dumps(
            {
                "nodes": sorted(self.nodes),
                "directed_edges": sorted(list(e) for e in self.directed_edges),
                "undirected_edges": sorted(sorted(e) for e in self.undirected_edges),
            }
        )


class StructureFitResult(NamedTuple):
    selected: tuple[int, ...]
    forbidden: frozenset
    graph: PartialGraph


def structure_fit(
    data: np.ndarray | None,
    t_col: int,
    y_col: int,
    candidates: Iterable[int],
    cfg: CiTestConfig | None = None,
    *,
    tester: CiTester | None = None,
    orienter: Orienter | None = None,
    child_gate: float = CHILD_GATE,
    lr_threshold: float = LR_THRESHOLD,
) -> StructureFitResult:
    """Remove discovered treatment descendants from the candidate columns.

    Local structures are learned breadth-first from the treatment's children
    toward the outcome; the outcome's own children are pre-marked as
    discovered so traversal never continues past them.  The forbidden set is
    the treatment's descendants within the assembled partial graph
    (including the treatment itself), and the returned columns are the
    candidates minus that set.

    Pass ``tester``/``orienter`` to run against graph oracles instead of
    data; ``data`` may then be None.
    """
    cfg = cfg or CiTestConfig()
    candidates = sorted(set(int(c) for c in candidates) - {t_col, y_col})
    if tester is None:
        if data is None:
            raise ValueError("data is required unless a tester is supplied")
        tester = FisherZTester(data, cfg)
    if orienter is None:
        if data is None:
            raise ValueError("data is required unless an orienter is supplied")
        orienter = DataOrienter(
            data, binary_col=t_col, child_gate=child_gate, lr_threshold=lr_threshold
        )
    scope = set(candidates) | {t_col, y_col}
    cache: dict[int, tuple[set[int], set[int]]] = {}

    def local(node: int) -> tuple[set[int], set[int]]:
        if node not in cache:
            cache[node] = local_structure(
                tester, orienter, node, scope - {node}, cfg
            )
        return cache[node]

    _, ch_y = local(y_col)
    discovered = set(ch_y)

    graph = PartialGraph()
    graph.nodes.add(t_col)
    _, ch_t = local(t_col)
    frontier: deque[int] = deque(sorted(ch_t))
    queued = set(ch_t)
    for child in sorted(ch_t):
        graph.add_directed_edge(t_col, child)

    while frontier:
        node = frontier.popleft()
        if node in discovered:
            continue
        discovered.add(node)
        _, children = local(node)
        for child in sorted(children):
            graph.add_directed_edge(node, child)
            if child not in discovered and child not in queued and child != t_col:
                frontier.append(child)
                queued.add(child)

    forbidden = graph.descendants(t_col)
    selected = tuple(c for c in candidates if c not in forbidden)
    return StructureFitResult(
        selected=selected, forbidden=frozenset(forbidden), graph=graph
    )


# ---------------------------------------------------------------------------
# oracle adjustment sets on the true graph
# ---------------------------------------------------------------------------

ADJUSTMENT_MODES = ("Parents", "Valid", "OSet")


class AdjustmentResult(NamedTuple):
    nodes: frozenset
    empty_causal_path: bool


def oracle_adjustment(graph: CausalGraph, mode: str) -> AdjustmentResult:
    """Ground-truth adjustment sets read off the generating graph.

    Parents: parents of the treatment (a valid set for a single treatment).
    Valid: every feature node except strict descendants of the treatment.
    OSet: parents of the nodes on directed treatment-outcome paths, minus
    the forbidden descendants and the treatment itself.
    """
    if graph.t_node is None or graph.y_node is None:
        raise ValueError("graph needs assigned roles")
    t, y = graph.t_node, graph.y_node
    if mode == "Parents":
        return AdjustmentResult(frozenset(int(p) for p in graph.parents(t)), False)
    if mode == "Valid":
        post = graph.descendants(t, include_self=False)
        keep = set(graph.feature_nodes()) - post
        return AdjustmentResult(frozenset(keep), False)
    if mode == "OSet":
        de_t = graph.descendants(t)  # includes t
        causal = (de_t - {t}) & graph.ancestors(y)
        if not causal:
            return AdjustmentResult(frozenset(), True)
        parents: set[int] = set()
        for node in causal:
            parents.update(int(p) for p in graph.parents(node))
        oset = parents - de_t
        return AdjustmentResult(frozenset(oset), False)
    raise ValueError(f"unknown adjustment mode {mode!r}; use one of {ADJUSTMENT_MODES}")
