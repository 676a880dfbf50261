"""Random linear-Gaussian SCMs with controlled confounding, mediation and
effect heterogeneity, plus observational data and counterfactual ground truth.

Graphs are sampled over a fixed causal order 0..d-1: each forward pair gets
an edge with probability ``p_e`` and a Unif(-1, 1) coefficient.  Treatment
and outcome roles are chosen among node pairs connected by a directed path
with exactly ``m`` intermediate hops, filtered by the confounding flag.
The treatment node is binarized as Bernoulli(logistic(latent)) so that
propensities stay strictly inside (0, 1), and the binary value propagates
downstream.  Ground-truth unit effects come from simulating both treatment
arms on identical noise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateArms, InfeasibleSpec, NoValidPair, NotPositiveDefinite

MAX_GRAPH_RETRIES = 100

# Reject noise covariances whose smallest eigenvalue (1 - sigma) falls below
# d * MIN_EIG_PER_DIM: accumulated rounding in the symmetric-root transform
# grows with dimension, so the guard tightens as d grows.
MIN_EIG_PER_DIM = 1e-4


@dataclass(frozen=True)
class ScmSpec:
    """Generator parameters for one SCM family member.

    Attributes:
        d: node count (>= 3).
        p_e: edge probability for each forward pair, in [0, 1].
        sigma: off-diagonal noise covariance, in [0, 1).
        rho: noise magnitude multiplier applied at non-source nodes, (0, 1].
        gamma: True to require a backdoor path between treatment and outcome,
            False to forbid one.
        m: mediator chain length in {0, 1, 2}.
        p_h: number of heterogeneity-inducing non-mediating parents, {0, 1, 2}.
        m_p: whether mediators also receive interaction terms from their own
            non-mediating parents.
        n: sample size.
        seed: 64-bit RNG seed.
    """

    d: int
    p_e: float
    sigma: float
    rho: float
    gamma: bool
    m: int
    p_h: int
    m_p: bool
    n: int
    seed: int

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("d must be >= 3")
        if not 0.0 <= self.p_e <= 1.0:
            raise ValueError("p_e must lie in [0, 1]")
        if not 0.0 <= self.sigma < 1.0:
            raise ValueError("sigma must lie in [0, 1)")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.m < 0 or self.p_h < 0 or self.n < 1:
            raise ValueError("counts must be nonnegative and n >= 1")
        if self.m + 2 > self.d:
            raise ValueError("need m + 2 <= d to place the mediator chain")


@dataclass
class CausalGraph:
    """A sampled DAG with edge coefficients and (optionally) assigned roles.

    ``adj[i, j]`` is True only for i < j in the causal order, so acyclicity
    holds by construction.  ``hte_parents`` maps an interaction-carrying node
    (the outcome, and each mediator when requested) to the sorted tuple of
    its non-mediating interaction parents.
    """

    order: np.ndarray
    adj: np.ndarray
    coef: np.ndarray
    t_node: int | None = None
    y_node: int | None = None
    mediators: tuple[int, ...] = ()
    hte_parents: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    def parents(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.adj[:, node])

    def children(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.adj[node, :])

    def descendants(self, node: int, include_self: bool = True) -> set[int]:
        """Nodes reachable from ``node`` along directed edges."""
        seen = {node}
        stack = [node]
        while stack:
            for child in np.flatnonzero(self.adj[stack.pop()]):
                if child not in seen:
                    seen.add(int(child))
                    stack.append(int(child))
        if not include_self:
            seen.discard(node)
        return seen

    def ancestors(self, node: int, include_self: bool = True) -> set[int]:
        seen = {node}
        stack = [node]
        while stack:
            for parent in np.flatnonzero(self.adj[:, stack.pop()]):
                if parent not in seen:
                    seen.add(int(parent))
                    stack.append(int(parent))
        if not include_self:
            seen.discard(node)
        return seen

    def feature_nodes(self) -> list[int]:
        """All nodes except treatment and outcome, in node-id order."""
        if self.t_node is None or self.y_node is None:
            raise ValueError("roles not assigned")
        return [i for i in range(self.d) if i not in (self.t_node, self.y_node)]


@dataclass
class Dataset:
    """Observational data plus counterfactual ground truth.

    ``x`` holds every node except treatment and outcome, in node-id order;
    ``feature_nodes[j]`` is the graph node behind column j, and
    ``post_treatment_mask[j]`` is True iff that node is a strict descendant
    of the treatment.
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    tau: np.ndarray
    feature_nodes: list[int]
    post_treatment_mask: np.ndarray

    @property
    def n_features(self) -> int:
        return self.x.shape[1]


def sample_graph(spec: ScmSpec, rng: np.random.Generator) -> CausalGraph:
    """Sample adjacency and coefficients over the fixed causal order."""
    d = spec.d
    upper = np.triu(np.ones((d, d), dtype=bool), k=1)
    adj = upper & (rng.random((d, d)) < spec.p_e)
    coef = np.where(adj, rng.uniform(-1.0, 1.0, size=(d, d)), 0.0)
    # Unif(-1, 1) can in principle return 0.0; keep coef nonzero iff adj.
    degenerate = adj & (coef == 0.0)
    while degenerate.any():
        coef[degenerate] = rng.uniform(-1.0, 1.0, size=int(degenerate.sum()))
        degenerate = adj & (coef == 0.0)
    return CausalGraph(order=np.arange(d), adj=adj, coef=coef)


def has_backdoor_path(graph: CausalGraph, t: int, y: int) -> bool:
    """True iff some node has directed paths into both t and y, the one to y
    avoiding t (common-ancestor criterion; equivalent to an open backdoor
    path in a DAG when nothing is conditioned on)."""
    if t == y:
        raise ValueError("t and y must differ")
    anc_t = graph.ancestors(t, include_self=False)
    anc_t.discard(y)
    if not anc_t:
        return False
    # reachability to y in the graph with t removed
    adj = graph.adj.copy()
    adj[t, :] = False
    adj[:, t] = False
    reach = {y}
    stack = [y]
    while stack:
        for parent in np.flatnonzero(adj[:, stack.pop()]):
            if parent not in reach:
                reach.add(int(parent))
                stack.append(int(parent))
    return bool(anc_t & reach)


def _exact_hop_pairs(graph: CausalGraph, m: int) -> list[tuple[int, int]]:
    """Ordered pairs joined by a directed path with exactly m intermediates.

    In a DAG every walk is a path, so boolean powers of the adjacency matrix
    count exactly what we need.
    """
    power = np.eye(graph.d, dtype=np.int64)
    a = graph.adj.astype(np.int64)
    for _ in range(m + 1):
        power = power @ a
    rows, cols = np.nonzero(power)
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def _lex_smallest_chain(graph: CausalGraph, t: int, y: int, m: int) -> list[int]:
    """Lexicographically smallest directed path t -> ... -> y with m hops."""

    def extend(path: list[int]) -> list[int] | None:
        node = path[-1]
        if len(path) == m + 1:
            return path + [y] if graph.adj[node, y] else None
        for child in np.flatnonzero(graph.adj[node]):
            if child == y:
                continue
            found = extend(path + [int(child)])
            if found is not None:
                return found
        return None

    chain = extend([t])
    if chain is None:
        raise RuntimeError("no directed path with the requested hop count")
    return chain


def role_candidates(graph: CausalGraph, spec: ScmSpec) -> list[tuple[int, int]]:
    """(t, y) pairs with an exact-m-hop path matching the confounding flag."""
    pairs = _exact_hop_pairs(graph, spec.m)
    return [(t, y) for t, y in pairs if has_backdoor_path(graph, t, y) == spec.gamma]


def select_roles(
    graph: CausalGraph, spec: ScmSpec, rng: np.random.Generator
) -> CausalGraph:
    """Assign treatment/outcome roles, the mediator chain and interaction parents.

    Raises:
        NoValidPair: no (t, y) pair satisfies the (gamma, m) requirement.
    """
    pairs = role_candidates(graph, spec)
    if not pairs:
        raise NoValidPair(f"no pair with m={spec.m}, gamma={spec.gamma}")
    t, y = pairs[int(rng.integers(len(pairs)))]
    chain = _lex_smallest_chain(graph, t, y, spec.m)
    mediators = tuple(chain[1:-1])

    hte: dict[int, tuple[int, ...]] = {}
    if spec.p_h > 0:
        chain_set = set(chain)

        def pick(node: int, chain_parent: int) -> tuple[int, ...]:
            eligible = sorted(
                int(p)
                for p in graph.parents(node)
                if p != chain_parent and p not in chain_set
            )
            take = min(spec.p_h, len(eligible))
            if take == 0:
                return ()
            chosen = rng.choice(np.array(eligible), size=take, replace=False)
            return tuple(sorted(int(c) for c in chosen))

        picked = pick(y, chain[-2])
        if picked:
            hte[y] = picked
        if spec.m_p:
            for pos, med in enumerate(mediators):
                picked = pick(med, chain[pos])
                if picked:
                    hte[med] = picked

    return CausalGraph(
        order=graph.order,
        adj=graph.adj,
        coef=graph.coef,
        t_node=t,
        y_node=y,
        mediators=mediators,
        hte_parents=hte,
    )


def sample_or_retry(
    spec: ScmSpec, rng: np.random.Generator
) -> tuple[CausalGraph, int]:
    """Resample graphs until roles can be assigned, up to MAX_GRAPH_RETRIES.

    Returns:
        (graph-with-roles, number of attempts used).

    Raises:
        InfeasibleSpec: every attempt failed.
    """
    for attempt in range(1, MAX_GRAPH_RETRIES + 1):
        graph = sample_graph(spec, rng)
        try:
            return select_roles(graph, spec, rng), attempt
        except NoValidPair:
            continue
    raise InfeasibleSpec(
        f"no valid (t, y) pair in {MAX_GRAPH_RETRIES} sampled graphs "
        f"for gamma={spec.gamma}, m={spec.m}, p_e={spec.p_e}"
    )


def sample_noise(spec: ScmSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw n rows of N(0, Sigma) noise, Sigma_ii = 1 and Sigma_ij = sigma.

    Realized through the symmetric eigen-root of Sigma so a near-singular
    covariance fails loudly instead of silently losing precision.

    Raises:
        NotPositiveDefinite: smallest eigenvalue 1 - sigma is at or below the
            dimension-dependent floor d * MIN_EIG_PER_DIM.
    """
    d, sigma = spec.d, spec.sigma
    min_eig = 1.0 - sigma
    floor = d * MIN_EIG_PER_DIM
    if min_eig <= floor:
        max_eig = 1.0 + (d - 1) * sigma
        raise NotPositiveDefinite(
            f"noise covariance too ill-conditioned: min eigenvalue {min_eig:.3g} "
            f"<= {floor:.3g} (d={d}), condition number {max_eig / max(min_eig, 1e-300):.3g}"
        )
    cov = np.full((d, d), sigma)
    np.fill_diagonal(cov, 1.0)
    eigvals, eigvecs = np.linalg.eigh(cov)
    root = (eigvecs * np.sqrt(np.maximum(eigvals, 0.0))) @ eigvecs.T
    return rng.standard_normal((spec.n, d)) @ root


def _simulate_arm(
    graph: CausalGraph, spec: ScmSpec, noise: np.ndarray, do_t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate structural equations with the treatment forced to ``do_t``.

    Returns the full value matrix and the treatment's latent (pre-forcing)
    linear value, which is identical across arms.
    """
    n = noise.shape[0]
    values = np.zeros((n, graph.d))
    latent_t = np.zeros(n)
    chain = (graph.t_node, *graph.mediators, graph.y_node)
    chain_pred = {chain[k + 1]: chain[k] for k in range(len(chain) - 1)}
    for i in graph.order:
        i = int(i)
        parents = graph.parents(i)
        if parents.size == 0:
            val = noise[:, i].copy()
        else:
            val = values[:, parents] @ graph.coef[parents, i] + spec.rho * noise[:, i]
        if i == graph.t_node:
            latent_t = val
            values[:, i] = do_t
            continue
        interaction_parents = graph.hte_parents.get(i, ())
        if interaction_parents:
            is_mediator = i in chain_pred and i != graph.y_node
            if i == graph.y_node or (is_mediator and spec.m_p):
                mediating = values[:, chain_pred[i]]
                val = val + mediating * values[:, list(interaction_parents)].sum(axis=1)
        values[:, i] = val
    return values, latent_t


def true_ite(graph: CausalGraph, spec: ScmSpec, noise: np.ndarray) -> np.ndarray:
    """Per-unit Y(1) - Y(0) from simulating both arms on identical noise."""
    arm1, _ = _simulate_arm(graph, spec, noise, 1.0)
    arm0, _ = _simulate_arm(graph, spec, noise, 0.0)
    return arm1[:, graph.y_node] - arm0[:, graph.y_node]


def generate(graph: CausalGraph, spec: ScmSpec, rng: np.random.Generator) -> Dataset:
    """Generate an observational dataset with ground-truth unit effects.

    Both counterfactual arms are simulated on shared noise; the factual row
    is the drawn arm, so factual values agree with the matching do() arm
    exactly.
    """
    if graph.t_node is None or graph.y_node is None:
        raise ValueError("graph needs assigned roles; run select_roles first")
    noise = sample_noise(spec, rng)
    arm1, latent_t = _simulate_arm(graph, spec, noise, 1.0)
    arm0, _ = _simulate_arm(graph, spec, noise, 0.0)
    propensity = 1.0 / (1.0 + np.exp(-latent_t))
    t = (rng.random(spec.n) < propensity).astype(np.float64)
    if t.min() == t.max():
        raise DegenerateArms("drawn treatment vector is single-class; increase n")
    values = np.where(t[:, None] == 1.0, arm1, arm0)
    tau = arm1[:, graph.y_node] - arm0[:, graph.y_node]

    feature_nodes = graph.feature_nodes()
    post = graph.descendants(graph.t_node, include_self=False)
    mask = np.array([node in post for node in feature_nodes], dtype=bool)
    return Dataset(
        x=values[:, feature_nodes],
        t=t,
        y=values[:, graph.y_node],
        tau=tau,
        feature_nodes=feature_nodes,
        post_treatment_mask=mask,
    )


def make_dataset(spec: ScmSpec) -> tuple[CausalGraph, Dataset, int]:
    """Sample a feasible graph and its dataset from the ScmSpec seed."""
    rng = np.random.default_rng(spec.seed)
    graph, attempts = sample_or_retry(spec, rng)
    return graph, generate(graph, spec, rng), attempts


def spawn_rngs(master_seed: int, count: int) -> list[np.random.Generator]:
    """Independent per-replicate generators from a splittable seed tree."""
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def replicate_seed(master_seed: int, replicate: int) -> int:
    """Deterministic 64-bit seed for one replicate of an experiment."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate,))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def graph_to_json(graph: CausalGraph, spec: ScmSpec) -> str:
    d = graph.d
    payload = {
        "order": [int(v) for v in graph.order],
        "adj": [int(v) for v in graph.adj.astype(int).reshape(d * d)],
        "coef": [float(v) for v in graph.coef.reshape(d * d)],
        "t_node": graph.t_node,
        "y_node": graph.y_node,
        "mediators": list(graph.mediators),
        "hte_parents": {str(k): list(v) for k, v in graph.hte_parents.items()},
        "spec": asdict(spec),
    }
    return json.dumps(payload, indent=2)


def graph_from_json(text: str) -> tuple[CausalGraph, ScmSpec]:
    payload = json.loads(text)
    spec = ScmSpec(**payload["spec"])
    d = spec.d
    graph = CausalGraph(
        order=np.array(payload["order"], dtype=np.int64),
        adj=np.array(payload["adj"], dtype=bool).reshape(d, d),
        coef=np.array(payload["coef"], dtype=np.float64).reshape(d, d),
        t_node=payload["t_node"],
        y_node=payload["y_node"],
        mediators=tuple(payload["mediators"]),
        hte_parents={int(k): tuple(v) for k, v in payload["hte_parents"].items()},
    )
    return graph, spec


def dataset_to_csv(dataset: Dataset) -> str:
    """Round-trip-safe CSV with header x0..x{k-1},t,y,tau."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    k = dataset.n_features
    writer.writerow([f"x{j}" for j in range(k)] + ["t", "y", "tau"])
    for i in range(dataset.x.shape[0]):
        row = [repr(float(v)) for v in dataset.x[i]]
        row.append(str(int(dataset.t[i])))
        row.append(repr(float(dataset.y[i])))
        row.append(repr(float(dataset.tau[i])))
        writer.writerow(row)
    return buf.getvalue()


def dataset_from_csv(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[-3:] != ["t", "y", "tau"]:
        raise ValueError("expected columns x0..x{k-1},t,y,tau")
    k = len(header) - 3
    rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=np.float64)
    return Dataset(
        x=data[:, :k],
        t=data[:, k],
        y=data[:, k + 1],
        tau=data[:, k + 2],
        feature_nodes=list(range(k)),
        post_treatment_mask=np.zeros(k, dtype=bool),
    )


def validate_dataset(dataset: Dataset) -> None:
    """Cheap invariant checks used by tests and the harness."""
    if not np.isfinite(dataset.x).all() or not np.isfinite(dataset.y).all():
        raise ValueError("non-finite values in dataset")
    if not np.isfinite(dataset.tau).all():
        raise ValueError("non-finite ground-truth effects")
    classes = np.unique(dataset.t)
    if not np.array_equal(classes, np.array([0.0, 1.0])):
        raise ValueError("treatment must contain both classes of {0, 1}")
    if math.isnan(float(dataset.tau.sum())):
        raise ValueError("tau contains NaN")
