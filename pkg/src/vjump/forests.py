"""Principal minors of the transition matrix and their spanning-forest sums.

For symmetric rates the principal minor obtained by deleting the rows and
columns in an index set I equals the total weight of the spanning forests
with |I| trees that each contain exactly one vertex of I (all-minors
matrix-tree theorem). Both sides are computed here independently: minors by
determinants, forest sums by exhaustive enumeration.

Indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from vjump.errors import EnumerationLimitError, PreconditionError, ValidationError
from vjump.model import VelocityModel, build_transition_matrix, check_irreducible

MAX_ENUMERATION_SPEEDS = 16


def index_set(indices, n: int) -> tuple:
    """Validate and normalize an index set to a strictly increasing tuple."""
    idx = tuple(int(i) for i in indices)
    if not idx:
        raise ValidationError("index set must be nonempty")
    if len(set(idx)) != len(idx):
        raise ValidationError(f"duplicate indices in {idx}")
    if min(idx) < 0 or max(idx) >= n:
        raise ValidationError(f"index set {idx} out of range for n={n}")
    return tuple(sorted(idx))


def _det_small(A: np.ndarray) -> float:
    k = A.shape[0]
    if k == 0:
        return 1.0
    if k == 1:
        return float(A[0, 0])
    if k == 2:
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    if k == 3:
        return float(
            A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
            - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
            + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
        )
    return float(np.linalg.det(A))


def principal_minor(B: np.ndarray, I) -> float:
    """Determinant of ``B`` with the rows and columns in ``I`` removed.

    Deleting every index gives 1 by convention.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    drop = index_set(I, n)
    keep = np.setdiff1d(np.arange(n), drop)
    return _det_small(B[np.ix_(keep, keep)])


def first_order_minors(B: np.ndarray) -> np.ndarray:
    return np.array([principal_minor(B, (i,)) for i in range(B.shape[0])])


def i1(B: np.ndarray) -> float:
    """Sum of the first-order principal minors of ``B``."""
    return float(first_order_minors(B).sum())


@dataclass(frozen=True)
class Forest:
    trees: tuple  # vertex tuples, ordered by smallest vertex
    arcs: tuple  # (i, j) pairs with i < j, lexicographic
    weight: float

    def tree_of(self, vertex: int) -> int:
        for k, tree in enumerate(self.trees):
            if vertex in tree:
                return k
        raise ValueError(vertex)

    def tree_weights(self, rates: np.ndarray) -> tuple:
        """Weight of each tree separately (a single vertex weighs 1)."""
        out = []
        for tree in self.trees:
            w = 1.0
            for i, j in self.arcs:
                if i in tree:
                    w *= rates[i, j]
            out.append(w)
        return tuple(out)

    def to_dict(self):
        return {
            "trees": [list(t) for t in self.trees],
            "arcs": [list(a) for a in self.arcs],
            "weight": self.weight,
        }


@dataclass(frozen=True)
class ForestFamily:
    constraint: tuple | None
    members: tuple

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def total_weight(self) -> float:
        return float(sum(f.weight for f in self.members))

    def between(self, i: int, j: int) -> "ForestFamily":
        """Two-tree members with ``i`` and ``j`` in different trees.

        Their total weight is the second-order minor ``B(i, j)``.
        """
        keep = tuple(
            f for f in self.members
            if len(f.trees) == 2 and f.tree_of(i) != f.tree_of(j)
        )
        return ForestFamily((i, j), keep)

    def to_json(self):
        return [f.to_dict() for f in self.members]


def _arc_list(model: VelocityModel):
    i, j = np.nonzero(np.triu(model.rates, k=1))
    arcs = list(zip(i.tolist(), j.tolist()))
    return arcs, [float(model.rates[a, b]) for a, b in arcs]


def _acyclic_subsets(n, arcs, size, separated=()):
    """Yield, in lexicographic order, index tuples of ``size`` arcs forming a forest.

    No component of a yielded forest contains two vertices of ``separated``.
    """
    parent = list(range(n))
    rank = [0] * n
    marked = [False] * n
    for v in separated:
        marked[v] = True
    chosen = []
    m = len(arcs)

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    def grow(start):
        need = size - len(chosen)
        if need == 0:
            yield tuple(chosen)
            return
        for e in range(start, m - need + 1):
            a, b = arcs[e]
            ra, rb = find(a), find(b)
            if ra == rb or (marked[ra] and marked[rb]):
                continue
            if rank[ra] < rank[rb]:
                ra, rb = rb, ra
            bumped = rank[ra] == rank[rb]
            was_marked = marked[ra]
            parent[rb] = ra
            rank[ra] += bumped
            marked[ra] = was_marked or marked[rb]
            chosen.append(e)
            yield from grow(e + 1)
            chosen.pop()
            parent[rb] = rb
            rank[ra] -= bumped
            marked[ra] = was_marked

    yield from grow(0)


def _components(n, arc_pairs):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in arc_pairs:
        parent[find(a)] = find(b)
    groups = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return tuple(sorted(tuple(g) for g in groups.values()))


def _check_enumerable(model: VelocityModel):
    if model.n > MAX_ENUMERATION_SPEEDS:
        raise EnumerationLimitError(
            f"forest enumeration limited to n <= {MAX_ENUMERATION_SPEEDS}, got n={model.n}"
        )
    if not model.is_symmetric:
        raise PreconditionError("forest sums require symmetric transition rates")


def _make_forest(n, arcs, weights, subset):
    pairs = tuple(arcs[e] for e in subset)
    w = 1.0
    for e in subset:
        w *= weights[e]
    return Forest(_components(n, pairs), pairs, w)


def enumerate_forests(model: VelocityModel, I) -> ForestFamily:
    """All spanning forests with |I| trees, each tree holding one vertex of I.

    Only arcs with a positive rate are eligible. Members come out in
    lexicographic order of their sorted arc lists.
    """
    _check_enumerable(model)
    I = index_set(I, model.n)
    arcs, weights = _arc_list(model)
    n = model.n
    members = tuple(
        _make_forest(n, arcs, weights, s)
        for s in _acyclic_subsets(n, arcs, n - len(I), separated=I)
    )
    return ForestFamily(I, members)


def forest_minor(model: VelocityModel, I) -> float:
    """Total weight of :func:`enumerate_forests`; equals the principal minor."""
    _check_enumerable(model)
    I = index_set(I, model.n)
    arcs, weights = _arc_list(model)
    total = 0.0
    for s in _acyclic_subsets(model.n, arcs, model.n - len(I), separated=I):
        w = 1.0
        for e in s:
            w *= weights[e]
        total += w
    return total


def forest_minor_table(model: VelocityModel, max_order: int = 3) -> dict:
    """Forest sums for every index set of size 1..``max_order`` in one pass.

    Every spanning forest with k <= max_order trees contributes its weight to
    each index set choosing one vertex per tree. Sets with no admissible
    forest are present with value 0.
    """
    _check_enumerable(model)
    n = model.n
    max_order = min(max_order, n)
    arcs, weights = _arc_list(model)
    table = {
        I: 0.0
        for k in range(1, max_order + 1)
        for I in itertools.combinations(range(n), k)
    }
    for k in range(1, max_order + 1):
        for s in _acyclic_subsets(n, arcs, n - k):
            w = 1.0
            for e in s:
                w *= weights[e]
            trees = _components(n, [arcs[e] for e in s])
            for pick in itertools.product(*trees):
                table[tuple(sorted(pick))] += w
    return table


def forest_pairs(model: VelocityModel) -> ForestFamily:
    """Every spanning forest made of exactly two trees.

    Trees are ordered by their smallest vertex, so the first tree always
    contains vertex 0.
    """
    _check_enumerable(model)
    connected, _ = check_irreducible(model)
    if not connected:
        raise PreconditionError("irreducibility violated: rate graph is disconnected")
    arcs, weights = _arc_list(model)
    n = model.n
    members = tuple(_make_forest(n, arcs, weights, s) for s in _acyclic_subsets(n, arcs, n - 2))
    return ForestFamily(None, members)


def minors_from_matrix(model: VelocityModel, max_order: int = 3) -> dict:
    """Determinant-route counterpart of :func:`forest_minor_table`."""
    B = build_transition_matrix(model)
    n = model.n
    return {
        I: principal_minor(B, I)
        for k in range(1, min(max_order, n) + 1)
        for I in itertools.combinations(range(n), k)
    }
