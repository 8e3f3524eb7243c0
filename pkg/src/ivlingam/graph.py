"""Directed acyclic graphs and the purely graphical oracles used by the IV machinery.

Everything here is a pure function of an immutable :class:`Dag`.  Path and trek
queries are exhaustive, which is fine for the desk-scale graphs this package
targets (tens of vertices, queries on small neighbourhoods).
"""

from __future__ import annotations

import graphlib
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import InputError

OBSERVED = "observed"
LATENT = "latent"
ERROR = "error"
KINDS = (OBSERVED, LATENT, ERROR)

# suffix for auxiliary exogenous parents introduced when a latent has parents
EXO_SUFFIX = ".exo"


@dataclass(frozen=True, order=True)
class Vertex:
    name: str
    kind: str = OBSERVED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"vertex {self.name!r}: unknown kind {self.kind!r}")


class Dag:
    """An immutable DAG over named vertices tagged observed/latent/error.

    Latent vertices that are given parents are normalised so that their
    exogenous variation is carried by an explicit parentless latent
    ``<name>.exo``; the rewrite is listed in :attr:`rewrites`.
    """

    def __init__(self, vertices: Iterable, edges: Iterable[tuple[str, str]] = ()):
        kinds: dict[str, str] = {}
        for v in vertices:
            if isinstance(v, str):
                v = Vertex(v)
            elif not isinstance(v, Vertex):
                v = Vertex(*v)
            if v.name in kinds:
                raise InputError(f"duplicate vertex name {v.name!r}")
            kinds[v.name] = v.kind
        edge_list = []
        for e in edges:
            p, c = e
            for end in (p, c):
                if end not in kinds:
                    raise InputError(f"edge {p}->{c}: undeclared vertex {end!r}")
            if p == c:
                raise InputError(f"self-loop on {p!r}")
            edge_list.append((p, c))
        edge_set = set(edge_list)

        parents: dict[str, set[str]] = {v: set() for v in kinds}
        for p, c in edge_set:
            parents[c].add(p)

        self.rewrites: tuple[str, ...] = ()
        rewrites = []
        for v in list(kinds):
            if kinds[v] == LATENT and parents[v]:
                aux = v + EXO_SUFFIX
                if aux in parents[v] and kinds[aux] == LATENT:
                    continue  # already normalised
                if aux in kinds:
                    raise InputError(f"cannot normalise latent {v!r}: {aux!r} already exists")
                kinds[aux] = LATENT
                parents[aux] = set()
                parents[v].add(aux)
                edge_set.add((aux, v))
                rewrites.append(f"latent {v!r} has parents; added exogenous {aux!r} -> {v!r}")
        self.rewrites = tuple(rewrites)

        for v, k in kinds.items():
            if k == ERROR:
                n_children = sum(1 for p, _ in edge_set if p == v)
                if parents[v] or n_children != 1:
                    raise InputError(f"error vertex {v!r} must have no parents and exactly one child")

        try:
            order = tuple(graphlib.TopologicalSorter(
                {v: sorted(parents[v]) for v in kinds}).static_order())
        except graphlib.CycleError as exc:
            cycle = exc.args[1]
            raise InputError("graph is cyclic: " + " -> ".join(reversed(cycle))) from None

        self._kinds = kinds
        self._order = order
        self._edges = frozenset(edge_set)
        self._parents = {v: frozenset(ps) for v, ps in parents.items()}
        children: dict[str, set[str]] = {v: set() for v in kinds}
        for p, c in edge_set:
            children[p].add(c)
        self._children = {v: frozenset(cs) for v, cs in children.items()}
        self._desc_cache: dict[str, frozenset[str]] = {}
        self._anc_cache: dict[str, frozenset[str]] = {}

    # -- basic accessors -------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._kinds)

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return self._edges

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._order

    @property
    def vertices(self) -> tuple[Vertex, ...]:
        return tuple(Vertex(n, k) for n, k in self._kinds.items())

    def kind(self, v: str) -> str:
        self._check(v)
        return self._kinds[v]

    def of_kind(self, kind: str) -> tuple[str, ...]:
        return tuple(v for v, k in self._kinds.items() if k == kind)

    @property
    def observed(self) -> tuple[str, ...]:
        return self.of_kind(OBSERVED)

    @property
    def latent(self) -> tuple[str, ...]:
        return self.of_kind(LATENT)

    def parents(self, v: str) -> frozenset[str]:
        self._check(v)
        return self._parents[v]

    def children(self, v: str) -> frozenset[str]:
        self._check(v)
        return self._children[v]

    def has_edge(self, parent: str, child: str) -> bool:
        return (parent, child) in self._edges

    def __contains__(self, v: object) -> bool:
        return v in self._kinds

    def __len__(self) -> int:
        return len(self._kinds)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return self._kinds == other._kinds and self._edges == other._edges

    def __hash__(self):
        return hash((frozenset(self._kinds.items()), self._edges))

    def __repr__(self):
        return f"Dag({len(self)} vertices, {len(self._edges)} edges)"

    def _check(self, v: str) -> None:
        if v not in self._kinds:
            raise InputError(f"unknown vertex {v!r}")

    def check_names(self, names: Iterable[str]) -> frozenset[str]:
        out = frozenset(names)
        for v in out:
            self._check(v)
        return out

    def descendants(self, v: str) -> frozenset[str]:
        """Descendants of ``v``, including ``v`` itself."""
        self._check(v)
        if v not in self._desc_cache:
            self._desc_cache[v] = frozenset(_closure(v, self._children))
        return self._desc_cache[v]

    def ancestors(self, v: str) -> frozenset[str]:
        """Ancestors of ``v``, including ``v`` itself."""
        self._check(v)
        if v not in self._anc_cache:
            self._anc_cache[v] = frozenset(_closure(v, self._parents))
        return self._anc_cache[v]

    def ancestors_of_set(self, vs: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for v in vs:
            out |= self.ancestors(v)
        return frozenset(out)

    def without_edges(self, edges: Iterable[tuple[str, str]]) -> "Dag":
        drop = set(edges)
        return Dag(self.vertices, [e for e in self._edges if e not in drop])

    def with_edges(self, edges: Iterable[tuple[str, str]]) -> "Dag":
        return Dag(self.vertices, list(self._edges) + list(edges))

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        """Graph JSON form. Error vertices are never written."""
        names = [v for v in self._kinds if self._kinds[v] != ERROR]
        keep = set(names)
        return {
            "vertices": [{"name": v, "kind": self._kinds[v]} for v in names],
            "edges": sorted([p, c] for p, c in self._edges if p in keep and c in keep),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Dag":
        try:
            vertices = [Vertex(v["name"], v.get("kind", OBSERVED)) for v in d["vertices"]]
            edges = [tuple(e) for e in d["edges"]]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed graph JSON: {exc}") from None
        for e in edges:
            if len(e) != 2:
                raise InputError(f"malformed edge {list(e)!r}")
        return cls(vertices, edges)


def _closure(v: str, step: Mapping[str, Iterable[str]]) -> set[str]:
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in step[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


# ---------------------------------------------------------------------------
# d-separation and path predicates
# ---------------------------------------------------------------------------


def _disjoint(g: Dag, *sets: Iterable[str]) -> list[frozenset[str]]:
    out = [g.check_names(s) for s in sets]
    for a, b in itertools.combinations(out, 2):
        if a & b:
            raise InputError(f"sets must be disjoint, share {sorted(a & b)}")
    return out


def d_connected_set(g: Dag, sources: Iterable[str], S: Iterable[str]) -> frozenset[str]:
    """All vertices d-connected to some source given ``S`` (reachability walk)."""
    S = g.check_names(S)
    an_S = g.ancestors_of_set(S)
    # state: (vertex, arrived_from_child)
    stack = [(a, True) for a in sources]
    seen: set[tuple[str, bool]] = set()
    reached: set[str] = set()
    while stack:
        v, up = stack.pop()
        if (v, up) in seen:
            continue
        seen.add((v, up))
        if v not in S:
            reached.add(v)
        if up:
            if v in S:
                continue
            for p in g.parents(v):
                stack.append((p, True))
            for c in g.children(v):
                stack.append((c, False))
        else:
            if v not in S:
                for c in g.children(v):
                    stack.append((c, False))
            if v in an_S:
                for p in g.parents(v):
                    stack.append((p, True))
    return frozenset(reached)


def d_separated(g: Dag, A: Iterable[str], B: Iterable[str], S: Iterable[str] = ()) -> bool:
    """True iff ``S`` blocks every path between ``A`` and ``B``."""
    A, B, S = _disjoint(g, A, B, S)
    return not (d_connected_set(g, A, S) & B)


def _simple_paths(g: Dag, v: str, y: str, Z: frozenset[str], an_Z: frozenset[str]):
    """Yield (path, first_into_v, has_collider) for every active simple path v..y."""
    # path entries: (vertex, edge arrived by: +1 forward parent->child, -1 backward)
    def extend(path: list[str], dirs: list[int], on_path: set[str], has_collider: bool):
        u = path[-1]
        steps = [(c, 1) for c in sorted(g.children(u))] + [(p, -1) for p in sorted(g.parents(u))]
        for w, d in steps:
            if w in on_path:
                continue
            collider_here = has_collider
            if len(path) > 1:
                # u is interior: check activity given incoming dirs[-1] and outgoing d
                collider = dirs[-1] == 1 and d == -1
                if collider:
                    if u not in an_Z:
                        continue
                    collider_here = True
                elif u in Z:
                    continue
            if w == y:
                yield path + [w], dirs + [d], collider_here
                continue
            on_path.add(w)
            yield from extend(path + [w], dirs + [d], on_path, collider_here)
            on_path.discard(w)

    yield from extend([v], [], {v}, False)


def active_paths(g: Dag, v: str, y: str, Z: Iterable[str] = ()) -> Iterator[tuple[tuple[str, ...], tuple[int, ...]]]:
    """Enumerate active simple paths between ``v`` and ``y`` given ``Z``.

    Each path is returned with its edge directions (+1 along the walk, -1 against).
    """
    Z = g.check_names(Z)
    g.check_names((v, y))
    an_Z = g.ancestors_of_set(Z)
    for path, dirs, _ in _simple_paths(g, v, y, Z, an_Z):
        yield tuple(path), tuple(dirs)


def active_noncausal_path_exists(g: Dag, v: str, y: str, Z: Iterable[str] = ()) -> bool:
    """Is there an active path v..y given ``Z`` other than a directed path v -> ... -> y?

    Covers back-door paths into ``v`` and any active path through a conditioned collider.
    """
    Z = g.check_names(Z)
    g.check_names((v, y))
    if v in Z or y in Z:
        raise InputError("endpoints must not be in the conditioning set")
    if d_separated(g, {v}, {y}, Z):
        return False
    an_Z = g.ancestors_of_set(Z)
    for path, dirs, has_collider in _simple_paths(g, v, y, Z, an_Z):
        if has_collider or dirs[0] == -1:
            return True
    return False


def graphical_iv_criteria(g: Dag, w: str, Z: Iterable[str], x: str, y: str) -> bool:
    """Is ``w`` a valid instrument for x -> y after conditioning on ``Z``?"""
    Z = g.check_names(Z)
    g.check_names((w, x, y))
    if not g.has_edge(x, y):
        raise InputError(f"edge {x}->{y} is not in the graph")
    if w in Z or x in Z or y in Z:
        raise InputError("w, x, y must not be in Z")
    if d_separated(g, {w}, {x}, Z):
        return False
    if not d_separated(g.without_edges([(x, y)]), {w}, {y}, Z):
        return False
    forbidden = g.descendants(x) | g.descendants(y)
    return not (Z & forbidden)


# ---------------------------------------------------------------------------
# treks and t-separation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trek:
    """Two directed paths sharing only their first vertex (the source).

    ``left`` and ``right`` start at the source; a path of length one is the
    empty path sitting at the source.
    """

    left: tuple[str, ...]
    right: tuple[str, ...]

    @property
    def source(self) -> str:
        return self.left[0]

    @property
    def sinks(self) -> tuple[str, str]:
        return self.left[-1], self.right[-1]


def directed_paths(g: Dag, a: str, b: str, avoid: Iterable[str] = ()) -> Iterator[tuple[str, ...]]:
    """All directed paths from ``a`` to ``b`` whose vertices are not in ``avoid``."""
    avoid = frozenset(avoid)
    if a in avoid or b in avoid or b not in g.descendants(a):
        return

    def walk(path):
        u = path[-1]
        if u == b:
            yield tuple(path)
            return
        for c in sorted(g.children(u)):
            if c not in avoid and b in g.descendants(c):
                yield from walk(path + [c])

    yield from walk([a])


def treks(g: Dag, a: str, b: str) -> Iterator[Trek]:
    """All simple treks from ``a`` to ``b``."""
    g.check_names((a, b))
    for s in sorted(g.ancestors(a) & g.ancestors(b)):
        lefts = list(directed_paths(g, s, a))
        rights = list(directed_paths(g, s, b))
        for p1 in lefts:
            s1 = set(p1[1:])
            for p2 in rights:
                if not s1.intersection(p2[1:]):
                    yield Trek(p1, p2)


def _reach_avoiding(g: Dag, targets: frozenset[str], blocked: frozenset[str]) -> set[str]:
    """Vertices with a directed path into ``targets`` that avoids ``blocked`` entirely."""
    start = [t for t in targets if t not in blocked]
    seen = set(start)
    stack = list(start)
    while stack:
        u = stack.pop()
        for p in g.parents(u):
            if p not in blocked and p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def t_separated(g: Dag, VI: Iterable[str], VJ: Iterable[str],
                CI: Iterable[str] = (), CJ: Iterable[str] = ()) -> bool:
    """Does (CI; CJ) t-separate VI from VJ?

    A trek escapes iff its source reaches VI avoiding CI and reaches VJ
    avoiding CJ; restricting to simple treks does not change the answer
    (cut two overlapping paths at their last shared vertex).
    """
    VI, VJ, CI, CJ = (g.check_names(s) for s in (VI, VJ, CI, CJ))
    left = _reach_avoiding(g, VI, CI)
    right = _reach_avoiding(g, VJ, CJ)
    return not (left & right)


def generic_rank(g: Dag, A: Iterable[str], B: Iterable[str]) -> int:
    """Generic rank of the cross-covariance block Sigma_AB via the smallest t-separating pair."""
    A, B = g.check_names(A), g.check_names(B)
    if not A or not B:
        raise InputError("A and B must be nonempty")
    cap = min(len(A), len(B))
    cand_a = sorted(g.ancestors_of_set(A))
    cand_b = sorted(g.ancestors_of_set(B))
    for k in range(cap):
        for ka in range(k + 1):
            for CA in itertools.combinations(cand_a, ka):
                for CB in itertools.combinations(cand_b, k - ka):
                    if t_separated(g, A, B, CA, CB):
                        return k
    return cap


# ---------------------------------------------------------------------------
# choke points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChokeConditions:
    """Nested condition flags for one candidate instrument.

    Each flag implies the previous one: (ii) is evaluated on the paths found
    for (i), (iii) on the paths passing (ii), (iv) on the vertices passing (iii).
    """

    directed_path: bool = False
    unconfounded: bool = False
    blocks_outcome: bool = False
    blocks_treatment: bool = False
    candidates: tuple[str, ...] = ()
    path: tuple[str, ...] = ()

    @property
    def all(self) -> bool:
        return self.directed_path and self.unconfounded and self.blocks_outcome and self.blocks_treatment


@dataclass(frozen=True)
class ChokePointDiagnosis:
    choke_point: str | None
    conditions: Mapping[str, ChokeConditions] = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.choke_point is not None


def _open_ancestors(g: Dag, w: str, Z: frozenset[str]) -> set[str]:
    # proper ancestors of w linked to it by a directed path avoiding Z
    return _reach_avoiding(g, frozenset({w}), Z) - {w}


def _choke_conditions(g: Dag, w: str, pair: frozenset[str], Z: frozenset[str], x: str, y: str) -> ChokeConditions:
    paths = list(directed_paths(g, w, y, avoid=Z | {x}))
    if not paths:
        return ChokeConditions()
    # the partner is conditioned on alongside Z when w's residual is formed
    shield = Z | (pair - {w})
    confounders = _open_ancestors(g, w, shield)
    reach = {a: _closure_avoiding(g, a, shield | {w}) for a in confounders}

    def unconfounded(p):
        return not any(q in reach[a] for a in confounders for q in p[1:])

    clean = [p for p in paths if unconfounded(p)]
    if not clean:
        return ChokeConditions(True, False, path=paths[0])
    excluded = Z | pair | {x, y}
    iii = sorted({
        z0 for p in clean for z0 in p[1:-1]
        if z0 not in excluded and not any(True for _ in directed_paths(g, w, y, avoid=Z | {x, z0}))
    })
    if not iii:
        return ChokeConditions(True, True, path=clean[0])
    iv = tuple(z0 for z0 in iii if not any(True for _ in directed_paths(g, w, x, avoid=Z | {z0})))
    path = next(p for p in clean if (iv or iii)[0] in p)
    return ChokeConditions(True, True, True, bool(iv), candidates=iv, path=path)


def _closure_avoiding(g: Dag, a: str, blocked: frozenset[str]) -> set[str]:
    seen = {a}
    stack = [a]
    while stack:
        u = stack.pop()
        for c in g.children(u):
            if c not in blocked and c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def choke_point_diagnosis(g: Dag, wi: str, wj: str, Z: Iterable[str], x: str, y: str) -> ChokePointDiagnosis:
    """Look for a downstream conditional choke point shared by the pair (wi, wj) given Z."""
    Z = g.check_names(Z)
    g.check_names((wi, wj, x, y))
    pair = frozenset({wi, wj})
    conds = {w: _choke_conditions(g, w, pair, Z, x, y) for w in (wi, wj)}
    common = set(conds[wi].candidates) & set(conds[wj].candidates)
    choke = min(common) if common and all(c.all for c in conds.values()) else None
    return ChokePointDiagnosis(choke, conds)


# ---------------------------------------------------------------------------
# expanded graph
# ---------------------------------------------------------------------------


def error_name(v: str) -> str:
    return f"e_{v}"


def expanded_graph(g: Dag) -> Dag:
    """Add an explicit error parent e_V for every observed vertex V."""
    if g.of_kind(ERROR):
        raise InputError("graph already contains error vertices")
    new_vertices = list(g.vertices)
    new_edges = list(g.edges)
    for v in g.observed:
        e = error_name(v)
        if e in g:
            raise InputError(f"error name {e!r} collides with an existing vertex")
        new_vertices.append(Vertex(e, ERROR))
        new_edges.append((e, v))
    return Dag(new_vertices, new_edges)


def exogenous(g: Dag) -> tuple[str, ...]:
    return tuple(v for v in g.names if not g.parents(v))


def lemma6_support(g: Dag, i: str, C: Iterable[str]) -> frozenset[str]:
    """Exogenous terms carrying nonzero weight in the residual of ``i`` regressed on ``C``.

    These are the exogenous vertices of the expanded graph d-connected to
    ``i`` given ``C``.
    """
    C = g.check_names(C)
    eg = g if g.of_kind(ERROR) else expanded_graph(g)
    reach = d_connected_set(eg, {i}, C)
    return frozenset(e for e in exogenous(eg) if e in reach)
