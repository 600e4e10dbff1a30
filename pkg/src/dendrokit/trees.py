"""Rooted planar trees, forests, and their broad posets.

A tree is stored as a root edge plus, for every edge carrying a vertex,
the planar-ordered tuple of edges immediately above it.  Edges with no
vertex are leaves.  Every vertex is read as a generating relation
(sources below-or-equal target), and the broad poset of the tree is the
closure of these under substituting a source by its own sources.
"""

from __future__ import annotations

import itertools
import re
from typing import Iterable, Iterator, Mapping, Sequence


class PlanarTree:
    """A rooted planar tree with named edges.

    ``up`` maps each vertex-carrying edge to the ordered tuple of edges
    immediately above it; a key mapped to the empty tuple is an edge
    capped by a nullary vertex.  Edges absent from ``up`` are leaves.
    """

    __slots__ = ("root", "up", "edges", "_pos", "_below")

    def __init__(self, root: str, up: Mapping[str, Sequence[str]]):
        self.up = {t: tuple(s) for t, s in up.items()}
        self.root = root
        below: dict[str, str] = {}
        for t, sources in self.up.items():
            for s in sources:
                if s in below:
                    raise ValueError(f"edge {s!r} is a source of two vertices")
                below[s] = t
        if root in below:
            raise ValueError(f"root {root!r} sits above a vertex")
        order: list[str] = []
        stack = [root]
        while stack:
            e = stack.pop()
            order.append(e)
            stack.extend(reversed(self.up.get(e, ())))
        pos = {e: i for i, e in enumerate(order)}
        if len(pos) != len(order):
            raise ValueError("duplicate edge name")
        for t in self.up:
            if t not in pos:
                raise ValueError(f"vertex at {t!r} is not connected to the root")
        self.edges = tuple(order)
        self._pos = pos
        self._below = below

    # -- basic views ----------------------------------------------------

    def leaves(self) -> tuple[str, ...]:
        """Edges with no vertex above them, in planar order."""
        return tuple(e for e in self.edges if e not in self.up)

    def inner_edges(self) -> tuple[str, ...]:
        """Edges that carry a vertex and are not the root, in planar order."""
        return tuple(e for e in self.edges if e in self.up and e != self.root)

    def vertices(self) -> tuple[tuple[str, tuple[str, ...]], ...]:
        """(target, sources) pairs, ordered by planar position of the target."""
        return tuple((e, self.up[e]) for e in self.edges if e in self.up)

    def has_vertex(self, e: str) -> bool:
        return e in self.up

    def parent(self, e: str) -> str | None:
        """The edge immediately below e, or None for the root."""
        self.check_edge(e)
        return self._below.get(e)

    def edge_index(self, e: str) -> int:
        """Planar preorder position of an edge, counting from zero."""
        self.check_edge(e)
        return self._pos[e]

    def check_edge(self, e: str) -> None:
        if e not in self._pos:
            raise KeyError(f"unknown edge {e!r}")

    def __contains__(self, e: str) -> bool:
        return e in self._pos

    def __len__(self) -> int:
        return len(self.edges)

    def key(self) -> tuple:
        return (self.root, tuple((e, self.up.get(e)) for e in self.edges))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlanarTree):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"PlanarTree({tree_to_text(self)!r})"

    def rename(self, mapping: Mapping[str, str]) -> "PlanarTree":
        """Bijectively rename edges; names not in the mapping stay put."""
        ren = lambda e: mapping.get(e, e)
        new_names = [ren(e) for e in self.edges]
        if len(set(new_names)) != len(new_names):
            raise ValueError("rename is not injective on edges")
        return PlanarTree(
            ren(self.root),
            {ren(t): tuple(ren(s) for s in srcs) for t, srcs in self.up.items()},
        )


def stick(name: str = "e") -> PlanarTree:
    return PlanarTree(name, {})


def corolla(root: str, leaves: Sequence[str]) -> PlanarTree:
    """Single-vertex tree with the given root and ordered leaves."""
    return PlanarTree(root, {root: tuple(leaves)})


# -- parsing and printing ----------------------------------------------

_TOKEN = re.compile(r"[()]|[^\s()]+")


def parse_tree(text: str) -> PlanarTree:
    """Parse the grammar  tree ::= NAME | "(" NAME tree* ")".

    A parenthesized group is an edge topped by a vertex whose subtrees
    are listed left to right; "(e)" is an edge capped by a nullary
    vertex; a bare name is a leaf.
    """
    tokens = _TOKEN.findall(text)
    up: dict[str, tuple[str, ...]] = {}
    pos = 0

    def parse() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise ValueError("unexpected ')'")
        if tok != "(":
            return tok
        if pos >= len(tokens) or tokens[pos] in ("(", ")"):
            raise ValueError("expected an edge name after '('")
        name = tokens[pos]
        pos += 1
        children = []
        while pos < len(tokens) and tokens[pos] != ")":
            children.append(parse())
        if pos >= len(tokens):
            raise ValueError("missing ')'")
        pos += 1
        if name in up:
            raise ValueError(f"duplicate edge name {name!r}")
        up[name] = tuple(children)
        return name

    root = parse()
    if pos != len(tokens):
        raise ValueError("trailing input after the tree")
    return PlanarTree(root, up)


def tree_to_text(tree: PlanarTree) -> str:
    """Inverse of parse_tree up to whitespace."""

    def emit(e: str) -> str:
        if e not in tree.up:
            return e
        return "(" + " ".join([e] + [emit(c) for c in tree.up[e]]) + ")"

    return emit(tree.root)


# -- broad poset --------------------------------------------------------


def broad_holds(tree: PlanarTree, sources: Sequence[str], target: str) -> bool:
    """Decide whether the relation (sources <= target) holds in the tree.

    Walks a frontier upward from the target, stopping at requested
    sources and failing at any leaf that was not requested.  The query
    is order-insensitive, and a tuple with repeated edges never holds.
    """
    tree.check_edge(target)
    for e in sources:
        tree.check_edge(e)
    want = set(sources)
    if len(want) != len(sources):
        return False
    reached = 0
    frontier = [target]
    while frontier:
        e = frontier.pop()
        if e in want:
            reached += 1
            continue
        if e not in tree.up:
            return False
        frontier.extend(tree.up[e])
    return reached == len(want)


def leq_d(tree: PlanarTree, e: str, f: str) -> bool:
    """True when e sits above f in the tree, or equals it."""
    tree.check_edge(e)
    tree.check_edge(f)
    cur: str | None = e
    while cur is not None:
        if cur == f:
            return True
        cur = tree._below.get(cur)
    return False


def expansion_order(tree: PlanarTree, sources: Iterable[str], target: str) -> tuple[str, ...]:
    """The planar order in which a holding relation's sources are reached.

    Expands the target depth-first, left to right, stopping at sources.
    Raises ValueError when the relation does not hold, so the result is
    always a planar normal form of the input set.
    """
    want = set(sources)
    out: list[str] = []

    def walk(e: str) -> None:
        if e in want:
            out.append(e)
            return
        if e not in tree.up:
            raise ValueError(f"relation {sorted(want)} <= {target} does not hold")
        for s in tree.up[e]:
            walk(s)

    walk(target)
    if len(out) != len(want):
        raise ValueError(f"relation {sorted(want)} <= {target} does not hold")
    return tuple(out)


def relations_above(tree: PlanarTree, target: str) -> list[tuple[str, ...]]:
    """All broad relations with the given target, as planar tuples.

    These correspond to the rooted full subtrees at the target: each
    relation lists the leaves of one such subtree in planar order.
    """
    tree.check_edge(target)

    def rel(e: str) -> list[tuple[str, ...]]:
        out = [(e,)]
        if e in tree.up:
            parts = [rel(s) for s in tree.up[e]]
            for combo in itertools.product(*parts):
                out.append(tuple(itertools.chain.from_iterable(combo)))
        return out

    return rel(target)


# -- canonical forms and isomorphisms ------------------------------------


def shape_encodings(tree: PlanarTree) -> dict[str, str]:
    """Iso-invariant encoding of the subtree above every edge.

    A leaf encodes as "l"; an edge with a vertex encodes as the sorted
    concatenation of its children's encodings in parentheses.
    """
    enc: dict[str, str] = {}
    for e in reversed(tree.edges):
        if e not in tree.up:
            enc[e] = "l"
        else:
            enc[e] = "(" + "".join(sorted(enc[s] for s in tree.up[e])) + ")"
    return enc


def canonical_shape(tree: PlanarTree) -> tuple[PlanarTree, dict[str, str], list[dict[str, str]]]:
    """Canonical representative of the tree's isomorphism class.

    Children at every vertex are reordered by their encodings and edges
    are renamed e0, e1, ... in preorder of the result, so isomorphic
    trees produce equal canonical forms.  Returns the canonical tree,
    the edge renaming onto it, and the automorphism group of the input
    as a list of edge permutations.
    """
    enc = shape_encodings(tree)
    naming: dict[str, str] = {}
    new_up: dict[str, tuple[str, ...]] = {}

    def build(e: str) -> str:
        name = f"e{len(naming)}"
        naming[e] = name
        if e in tree.up:
            kids = sorted(tree.up[e], key=lambda s: (enc[s], tree._pos[s]))
            new_up[name] = tuple(build(s) for s in kids)
        return name

    build(tree.root)
    canon = PlanarTree(naming[tree.root], new_up)
    autos = list(tree_isomorphisms(tree, tree))
    return canon, naming, autos


def tree_isomorphisms(s: PlanarTree, t: PlanarTree) -> Iterator[dict[str, str]]:
    """All isomorphisms from one tree onto another, as edge bijections."""
    enc_s = shape_encodings(s)
    enc_t = shape_encodings(t)

    def match(a: str, b: str) -> Iterator[dict[str, str]]:
        if enc_s[a] != enc_t[b]:
            return
        if a not in s.up:
            yield {a: b}
            return
        kids_a, kids_b = s.up[a], t.up[b]
        for perm in itertools.permutations(range(len(kids_b))):
            if any(enc_s[kids_a[i]] != enc_t[kids_b[j]] for i, j in enumerate(perm)):
                continue
            for parts in itertools.product(
                *(match(kids_a[i], kids_b[j]) for i, j in enumerate(perm))
            ):
                out = {a: b}
                for part in parts:
                    out.update(part)
                yield out

    yield from match(s.root, t.root)


def trees_isomorphic(s: PlanarTree, t: PlanarTree) -> bool:
    enc_s = shape_encodings(s)
    enc_t = shape_encodings(t)
    return enc_s[s.root] == enc_t[t.root]


# -- shape enumeration ---------------------------------------------------


def enumerate_shape_encodings(max_vertices: int, max_arity: int) -> list[list[str]]:
    """Encodings of all tree shapes, grouped by vertex count.

    Index n of the result lists the iso classes with exactly n vertices,
    every vertex having at most max_arity inputs.
    """
    by_count: list[list[str]] = [["l"]]
    for n in range(1, max_vertices + 1):
        found: set[str] = set()
        for k in range(0, max_arity + 1):
            for split in _compositions(n - 1, k):
                pools = [by_count[m] for m in split]
                for combo in itertools.product(*pools):
                    found.add("(" + "".join(sorted(combo)) + ")")
        by_count.append(sorted(found))
    return by_count


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def decode_shape(encoding: str) -> PlanarTree:
    """Build the canonical tree for a shape encoding, edges named e0, e1, ..."""
    up: dict[str, tuple[str, ...]] = {}
    counter = itertools.count()
    pos = 0

    def parse() -> str:
        nonlocal pos
        name = f"e{next(counter)}"
        if encoding[pos] == "l":
            pos += 1
            return name
        if encoding[pos] != "(":
            raise ValueError(f"bad shape encoding at offset {pos}")
        pos += 1
        children = []
        while encoding[pos] != ")":
            children.append(parse())
        pos += 1
        up[name] = tuple(children)
        return name

    root = parse()
    if pos != len(encoding):
        raise ValueError("trailing input after shape encoding")
    return PlanarTree(root, up)


def enumerate_shapes(max_vertices: int, max_arity: int) -> list[PlanarTree]:
    """Canonical trees for every iso class within the bounds."""
    grouped = enumerate_shape_encodings(max_vertices, max_arity)
    return [decode_shape(enc) for group in grouped for enc in group]


# -- substitution --------------------------------------------------------


def substitute(
    tree: PlanarTree, plan: Mapping[str, PlanarTree]
) -> tuple[PlanarTree, dict[str, str]]:
    """Replace every vertex by a tree with a matching leaf-root shape.

    The plan assigns to each vertex (keyed by its target edge) a tree
    whose leaf count equals the vertex arity.  A stick entry erases its
    unary vertex, fusing the two adjacent edges.  Returns the assembled
    tree together with the edge assignment of the tall map into it.
    """
    fused: dict[str, str] = {}

    def resolve(e: str) -> str:
        while e in fused:
            e = fused[e]
        return e

    new_up: dict[str, tuple[str, ...]] = {}
    pending: list[tuple[str, PlanarTree]] = []
    for target, sources in tree.vertices():
        if target not in plan:
            raise ValueError(f"no plan entry for the vertex at {target!r}")
        rep = plan[target]
        rep_leaves = rep.leaves()
        if len(rep_leaves) != len(sources):
            raise ValueError(
                f"arity mismatch at {target!r}: vertex has {len(sources)} inputs, "
                f"replacement has {len(rep_leaves)} leaves"
            )
        if not rep.up:
            fused[sources[0]] = target
            continue
        pending.append((target, rep))

    for target, rep in pending:
        sources = tree.up[target]
        ren = {rep.root: target}
        for leaf, s in zip(rep.leaves(), sources):
            ren[leaf] = s
        for e in rep.edges:
            if e not in ren:
                ren[e] = f"{target}.{e}"
        for t, srcs in rep.vertices():
            new_up[resolve(ren[t])] = tuple(resolve(ren[s]) for s in srcs)

    result = PlanarTree(resolve(tree.root), new_up)
    assignment = {e: resolve(e) for e in tree.edges}
    return result, assignment


# -- forests -------------------------------------------------------------


class Forest:
    """Ordered disjoint union of planar trees."""

    __slots__ = ("components", "_home")

    def __init__(self, components: Sequence[PlanarTree]):
        self.components = tuple(components)
        home: dict[str, int] = {}
        for i, comp in enumerate(self.components):
            for e in comp.edges:
                if e in home:
                    raise ValueError(f"edge {e!r} appears in two components")
                home[e] = i
        self._home = home

    def edges(self) -> tuple[str, ...]:
        return tuple(e for comp in self.components for e in comp.edges)

    def inner_edges(self) -> tuple[str, ...]:
        return tuple(e for comp in self.components for e in comp.inner_edges())

    def leaves(self) -> tuple[str, ...]:
        return tuple(e for comp in self.components for e in comp.leaves())

    def roots(self) -> tuple[str, ...]:
        return tuple(comp.root for comp in self.components)

    def component_of(self, e: str) -> int:
        if e not in self._home:
            raise KeyError(f"unknown edge {e!r}")
        return self._home[e]

    def component_at(self, e: str) -> PlanarTree:
        return self.components[self.component_of(e)]

    def __len__(self) -> int:
        return len(self.components)

    def key(self) -> tuple:
        return tuple(comp.key() for comp in self.components)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Forest):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return "Forest([%s])" % ", ".join(tree_to_text(c) for c in self.components)


# -- DOT export ----------------------------------------------------------


def tree_dot(tree: PlanarTree, name: str = "tree") -> str:
    """Graphviz source with one node per edge and per vertex, root at bottom."""
    ident = {e: f"edge{i}" for i, e in enumerate(tree.edges)}
    lines = [f"digraph {name} {{", "  rankdir=BT;"]
    for e in tree.edges:
        lines.append(f'  {ident[e]} [label="{e}" shape=none];')
    for i, (target, sources) in enumerate(tree.vertices()):
        lines.append(f"  v{i} [shape=point];")
        lines.append(f"  {ident[target]} -> v{i};")
        for s in sources:
            lines.append(f"  v{i} -> {ident[s]};")
    lines.append("}")
    return "\n".join(lines)
