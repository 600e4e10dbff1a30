"""Colored set operads with a finite group acting on colors.

Everything is finite and explicit: an operad is stored as a symmetric
sequence together with a total composition table covering every
composable configuration whose result stays within a declared arity
bound.  On top of that sit free operads on generator collections, the
operad of broad relations in a forest, nerves landing in a tree window,
color changes, fibered copowers, free extensions computed along two
independent routes, and fixed points of graph subgroups levelwise.

Conventions used throughout:

* a permutation is a tuple ``p`` with ``p[i]`` the value at ``i``, and
  ``compose_perm(p, q)[i] == p[q[i]]`` ("p after q");
* profiles carry the right action ``(C . p).inputs[i] == C.inputs[p[i]]``
  and the left action of the group through the color action;
* levels carry a right permutation action and a left group action that
  commute, and composition is equivariant for both in the usual
  block-permutation sense.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .groups import FiniteGroup, GraphSubgroup, cyclic, group_from_json, group_to_json
from .trees import Forest, PlanarTree, corolla, relations_above, stick
from .dsets import TreeSite, TruncatedGDSet, build_presheaf, is_strict_segal


class OperadError(ValueError):
    """An operad axiom failed or a request left the stored bounds.

    Carries an optional ``witness`` with enough data to reproduce the
    failing instance.
    """

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# permutations and profiles
# ---------------------------------------------------------------------------


def identity_perm(n: int) -> tuple:
    return tuple(range(n))


def compose_perm(p: tuple, q: tuple) -> tuple:
    """The permutation acting as p after q."""
    return tuple(p[i] for i in q)


def invert_perm(p: tuple) -> tuple:
    out = [0] * len(p)
    for i, v in enumerate(p):
        out[v] = i
    return tuple(out)


def block_perm(p: tuple, sizes: Sequence[int]) -> tuple:
    """Permute blocks of the given sizes the way p permutes positions.

    ``sizes[i]`` is the size of the block sitting at original position
    ``i``; the result rearranges whole blocks, preserving the order
    inside each one.
    """
    offsets = [0]
    for k in sizes:
        offsets.append(offsets[-1] + k)
    out = []
    for i in range(len(p)):
        b = p[i]
        out.extend(offsets[b] + t for t in range(sizes[b]))
    return tuple(out)


def block_diag(perms: Sequence[tuple]) -> tuple:
    """Concatenate permutations, each acting inside its own block."""
    out = []
    offset = 0
    for q in perms:
        out.extend(offset + t for t in q)
        offset += len(q)
    return tuple(out)


@dataclass(frozen=True)
class CProfile:
    """A tuple of input colors together with one output color."""

    inputs: tuple
    output: object

    @property
    def arity(self) -> int:
        return len(self.inputs)

    def permuted(self, p: tuple) -> "CProfile":
        if len(p) != len(self.inputs):
            raise OperadError("permutation length does not match the arity",
                              witness=(self, p))
        return CProfile(tuple(self.inputs[p[i]] for i in range(len(p))),
                        self.output)

    def translated(self, gact: Mapping, g) -> "CProfile":
        return CProfile(tuple(gact[(g, c)] for c in self.inputs),
                        gact[(g, self.output)])


def profile(inputs: Iterable, output) -> CProfile:
    return CProfile(tuple(inputs), output)


def _check_color_action(colors, group: FiniteGroup, gact: Mapping) -> None:
    cset = set(colors)
    if len(cset) != len(tuple(colors)):
        raise OperadError("duplicate colors")
    e = group.identity
    for c in colors:
        if gact.get((e, c)) != c:
            raise OperadError("identity must fix every color", witness=c)
    for g in group.elements:
        for c in colors:
            if (g, c) not in gact or gact[(g, c)] not in cset:
                raise OperadError("color action is not total", witness=(g, c))
    for g in group.elements:
        for h in group.elements:
            for c in colors:
                if gact[(group.mul(g, h), c)] != gact[(g, gact[(h, c)])]:
                    raise OperadError("color action is not associative",
                                      witness=(g, h, c))


# ---------------------------------------------------------------------------
# symmetric sequences
# ---------------------------------------------------------------------------


class SymSeq:
    """A finite collection of levels indexed by color profiles.

    ``levels`` maps profiles to tuples of elements; missing keys are
    empty levels.  ``sym`` maps ``(profile, permutation)`` to a dict
    sending each element to its image in the permuted profile, and
    ``gmaps`` does the same for ``(profile, group element)``.
    """

    def __init__(self, colors, group: FiniteGroup, gact: Mapping,
                 levels: Mapping, sym: Mapping, gmaps: Mapping):
        self.colors = tuple(colors)
        self.group = group
        self.gact = dict(gact)
        self.levels = {C: tuple(xs) for C, xs in levels.items() if xs}
        self.sym = dict(sym)
        self.gmaps = dict(gmaps)

    def profiles(self) -> tuple:
        return tuple(sorted(self.levels, key=repr))

    def level(self, C: CProfile) -> tuple:
        return self.levels.get(C, ())

    def sym_apply(self, C: CProfile, x, p: tuple):
        if p == identity_perm(C.arity):
            return x
        return self.sym[(C, p)][x]

    def g_apply(self, g, C: CProfile, x):
        if g == self.group.identity:
            return x
        return self.gmaps[(C, g)][x]

    def translate(self, g, C: CProfile) -> CProfile:
        return C.translated(self.gact, g)


def _materialize_tables(levels, group, gact, sym_rule, g_rule):
    sym = {}
    gmaps = {}
    for C, xs in levels.items():
        for p in itertools.permutations(range(C.arity)):
            sym[(C, p)] = {x: sym_rule(C, x, p) for x in xs}
        for g in group.elements:
            gmaps[(C, g)] = {x: g_rule(g, C, x) for x in xs}
    return sym, gmaps


def build_symseq(colors, group, gact, levels, sym_rule, g_rule) -> SymSeq:
    """Materialize a symmetric sequence from action callbacks."""
    levels = {C: tuple(xs) for C, xs in levels.items() if xs}
    sym, gmaps = _materialize_tables(levels, group, gact, sym_rule, g_rule)
    return SymSeq(colors, group, gact, levels, sym, gmaps)


def empty_symseq(colors, group=None, gact=None) -> SymSeq:
    group = group if group is not None else cyclic(1)
    if gact is None:
        gact = {(g, c): c for g in group.elements for c in colors}
    return SymSeq(colors, group, gact, {}, {}, {})


def generator_symseq(colors, group, gact, generators: Mapping) -> SymSeq:
    """Free group-and-permutation closure of named generators.

    ``generators`` maps a name to the profile of that generator.  The
    element ``(name, g, p)`` lives at the profile ``g . C . p`` and both
    actions act freely on the tags, so the result is always free as a
    right permutation module.
    """
    levels = {}
    for name, C in generators.items():
        if C.output not in colors or any(c not in colors for c in C.inputs):
            raise OperadError("generator profile uses unknown colors",
                              witness=(name, C))
        for g in group.elements:
            for p in itertools.permutations(range(C.arity)):
                D = C.translated(gact, g).permuted(p)
                levels.setdefault(D, []).append((name, g, p))
    levels = {D: tuple(sorted(set(xs))) for D, xs in levels.items()}

    def sym_rule(C, x, q):
        name, g, p = x
        return (name, g, compose_perm(p, q))

    def g_rule(h, C, x):
        name, g, p = x
        return (name, group.mul(h, g), p)

    return build_symseq(colors, group, gact, levels, sym_rule, g_rule)


def validate_symseq(X: SymSeq) -> SymSeq:
    """Exhaustively check both actions; returns the sequence unchanged."""
    _check_color_action(X.colors, X.group, X.gact)
    cset = set(X.colors)
    for C in X.levels:
        if C.output not in cset or any(c not in cset for c in C.inputs):
            raise OperadError("level profile uses unknown colors", witness=C)
    for C, xs in X.levels.items():
        n = C.arity
        for p in itertools.permutations(range(n)):
            table = X.sym.get((C, p))
            if table is None:
                raise OperadError("missing permutation table", witness=(C, p))
            target = set(X.level(C.permuted(p)))
            seen = set()
            for x in xs:
                y = table.get(x)
                if y not in target or y in seen:
                    raise OperadError("permutation action is not a bijection",
                                      witness=(C, p, x))
                seen.add(y)
            if len(seen) != len(target):
                raise OperadError("permutation action is not onto",
                                  witness=(C, p))
        for x in xs:
            if X.sym_apply(C, x, identity_perm(n)) != x:
                raise OperadError("identity permutation must act trivially",
                                  witness=(C, x))
        for p in itertools.permutations(range(n)):
            Cp = C.permuted(p)
            for q in itertools.permutations(range(n)):
                for x in xs:
                    two = X.sym_apply(Cp, X.sym_apply(C, x, p), q)
                    one = X.sym_apply(C, x, compose_perm(p, q))
                    if two != one:
                        raise OperadError("permutation action is not "
                                          "associative", witness=(C, p, q, x))
        for g in X.group.elements:
            table = X.gmaps.get((C, g))
            if table is None:
                raise OperadError("missing group table", witness=(C, g))
            target = set(X.level(X.translate(g, C)))
            if set(table) != set(xs) or set(table.values()) != target or \
                    len(set(table.values())) != len(xs):
                raise OperadError("group action is not a bijection",
                                  witness=(C, g))
        for g in X.group.elements:
            Cg = X.translate(g, C)
            for h in X.group.elements:
                for x in xs:
                    two = X.g_apply(h, Cg, X.g_apply(g, C, x))
                    one = X.g_apply(X.group.mul(h, g), C, x)
                    if two != one:
                        raise OperadError("group action is not associative",
                                          witness=(C, g, h, x))
        # the two actions commute
        for g in X.group.elements:
            Cg = X.translate(g, C)
            for p in itertools.permutations(range(n)):
                for x in xs:
                    a = X.sym_apply(Cg, X.g_apply(g, C, x), p)
                    b = X.g_apply(g, C.permuted(p), X.sym_apply(C, x, p))
                    if a != b:
                        raise OperadError("group and permutation actions "
                                          "do not commute",
                                          witness=(C, g, p, x))
    return X


def is_sigma_free_symseq(X: SymSeq):
    """Whether every nonidentity permutation acts without fixed points.

    Returns ``(flag, witness)`` where the witness is a fixed
    ``(profile, element, permutation)`` triple when the answer is no.
    """
    for C, xs in X.levels.items():
        for p in itertools.permutations(range(C.arity)):
            if p == identity_perm(C.arity):
                continue
            if C.permuted(p) != C:
                continue
            for x in xs:
                if X.sym_apply(C, x, p) == x:
                    return False, (C, x, p)
    return True, None


# ---------------------------------------------------------------------------
# operads
# ---------------------------------------------------------------------------


class SetOperad:
    """A symmetric sequence with units and a total composition table.

    ``gamma`` is a dict keyed by ``(head profile, head element, parts)``
    where ``parts`` is a tuple of ``(profile, element)`` pairs, one per
    input of the head.  The table must contain exactly the composable
    configurations whose resulting arity stays within ``arity_bound``;
    anything else raises through :meth:`compose`.
    """

    def __init__(self, colors, group: FiniteGroup, gact: Mapping,
                 arity_bound: int, levels: Mapping, sym: Mapping,
                 gmaps: Mapping, units: Mapping, gamma: Mapping):
        self.seq = SymSeq(colors, group, gact, levels, sym, gmaps)
        self.arity_bound = int(arity_bound)
        self.units = dict(units)
        self.gamma = dict(gamma)
        self._by_output = {}
        for C in self.seq.levels:
            self._by_output.setdefault(C.output, []).append(C)
        for c in self._by_output:
            self._by_output[c].sort(key=repr)

    # thin delegation to the underlying sequence
    @property
    def colors(self):
        return self.seq.colors

    @property
    def group(self):
        return self.seq.group

    @property
    def gact(self):
        return self.seq.gact

    @property
    def levels(self):
        return self.seq.levels

    def profiles(self):
        return self.seq.profiles()

    def level(self, C):
        return self.seq.level(C)

    def sym_apply(self, C, x, p):
        return self.seq.sym_apply(C, x, p)

    def g_apply(self, g, C, x):
        return self.seq.g_apply(g, C, x)

    def translate(self, g, C):
        return self.seq.translate(g, C)

    def by_output(self, c, arity=None) -> tuple:
        found = self._by_output.get(c, [])
        if arity is None:
            return tuple(found)
        return tuple(C for C in found if C.arity == arity)

    def unit(self, c):
        try:
            return self.units[c]
        except KeyError:
            raise OperadError("no unit for color", witness=c)

    def unit_profile(self, c) -> CProfile:
        return CProfile((c,), c)

    def compose(self, C: CProfile, x, parts: Sequence):
        """Total composition; parts are (profile, element) pairs."""
        key = (C, x, tuple(parts))
        try:
            return self.gamma[key]
        except KeyError:
            raise OperadError("composition is not stored; it is either "
                              "ill typed or leaves the arity bound",
                              witness=key)

    def compose_at(self, C: CProfile, x, i: int, E: CProfile, y):
        """Graft y into input i of x, padding the rest with units."""
        parts = []
        for j, c in enumerate(C.inputs):
            if j == i:
                parts.append((E, y))
            else:
                parts.append((self.unit_profile(c), self.unit(c)))
        return self.compose(C, x, tuple(parts))

    def composed_profile(self, C: CProfile, parts: Sequence) -> CProfile:
        inputs = []
        for E, _ in parts:
            inputs.extend(E.inputs)
        return CProfile(tuple(inputs), C.output)

    def max_nonempty_arity(self) -> int:
        return max((C.arity for C in self.seq.levels), default=0)


def _composable_parts(O: SetOperad, C: CProfile, limit: int):
    """All part tuples for a head at C with total arity at most limit."""

    def rec(i, remaining):
        if i == C.arity:
            yield ()
            return
        for E in O.by_output(C.inputs[i]):
            if E.arity > remaining:
                continue
            for y in O.level(E):
                for rest in rec(i + 1, remaining - E.arity):
                    yield ((E, y),) + rest

    return rec(0, limit)


def validate_operad(data) -> SetOperad:
    """Parse if needed, then exhaustively check every operad axiom.

    Accepts either a :class:`SetOperad` or a JSON-style dict.  All laws
    are checked on every configuration within the stored arity bound;
    associativity is checked whenever the intermediate composite also
    stays within the bound.
    """
    O = operad_from_json(data) if isinstance(data, Mapping) else data
    validate_symseq(O.seq)
    bound = O.arity_bound
    if bound < 1:
        raise OperadError("arity bound must cover at least the units")
    for C in O.levels:
        if C.arity > bound:
            raise OperadError("level beyond the arity bound", witness=C)

    cset = set(O.colors)
    if set(O.units) != cset:
        raise OperadError("units must be indexed by exactly the colors")
    for c, u in O.units.items():
        if u not in O.level(O.unit_profile(c)):
            raise OperadError("unit is not an element of its level",
                              witness=c)
    for g in O.group.elements:
        for c in O.colors:
            moved = O.g_apply(g, O.unit_profile(c), O.unit(c))
            if moved != O.unit(O.gact[(g, c)]):
                raise OperadError("units are not preserved by the group",
                                  witness=(g, c))

    # the composition table holds exactly the in-bound configurations
    expected = set()
    for C in O.levels:
        for x in O.level(C):
            for parts in _composable_parts(O, C, bound):
                expected.add((C, x, parts))
    if set(O.gamma) != expected:
        extra = set(O.gamma) - expected
        missing = expected - set(O.gamma)
        raise OperadError("composition table does not match the composable "
                          "configurations within the bound",
                          witness=(sorted(extra, key=repr)[:1],
                                   sorted(missing, key=repr)[:1]))
    for (C, x, parts), z in O.gamma.items():
        D = O.composed_profile(C, parts)
        if z not in O.level(D):
            raise OperadError("composite lands outside its level",
                              witness=(C, x, parts))

    for (C, x, parts), z in O.gamma.items():
        # unit laws
        if all(E == O.unit_profile(E.output) and y == O.unit(E.output)
               for E, y in parts):
            if z != x:
                raise OperadError("right unit law fails", witness=(C, x))
        if C == O.unit_profile(C.output) and x == O.unit(C.output):
            if z != parts[0][1]:
                raise OperadError("left unit law fails", witness=parts[0])

    # associativity wherever the intermediate composite stays in bounds
    for (C, x, parts), z in O.gamma.items():
        D = O.composed_profile(C, parts)
        for subparts in _composable_parts(O, D, bound):
            flat = O.compose(D, z, subparts)
            cursor = 0
            inner = []
            ok = True
            for E, y in parts:
                chunk = subparts[cursor:cursor + E.arity]
                cursor += E.arity
                try:
                    inner.append((O.composed_profile(E, chunk),
                                  O.compose(E, y, chunk)))
                except OperadError:
                    ok = False
                    break
            if not ok:
                continue
            nested = O.compose(C, x, tuple(inner))
            if nested != flat:
                raise OperadError("associativity fails",
                                  witness=(C, x, parts, subparts))

    # equivariance in the head and in the parts
    for (C, x, parts), z in O.gamma.items():
        sizes = [E.arity for E, _ in parts]
        D = O.composed_profile(C, parts)
        for p in itertools.permutations(range(C.arity)):
            moved_head = O.sym_apply(C, x, p)
            moved_parts = tuple(parts[p[i]] for i in range(C.arity))
            lhs = O.compose(C.permuted(p), moved_head, moved_parts)
            rhs = O.sym_apply(D, z, block_perm(p, sizes))
            if lhs != rhs:
                raise OperadError("composition is not equivariant in the "
                                  "head", witness=(C, x, parts, p))
        for i, (E, y) in enumerate(parts):
            for q in itertools.permutations(range(E.arity)):
                moved = list(parts)
                moved[i] = (E.permuted(q), O.sym_apply(E, y, q))
                blocks = [identity_perm(k) for k in sizes]
                blocks[i] = q
                lhs = O.compose(C, x, tuple(moved))
                rhs = O.sym_apply(D, z, block_diag(blocks))
                if lhs != rhs:
                    raise OperadError("composition is not equivariant in "
                                      "the parts", witness=(C, x, parts, i, q))
        for g in O.group.elements:
            gx = O.g_apply(g, C, x)
            gparts = tuple((O.translate(g, E), O.g_apply(g, E, y))
                           for E, y in parts)
            lhs = O.compose(O.translate(g, C), gx, gparts)
            rhs = O.g_apply(g, D, z)
            if lhs != rhs:
                raise OperadError("composition is not group equivariant",
                                  witness=(C, x, parts, g))
    return O


def is_sigma_free_operad(O: SetOperad):
    return is_sigma_free_symseq(O.seq)


# ---------------------------------------------------------------------------
# basic builders
# ---------------------------------------------------------------------------


def _assemble(colors, group, gact, arity_bound, levels, sym_rule, g_rule,
              units, gamma_rule) -> SetOperad:
    """Build an operad from callbacks, materializing every table."""
    levels = {C: tuple(xs) for C, xs in levels.items() if xs}
    sym, gmaps = _materialize_tables(levels, group, gact, sym_rule, g_rule)
    probe = SetOperad(colors, group, gact, arity_bound, levels, sym, gmaps,
                      units, {})
    gamma = {}
    for C in probe.levels:
        for x in probe.level(C):
            for parts in _composable_parts(probe, C, arity_bound):
                gamma[(C, x, parts)] = gamma_rule(C, x, parts)
    return SetOperad(colors, group, gact, arity_bound, levels, sym, gmaps,
                     units, gamma)


def terminal_operad(arity_bound: int, group=None) -> SetOperad:
    """One color, one operation in every arity up to the bound."""
    group = group if group is not None else cyclic(1)
    gact = {(g, "c"): "c" for g in group.elements}
    levels = {CProfile(("c",) * n, "c"): ("*",)
              for n in range(arity_bound + 1)}
    return _assemble(
        ("c",), group, gact, arity_bound, levels,
        lambda C, x, p: "*", lambda g, C, x: "*", {"c": "*"},
        lambda C, x, parts: "*")


def associative_operad(arity_bound: int, group=None) -> SetOperad:
    """The one-color operad whose n-ary operations are orderings.

    An n-ary element is a permutation read as the word it spells;
    composition substitutes words into letter positions and the
    permutation action reorders the arguments.
    """
    group = group if group is not None else cyclic(1)
    gact = {(g, "c"): "c" for g in group.elements}
    levels = {CProfile(("c",) * n, "c"):
              tuple(sorted(itertools.permutations(range(n))))
              for n in range(arity_bound + 1)}

    def gamma_rule(C, x, parts):
        sizes = [E.arity for E, _ in parts]
        offsets = [0]
        for k in sizes:
            offsets.append(offsets[-1] + k)
        word = []
        for b in x:
            word.extend(offsets[b] + t for t in parts[b][1])
        return tuple(word)

    return _assemble(
        ("c",), group, gact, arity_bound, levels,
        lambda C, x, p: compose_perm(invert_perm(p), x),
        lambda g, C, x: x, {"c": (0,)}, gamma_rule)


def units_only_operad(colors, group=None, gact=None,
                      arity_bound: int = 1) -> SetOperad:
    """The initial operad on a color set: units and nothing else."""
    group = group if group is not None else cyclic(1)
    if gact is None:
        gact = {(g, c): c for g in group.elements for c in colors}
    levels = {CProfile((c,), c): (("unit", c),) for c in colors}
    return _assemble(
        tuple(colors), group, gact, arity_bound, levels,
        lambda C, x, p: x,
        lambda g, C, x: ("unit", gact[(g, x[1])]),
        {c: ("unit", c) for c in colors},
        lambda C, x, parts: parts[0][1])


def omega_operad(shape: Union[PlanarTree, Forest], arity_bound=None,
                 group=None, gact=None) -> SetOperad:
    """The operad of broad relations in a forest.

    Colors are the edges; a level is a single point exactly when the
    ordered inputs are distinct edges related to the output in the
    broad order of one component.  Composition is forced.
    """
    forest = shape if isinstance(shape, Forest) else Forest((shape,))
    group = group if group is not None else cyclic(1)
    colors = forest.edges()
    if gact is None:
        gact = {(g, c): c for g in group.elements for c in colors}

    nonempty = set()
    for tree in forest.components:
        for target in tree.edges:
            for rel in relations_above(tree, target):
                for order in itertools.permutations(rel):
                    nonempty.add(CProfile(order, target))
    natural = max((C.arity for C in nonempty), default=0)
    bound = max(natural, arity_bound or 0)
    levels = {C: ((),) for C in nonempty}

    def gamma_rule(C, x, parts):
        D = CProfile(tuple(c for E, _ in parts for c in E.inputs), C.output)
        if D not in levels:
            raise OperadError("broad relations failed to compose",
                              witness=(C, parts))
        return ()

    return _assemble(
        colors, group, gact, bound, levels,
        lambda C, x, p: (), lambda g, C, x: (),
        {c: () for c in colors}, gamma_rule)


# ---------------------------------------------------------------------------
# free operads on labeled trees
# ---------------------------------------------------------------------------
#
# Elements of a free operad are isomorphism classes of rooted trees with
# numbered open slots for the inputs and generator labels on the
# vertices.  A class is represented by a nested-tuple structure:
# ("slot", i) or ("op", kind, profile, label, children).  Canonical
# forms are computed bottom up by minimizing over sibling reorderings,
# transporting labels along the permutation action as we go.


def _canonical_structure(node, act, cache=None):
    if cache is None:
        cache = {}

    def rec(n):
        if n[0] == "slot":
            return n
        got = cache.get(n)
        if got is not None:
            return got
        _, kind, C, label, children = n
        children = tuple(rec(ch) for ch in children)
        best = None
        best_r = None
        for p in itertools.permutations(range(len(children))):
            cand = ("op", kind, C.permuted(p), act(kind, C, label, p),
                    tuple(children[p[i]] for i in range(len(children))))
            r = repr(cand)
            if best_r is None or r < best_r:
                best, best_r = cand, r
        cache[n] = cache[best] = best
        return best

    return rec(node)


def _structure_slots(node):
    if node[0] == "slot":
        yield node[1]
        return
    for ch in node[4]:
        yield from _structure_slots(ch)


def _structure_profile(node) -> CProfile:
    """Recover the slot profile of an op-rooted structure."""
    if node[0] == "slot":
        raise OperadError("a bare slot has no intrinsic profile")
    slot_colors = {}

    def walk(n):
        if n[0] == "slot":
            return
        _, _, C, _, children = n
        for j, ch in enumerate(children):
            if ch[0] == "slot":
                slot_colors[ch[1]] = C.inputs[j]
            else:
                walk(ch)

    walk(node)
    n = len(slot_colors)
    if set(slot_colors) != set(range(n)):
        raise OperadError("slots are not numbered contiguously",
                          witness=sorted(slot_colors))
    return CProfile(tuple(slot_colors[i] for i in range(n)), node[2].output)


def _relabel_slots(node, mapping):
    if node[0] == "slot":
        return ("slot", mapping[node[1]])
    _, kind, C, label, children = node
    return ("op", kind, C, label,
            tuple(_relabel_slots(ch, mapping) for ch in children))


def _count_kind(node, kind) -> int:
    if node[0] == "slot":
        return 0
    own = 1 if node[1] == kind else 0
    return own + sum(_count_kind(ch, kind) for ch in node[4])


def _ordered_partitions(items, k):
    """All ways to distribute a finite set over k ordered, possibly
    empty parts."""
    items = sorted(items)
    for assign in itertools.product(range(k), repeat=len(items)):
        parts = [[] for _ in range(k)]
        for it, j in zip(items, assign):
            parts[j].append(it)
        yield tuple(frozenset(part) for part in parts)


def _free_structures(X: SymSeq, D: CProfile, v_max: int):
    """All slotted trees with vertex labels from X, at most v_max
    vertices, and slot i colored D.inputs[i]."""
    by_output = {}
    for C in X.levels:
        by_output.setdefault(C.output, []).append(C)

    def grow(color, slots, budget):
        results = []
        if len(slots) == 1:
            (s,) = tuple(slots)
            if D.inputs[s] == color:
                results.append((("slot", s), 0))
        if budget < 1:
            return results
        for C in by_output.get(color, ()):
            for split in _ordered_partitions(slots, C.arity):
                for children, used in _products(split, C.inputs, budget - 1):
                    for x in X.level(C):
                        results.append((("op", "x", C, x, children),
                                        1 + used))
        return results

    def _products(split, colors, budget):
        def rec(i, remaining):
            if i == len(split):
                yield (), 0
                return
            for st, c1 in grow(colors[i], split[i], remaining):
                for rest, c2 in rec(i + 1, remaining - c1):
                    yield (st,) + rest, c1 + c2
        yield from rec(0, budget)

    return grow(D.output, frozenset(range(D.arity)), v_max)


def _growth_bound(arities, n: int) -> Optional[int]:
    """Largest vertex count a tree with n slots can have, or None.

    ``arities`` is the set of arities in which generators exist.  Unary
    generators allow unbounded chains; mixing nullary with higher
    arities allows unbounded cap-and-branch growth.
    """
    arities = set(arities)
    if not arities:
        return 0
    if 1 in arities:
        return None
    if arities <= {0}:
        return 1
    if 0 in arities:
        return None
    return max(0, n - 1)


@dataclass(frozen=True)
class FreeLevel:
    """One level of a free operad with a completeness certificate."""

    elements: frozenset
    complete: bool


def free_operad(X: SymSeq, D: CProfile, v_max: int) -> FreeLevel:
    """Trees with at most v_max vertices labeled in X, at profile D.

    The identity element is the bare slot at one-color-in, same-color
    profiles.  The complete flag certifies that raising v_max cannot
    add further elements.
    """
    def act(kind, C, label, p):
        return X.sym_apply(C, label, p)

    cache = {}
    found = {_canonical_structure(st, act, cache)
             for st, _ in _free_structures(X, D, v_max)}
    bound = _growth_bound({C.arity for C in X.levels}, D.arity)
    complete = bound is not None and v_max >= bound
    return FreeLevel(frozenset(found), complete)


# ---------------------------------------------------------------------------
# free presentations
# ---------------------------------------------------------------------------


@dataclass
class FreePresentation:
    """An operad presented as free on finitely many named generators."""

    colors: tuple
    group: FiniteGroup
    gact: dict
    generators: tuple  # pairs (name, CProfile)

    def symseq(self) -> SymSeq:
        return generator_symseq(self.colors, self.group, self.gact,
                                dict(self.generators))


def materialize_free(pres: FreePresentation, arity_bound: int) -> SetOperad:
    """Expand a free presentation into a total operad up to the bound.

    Only presentations whose level growth is certified finite can be
    materialized; unary generators raise.
    """
    X = pres.symseq()
    arities = {C.arity for C in X.levels}
    cache = {}

    def act(kind, C, label, p):
        return X.sym_apply(C, label, p)

    levels = {}
    for n in range(arity_bound + 1):
        for inputs in itertools.product(pres.colors, repeat=n):
            for out in pres.colors:
                D = CProfile(inputs, out)
                bound = _growth_bound(arities, n)
                if bound is None:
                    raise OperadError("free operad level growth is not "
                                      "certified finite", witness=D)
                lvl = free_operad(X, D, bound)
                if lvl.elements:
                    levels[D] = tuple(sorted(lvl.elements, key=repr))

    def sym_rule(D, x, p):
        if x[0] == "slot":
            return x
        inv = invert_perm(p)
        return _canonical_structure(_relabel_slots(x, dict(enumerate(inv))),
                                    act, cache)

    def translate_structure(g, node):
        if node[0] == "slot":
            return node
        _, kind, C, label, children = node
        return ("op", kind, X.translate(g, C), X.g_apply(g, C, label),
                tuple(translate_structure(g, ch) for ch in children))

    def g_rule(g, D, x):
        return _canonical_structure(translate_structure(g, x), act, cache)

    def gamma_rule(D, x, parts):
        offsets = [0]
        for E, _ in parts:
            offsets.append(offsets[-1] + E.arity)

        def splice(node):
            if node[0] == "slot":
                i = node[1]
                return _relabel_slots(parts[i][1],
                                      {s: offsets[i] + s
                                       for s in _structure_slots(parts[i][1])})
            _, kind, C, label, children = node
            return ("op", kind, C, label,
                    tuple(splice(ch) for ch in children))

        return _canonical_structure(splice(x), act, cache)

    units = {c: ("slot", 0) for c in pres.colors}
    sym, gmaps = _materialize_tables(levels, pres.group, pres.gact,
                                     sym_rule, g_rule)
    probe = SetOperad(pres.colors, pres.group, pres.gact, arity_bound,
                      levels, sym, gmaps, units, {})
    gamma = {}
    for C in probe.levels:
        for x in probe.level(C):
            for parts in _composable_parts(probe, C, arity_bound):
                gamma[(C, x, parts)] = gamma_rule(C, x, parts)
    return SetOperad(pres.colors, pres.group, pres.gact, arity_bound,
                     levels, sym, gmaps, units, gamma)


# ---------------------------------------------------------------------------
# change of color and fibered copowers
# ---------------------------------------------------------------------------


def change_of_color(f: Mapping, O, colors=None, gact=None):
    """Move an operad along a map of color sets.

    For a total operad, ``f`` maps new colors to old ones and the
    result restricts every level along ``f`` (a pullback).  For a free
    presentation, ``f`` maps its colors forward and the generators are
    relabeled (a pushforward).  Pushing a total operad forward is not
    supported and raises.
    """
    if isinstance(O, FreePresentation):
        missing = [c for c in O.colors if c not in f]
        if missing:
            raise OperadError("color map does not cover the presentation",
                              witness=missing)
        new_colors = tuple(colors) if colors is not None else \
            tuple(dict.fromkeys(f[c] for c in O.colors))
        if gact is None:
            if O.group.order() != 1:
                raise OperadError("a color action on the target is needed")
            gact = {(g, c): c for g in O.group.elements for c in new_colors}
        for g in O.group.elements:
            for c in O.colors:
                if f[O.gact[(g, c)]] != gact[(g, f[c])]:
                    raise OperadError("color map is not equivariant",
                                      witness=(g, c))
        gens = tuple((name, CProfile(tuple(f[c] for c in C.inputs),
                                     f[C.output]))
                     for name, C in O.generators)
        return FreePresentation(new_colors, O.group, dict(gact), gens)

    if not isinstance(O, SetOperad):
        raise OperadError("unsupported operand for change of color")
    new_colors = tuple(colors) if colors is not None else tuple(sorted(f))
    missing = [c for c in new_colors if c not in f]
    if missing:
        raise OperadError("color map does not cover the new colors",
                          witness=missing)
    old = set(O.colors)
    bad = [c for c in new_colors if f[c] not in old]
    if bad:
        raise OperadError("color map leaves the operad colors", witness=bad)
    if gact is None:
        if O.group.order() != 1:
            raise OperadError("a color action on the source is needed")
        gact = {(g, c): c for g in O.group.elements for c in new_colors}
    for g in O.group.elements:
        for c in new_colors:
            if f[gact[(g, c)]] != O.gact[(g, f[c])]:
                raise OperadError("color map is not equivariant",
                                  witness=(g, c))

    def push(D):
        return CProfile(tuple(f[c] for c in D.inputs), f[D.output])

    levels = {}
    for n in range(O.arity_bound + 1):
        for inputs in itertools.product(new_colors, repeat=n):
            for out in new_colors:
                D = CProfile(inputs, out)
                xs = O.level(push(D))
                if xs:
                    levels[D] = xs

    def sym_rule(D, x, p):
        return O.sym_apply(push(D), x, p)

    def g_rule(g, D, x):
        return O.g_apply(g, push(D), x)

    units = {c: O.unit(f[c]) for c in new_colors}

    def gamma_rule(D, x, parts):
        pushed = tuple((push(E), y) for E, y in parts)
        return O.compose(push(D), x, pushed)

    return _assemble(new_colors, O.group, dict(gact), O.arity_bound, levels,
                     sym_rule, g_rule, units, gamma_rule)


def fibered_copower(O, copies: Iterable):
    """The coproduct of copies of one operad over its color set.

    Zero copies give the units-only operad, one copy gives the operad
    back, and several copies require a free presentation, where the
    generators are tagged by the indexing set.
    """
    tags = tuple(copies)
    if len(set(tags)) != len(tags):
        raise OperadError("copy tags must be distinct", witness=tags)
    if isinstance(O, FreePresentation):
        if len(tags) == 1:
            return O
        gens = tuple(((tag, name), C)
                     for tag in tags for name, C in O.generators)
        return FreePresentation(O.colors, O.group, dict(O.gact), gens)
    if not isinstance(O, SetOperad):
        raise OperadError("unsupported operand for a fibered copower")
    if len(tags) == 1:
        return O
    if not tags:
        return units_only_operad(O.colors, O.group, dict(O.gact),
                                 O.arity_bound)
    raise OperadError("a fibered copower with several copies needs a free "
                      "presentation", witness=tags)


# ---------------------------------------------------------------------------
# alternating trees and free extensions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlternatingTree:
    """A planar tree whose vertices strictly alternate two kinds.

    ``active`` holds the vertex edges carrying old-operad labels; the
    remaining vertices are shaped like the adjoined generator.  Every
    edge touches exactly one active vertex, and the root and all leaves
    touch their active vertex from outside.
    """

    tree: PlanarTree
    active: frozenset
    coloring: tuple  # (edge, color) pairs in edge order

    def color(self, edge):
        return dict(self.coloring)[edge]


@dataclass(frozen=True)
class AlternatingEnumeration:
    trees: tuple
    complete: bool


def check_alternating(at: AlternatingTree) -> None:
    tree = at.tree
    for v in at.active:
        if v not in tree.up:
            raise OperadError("active marker is not a vertex", witness=v)
    for e in tree.edges:
        touches = 0
        if e in tree.up and e in at.active:
            touches += 1
        below = tree.parent(e)
        if below is not None and below in at.active:
            touches += 1
        if touches != 1:
            raise OperadError("an edge must touch exactly one active vertex",
                              witness=e)
    if dict(at.coloring).keys() != set(tree.edges):
        raise OperadError("coloring must cover exactly the edges")


def _generator_orbit(group: FiniteGroup, gact: Mapping, gen: CProfile):
    """Labels (g, p) indexed by the profile g.gen.p they land in."""
    orbit = {}
    for g in group.elements:
        moved = gen.translated(gact, g)
        for p in itertools.permutations(range(gen.arity)):
            orbit.setdefault(moved.permuted(p), []).append((g, p))
    return {C: tuple(labels) for C, labels in orbit.items()}


def _contiguous_splits(seq, k):
    """Split a sequence into k contiguous, possibly empty runs."""
    n = len(seq)
    for cuts in itertools.combinations_with_replacement(range(n + 1), k - 1) \
            if k > 1 else [()]:
        bounds = (0,) + cuts + (n,)
        yield tuple(seq[bounds[i]:bounds[i + 1]] for i in range(k))


def _alternating_shapes(O: SetOperad, orbit: Mapping, D: CProfile,
                        v_max: int):
    """Planar alternating shapes with the leaves of D in reading order.

    Yields (shape, inert count) pairs where a shape is ("leaf",),
    ("o", profile, children) for a vertex with a nonempty level of O,
    or ("g", profile, children) for a generator-shaped vertex.
    """

    def grow(color, leaves, need_active, budget):
        results = []
        if not need_active and len(leaves) == 1 and leaves[0] == color:
            results.append((("leaf",), 0))
        if need_active:
            for C in O.by_output(color):
                for split in _contiguous_splits(leaves, C.arity) \
                        if C.arity else ([()] if not leaves else []):
                    for children, used in _child_runs(split, C.inputs, False,
                                                      budget):
                        results.append((("o", C, children), used))
        else:
            if budget >= 1:
                for C in orbit:
                    if C.output != color:
                        continue
                    for split in _contiguous_splits(leaves, C.arity) \
                            if C.arity else ([()] if not leaves else []):
                        for children, used in _child_runs(split, C.inputs,
                                                          True, budget - 1):
                            results.append((("g", C, children), 1 + used))
        return results

    def _child_runs(split, colors, need_active, budget):
        def rec(i, remaining):
            if i == len(split):
                yield (), 0
                return
            for st, c1 in grow(colors[i], split[i], need_active, remaining):
                for rest, c2 in rec(i + 1, remaining - c1):
                    yield (st,) + rest, c1 + c2
        yield from rec(0, budget)

    return grow(D.output, tuple(D.inputs), True, v_max)


def _shape_key(shape):
    """Isomorphism-class key: leafless siblings may be reordered."""
    if shape[0] == "leaf":
        return ("leaf",), True
    kind, C, children = shape
    keyed = [_shape_key(ch) for ch in children]
    has_leaf = [flag for _, flag in keyed]
    best = None
    for p in itertools.permutations(range(len(children))):
        # only reorderings that keep the leafy children in their order
        leafy = [i for i in p if has_leaf[i]]
        if leafy != sorted(leafy):
            continue
        cand = (kind, C.permuted(p),
                tuple(keyed[p[i]][0] for i in range(len(children))))
        if best is None or repr(cand) < repr(best):
            best = cand
    return best, any(has_leaf)


def _shape_to_tree(shape, D: CProfile) -> AlternatingTree:
    counter = itertools.count()
    up = {}
    active = set()
    colors = {}

    def build(node, color):
        name = "e{}".format(next(counter))
        colors[name] = color
        if node[0] == "leaf":
            return name
        kind, C, children = node
        if kind == "o":
            active.add(name)
        up[name] = tuple(build(ch, C.inputs[j])
                         for j, ch in enumerate(children))
        return name

    root = build(shape, D.output)
    tree = PlanarTree(root, up)
    coloring = tuple((e, colors[e]) for e in tree.edges)
    return AlternatingTree(tree, frozenset(active), coloring)


def _extension_growth_bound(O: SetOperad, gen_arity: int,
                            n: int) -> Optional[int]:
    """Certified cap on inert vertices for leaf-root profiles of arity n."""
    if gen_arity == 1:
        return None
    if gen_arity == 0:
        return O.max_nonempty_arity()
    if any(C.arity == 0 for C in O.levels):
        return None
    if n == 0:
        return 0
    return (n - 1) // (gen_arity - 1)


def enumerate_alternating(D: CProfile, O: SetOperad, gen: CProfile,
                          v_max: int, unary_ok: bool = False
                          ) -> AlternatingEnumeration:
    """Alternating trees over O and one adjoined generator shape.

    Active vertices carry elements of O, inert vertices are shaped like
    ``gen`` up to the group and permutation actions, and the leaf-root
    profile is D.  At most v_max inert vertices are used; the complete
    flag certifies that no tree was missed.
    """
    if gen.arity == 1 and not unary_ok:
        raise OperadError("a unary generator admits unbounded alternating "
                          "chains; pass unary_ok to search anyway",
                          witness=gen)
    orbit = _generator_orbit(O.group, O.gact, gen)
    shapes = _alternating_shapes(O, orbit, D, v_max)
    seen = {}
    for shape, _ in shapes:
        key, _ = _shape_key(shape)
        if key not in seen:
            seen[key] = shape
    trees = tuple(_shape_to_tree(seen[key], D)
                  for key in sorted(seen, key=repr))
    for at in trees:
        check_alternating(at)
    bound = _extension_growth_bound(O, gen.arity, D.arity)
    complete = bound is not None and v_max >= bound
    return AlternatingEnumeration(trees, complete)


def _extension_act(O: SetOperad):
    def act(kind, C, label, p):
        if kind == "o":
            return O.sym_apply(C, label, p)
        g, q = label
        return (g, compose_perm(q, p))
    return act


def _alternating_slotted(O: SetOperad, orbit: Mapping, D: CProfile,
                         v_max: int):
    """Slotted labeled alternating trees at the profile D.

    Unlike the planar shape enumeration, slots are distributed over the
    subtrees in every possible way, so the results carry the full
    permutation orbit of each class.
    """

    def grow(color, slots, need_active, budget):
        results = []
        if not need_active and len(slots) == 1:
            (s,) = tuple(slots)
            if D.inputs[s] == color:
                results.append((("slot", s), 0))
        if need_active:
            for C in O.by_output(color):
                for split in _ordered_partitions(slots, C.arity):
                    for children, used in _child_sets(split, C.inputs, False,
                                                      budget):
                        for x in O.level(C):
                            results.append((("op", "o", C, x, children),
                                            used))
        else:
            if budget >= 1:
                for C, labels in orbit.items():
                    if C.output != color:
                        continue
                    for split in _ordered_partitions(slots, C.arity):
                        for children, used in _child_sets(split, C.inputs,
                                                          True, budget - 1):
                            for lab in labels:
                                results.append((("op", "g", C, lab,
                                                 children), 1 + used))
        return results

    def _child_sets(split, colors, need_active, budget):
        def rec(i, remaining):
            if i == len(split):
                yield (), 0
                return
            for st, c1 in grow(colors[i], split[i], need_active, remaining):
                for rest, c2 in rec(i + 1, remaining - c1):
                    yield (st,) + rest, c1 + c2
        yield from rec(0, budget)

    return grow(D.output, frozenset(range(D.arity)), True, v_max)


def _formula_level(O: SetOperad, gen: CProfile, D: CProfile,
                   v_max: int) -> frozenset:
    """Free-extension level computed from the alternating-tree formula."""
    orbit = _generator_orbit(O.group, O.gact, gen)
    act = _extension_act(O)
    cache = {}
    found = set()
    for st, _ in _alternating_slotted(O, orbit, D, v_max):
        found.add(_canonical_structure(st, act, cache))
    return frozenset(found)


def _graft_structure(a, i, b):
    """Replace slot i of a by b, renumbering slots left to right."""
    shift = len(set(_structure_slots(b)))

    def walk(node):
        if node[0] == "slot":
            s = node[1]
            if s < i:
                return node
            if s == i:
                return _relabel_slots(b, {t: t + i
                                          for t in _structure_slots(b)})
            return ("slot", s + shift - 1)
        _, kind, C, label, children = node
        return ("op", kind, C, label, tuple(walk(ch) for ch in children))

    return walk(a)


def _normalize_structure(O: SetOperad, node):
    """Collapse every edge between two active vertices by composing."""
    if node[0] == "slot":
        return node
    _, kind, C, label, children = node
    children = tuple(_normalize_structure(O, ch) for ch in children)
    if kind != "o":
        return ("op", kind, C, label, children)
    while True:
        hit = None
        for j, ch in enumerate(children):
            if ch[0] == "op" and ch[1] == "o":
                hit = j
                break
        if hit is None:
            return ("op", kind, C, label, children)
        inner = children[hit]
        parts = []
        for j, c in enumerate(C.inputs):
            if j == hit:
                parts.append((inner[2], inner[3]))
            else:
                parts.append((O.unit_profile(c), O.unit(c)))
        label = O.compose(C, label, tuple(parts))
        C = O.composed_profile(C, tuple(parts))
        children = children[:hit] + inner[4] + children[hit + 1:]


def pushout_oracle(O: SetOperad, gen: CProfile, v_max: int,
                   arity_cap: Optional[int] = None) -> dict:
    """Close O and one adjoined generator under grafting.

    An independent route to the free-extension levels: seed with the
    elements of O and the generator orbit written as alternating trees,
    then repeatedly graft one element into a slot of another,
    normalizing composable junctions away.  Returns a dict from
    profiles to frozensets of canonical structures, covering every
    profile reachable within the arity cap and v_max inert vertices.
    """
    act = _extension_act(O)
    max_atom = max(O.max_nonempty_arity(), gen.arity)
    if arity_cap is None:
        arity_cap = max_atom + max(gen.arity, 1)

    cache = {}

    def canonical(st):
        return _canonical_structure(st, act, cache)

    # the worklist keeps one planar-ordered representative per class;
    # grafting planar-ordered trees yields planar-ordered trees, and
    # the permutation orbits are restored at the end
    pool = {}

    def add(st):
        key = canonical(st)
        if key in pool:
            return None
        pool[key] = (_structure_profile(key), _count_kind(key, "g"))
        return key

    queue = []
    for C in O.seq.levels:
        for x in O.level(C):
            st = ("op", "o", C, x,
                  tuple(("slot", i) for i in range(C.arity)))
            key = add(st)
            if key is not None:
                queue.append(key)
    for C, labels in _generator_orbit(O.group, O.gact, gen).items():
        for lab in labels:
            inner = ("op", "g", C, lab,
                     tuple(("op", "o", O.unit_profile(c), O.unit(c),
                            (("slot", i),))
                           for i, c in enumerate(C.inputs)))
            st = ("op", "o", O.unit_profile(C.output), O.unit(C.output),
                  (inner,))
            key = add(st)
            if key is not None:
                queue.append(key)

    while queue:
        new = queue.pop()
        partners = list(pool)
        for other in partners:
            for a, b in ((new, other), (other, new)):
                got_a = pool.get(a)
                got_b = pool.get(b)
                if got_a is None or got_b is None:
                    continue
                (Da, ia), (Db, ib) = got_a, got_b
                if ia + ib > v_max:
                    continue
                if Da.arity + Db.arity - 1 > arity_cap or Da.arity == 0:
                    continue
                for i in range(Da.arity):
                    if Da.inputs[i] != Db.output:
                        continue
                    grafted = _graft_structure(a, i, b)
                    try:
                        normalized = _normalize_structure(O, grafted)
                    except OperadError:
                        # the merged label leaves the stored bound, so
                        # the result is not representable here; every
                        # representable class is still reached through
                        # unit junctions
                        continue
                    key = add(normalized)
                    if key is not None:
                        queue.append(key)

    levels = {}
    for key, (D, _) in pool.items():
        for p in itertools.permutations(range(D.arity)):
            inv = invert_perm(p)
            moved = canonical(_relabel_slots(key, dict(enumerate(inv))))
            levels.setdefault(D.permuted(p), set()).add(moved)
    return {D: frozenset(v) for D, v in levels.items()}


@dataclass(frozen=True)
class ExtensionReport:
    """Both routes to one level of a free extension, compared."""

    profile: CProfile
    elements: frozenset
    oracle: frozenset
    agree: bool
    complete: bool
    sigma_free: bool


def free_extension(O: SetOperad, gen: CProfile, D: CProfile,
                   v_max: int) -> ExtensionReport:
    """One level of the operad obtained by freely adjoining a generator.

    Computes the level at D twice: once by enumerating alternating
    trees directly and once through the grafting closure, and reports
    whether the two agree.  A false ``sigma_free`` flag marks base
    operads for which the tree formula is not guaranteed to apply.
    """
    if gen.output not in O.colors or \
            any(c not in O.colors for c in gen.inputs):
        raise OperadError("generator profile uses unknown colors",
                          witness=gen)
    free, _ = is_sigma_free_operad(O)
    elements = _formula_level(O, gen, D, v_max)
    cap = max(O.max_nonempty_arity(), gen.arity, D.arity) + max(gen.arity, 1)
    closure = pushout_oracle(O, gen, v_max, arity_cap=cap)
    oracle = closure.get(D, frozenset())
    bound = _extension_growth_bound(O, gen.arity, D.arity)
    complete = bound is not None and v_max >= bound
    return ExtensionReport(D, elements, oracle, elements == oracle,
                           complete, free)


# ---------------------------------------------------------------------------
# fixed points of graph subgroups
# ---------------------------------------------------------------------------


def norm_fixed_levels(O: SetOperad, C: CProfile,
                      subgroup: Union[GraphSubgroup, Iterable]) -> tuple:
    """Elements fixed by a subgroup of group-times-permutation pairs.

    Pairs ``(g, a)`` are taken in the convention where ``a`` is an
    honest image of ``g``; the twist applied on the right is the
    inverse permutation.  The subgroup must stabilize the profile.
    """
    pairs = subgroup.carrier if isinstance(subgroup, GraphSubgroup) \
        else frozenset(subgroup)
    n = C.arity
    for g, a in pairs:
        if g not in O.group.elements or len(a) != n:
            raise OperadError("pair does not live in the ambient product",
                              witness=(g, a))
        sigma = invert_perm(a)
        if O.translate(g, C).permuted(sigma) != C:
            raise OperadError("subgroup does not stabilize the profile",
                              witness=(g, a))
    fixed = []
    for x in O.level(C):
        ok = True
        for g, a in pairs:
            sigma = invert_perm(a)
            moved = O.sym_apply(O.translate(g, C), O.g_apply(g, C, x), sigma)
            if moved != x:
                ok = False
                break
        if ok:
            fixed.append(x)
    return tuple(fixed)


# ---------------------------------------------------------------------------
# nerve and its left inverse
# ---------------------------------------------------------------------------


def nerve(O: SetOperad, site: TreeSite) -> TruncatedGDSet:
    """The presheaf of colorings and vertex labels on a tree window.

    A cell at a shape is an edge coloring together with one element of
    O per vertex, at the profile the coloring reads off.  Restriction
    composes labels along collapsed subtrees and units along dropped
    ones; the group acts on colors and labels.
    """
    if O.arity_bound < site.max_arity:
        raise OperadError("the operad bound does not cover the window",
                          witness=(O.arity_bound, site.max_arity))

    def cells_of(key):
        tree = site.shape(key)
        edges = tree.edges
        verts = tree.vertices()
        out = []
        for colors in itertools.product(O.colors, repeat=len(edges)):
            kappa = dict(zip(edges, colors))
            pools = []
            for target, sources in verts:
                Cv = CProfile(tuple(kappa[s] for s in sources),
                              kappa[target])
                pools.append(O.level(Cv))
            for ops in itertools.product(*pools):
                out.append((colors, ops))
        return tuple(out)

    def restrict_along(m, cell):
        tcolors, tops = cell
        kappa = dict(zip(m.target.edges, tcolors))
        by_vertex = {v[0]: (CProfile(tuple(kappa[s] for s in v[1]),
                                     kappa[v[0]]), tops[j])
                     for j, v in enumerate(m.target.vertices())}

        def composite(edge, inner):
            """Compose the labels of the full subtree over this edge.

            Returns (profile, element, stop tuple): the recursion stops
            at edges outside ``inner`` and pads them with units.
            """
            C, x = by_vertex[edge]
            parts = []
            stops = []
            for s in m.target.up[edge]:
                if s in inner:
                    E, y, leaves = composite(s, inner)
                    parts.append((E, y))
                    stops.extend(leaves)
                else:
                    parts.append((O.unit_profile(kappa[s]), O.unit(kappa[s])))
                    stops.append(s)
            z = O.compose(C, x, tuple(parts))
            return O.composed_profile(C, tuple(parts)), z, tuple(stops)

        scolors = tuple(kappa[m(e)] for e in m.source.edges)
        sops = []
        for target, sources in m.source.vertices():
            im_t = m(target)
            im_s = tuple(m(s) for s in sources)
            if len(sources) == 1 and im_t == im_s[0]:
                sops.append(O.unit(kappa[im_t]))
                continue
            # vertex edges strictly between the image root and frontier
            inner = set()
            frontier = set(im_s)
            stack = [im_t]
            while stack:
                e = stack.pop()
                for s in m.target.up.get(e, ()):
                    if s in frontier:
                        continue
                    inner.add(s)
                    stack.append(s)
            inner &= set(m.target.up)
            Cz, z, stops = composite(im_t, inner)
            order = tuple(stops.index(s) for s in im_s)
            if sorted(order) != list(range(len(order))):
                raise OperadError("image edges do not match the subtree "
                                  "frontier", witness=(target, sources))
            sops.append(O.sym_apply(Cz, z, order))
        return (scolors, tuple(sops))

    def act_by(g, key, cell):
        tree = site.shape(key)
        tcolors, tops = cell
        kappa = dict(zip(tree.edges, tcolors))
        new_ops = []
        for j, (target, sources) in enumerate(tree.vertices()):
            Cv = CProfile(tuple(kappa[s] for s in sources), kappa[target])
            new_ops.append(O.g_apply(g, Cv, tops[j]))
        return (tuple(O.gact[(g, c)] for c in tcolors), tuple(new_ops))

    return build_presheaf(site, O.group, cells_of, restrict_along, act_by)


def tau_strict(X: TruncatedGDSet) -> SetOperad:
    """Read an operad off a presheaf that composes uniquely.

    The colors are the cells on the edge shape, levels are corolla
    cells with the profile their edge restrictions spell, and
    composition restricts the unique two-vertex filler along the tall
    map.  Raises with a witness when some filler is missing or
    ambiguous.
    """
    site = X.site
    if site.max_vertices < 2:
        raise OperadError("the window must allow two-vertex shapes")
    flag, witness = is_strict_segal(X)
    if not flag:
        raise OperadError("the presheaf does not compose uniquely",
                          witness=witness)
    group = X.group

    stick_key = site.key_of(stick())
    colors = tuple(X.cells[stick_key])
    stick_edge = site.shape(stick_key).root

    def corolla_key(n):
        return site.key_of(corolla("r", tuple("a{}".format(i)
                                              for i in range(n))))

    def corolla_frame(n):
        shape = site.shape(corolla_key(n))
        return shape.root, tuple(shape.up[shape.root])

    def edge_restrict(n, edge, cell):
        key = corolla_key(n)
        idx = site.map_index(stick_key, key, {stick_edge: edge})
        return X.restrict(stick_key, key, idx, cell)

    levels = {}
    for n in range(site.max_arity + 1):
        root, leaves = corolla_frame(n)
        for cell in X.cells[corolla_key(n)]:
            out = edge_restrict(n, root, cell)
            ins = tuple(edge_restrict(n, leaf, cell) for leaf in leaves)
            levels.setdefault(CProfile(ins, out), []).append(cell)
    levels = {C: tuple(xs) for C, xs in levels.items()}

    def sym_rule(C, x, p):
        n = C.arity
        key = corolla_key(n)
        root, leaves = corolla_frame(n)
        assign = {root: root}
        for i in range(n):
            assign[leaves[i]] = leaves[p[i]]
        return X.restrict(key, key, site.map_index(key, key, assign), x)

    def g_rule(g, C, x):
        return X.act(g, corolla_key(C.arity), x)

    units = {}
    c1_key = corolla_key(1)
    degen = None
    for tkey, idx in site.degeneracy_steps(c1_key):
        if tkey == stick_key:
            degen = idx
            break
    if degen is None:
        raise OperadError("no collapse onto the edge shape")
    for c in colors:
        units[c] = X.restrict(c1_key, stick_key, degen, c)

    def graft_once(C, x, i, E, y):
        """The composite of x with y in slot i and units elsewhere."""
        k, m = C.arity, E.arity
        up = {"r": tuple("a{}".format(j) for j in range(k)),
              "a{}".format(i): tuple("b{}".format(t) for t in range(m))}
        two_key, names = site.canon(PlanarTree("r", up))
        ck, cm = corolla_key(k), corolla_key(m)
        kroot, kleaves = corolla_frame(k)
        mroot, mleaves = corolla_frame(m)
        low = {kroot: names["r"]}
        for j in range(k):
            low[kleaves[j]] = names["a{}".format(j)]
        high = {mroot: names["a{}".format(i)]}
        for t in range(m):
            high[mleaves[t]] = names["b{}".format(t)]
        low_idx = site.map_index(ck, two_key, low)
        high_idx = site.map_index(cm, two_key, high)
        found = None
        for cell in X.cells[two_key]:
            if X.restrict(ck, two_key, low_idx, cell) == x and \
                    X.restrict(cm, two_key, high_idx, cell) == y:
                found = cell
                break
        if found is None:
            raise OperadError("no filler for a two-vertex configuration",
                              witness=(C, x, i, E, y))
        total = k + m - 1
        troot, tleaves = corolla_frame(total)
        tall = {troot: names["r"]}
        pos = 0
        for j in range(k):
            if j == i:
                for t in range(m):
                    tall[tleaves[pos]] = names["b{}".format(t)]
                    pos += 1
            else:
                tall[tleaves[pos]] = names["a{}".format(j)]
                pos += 1
        tall_idx = site.map_index(corolla_key(total), two_key, tall)
        composite = X.restrict(corolla_key(total), two_key, tall_idx, found)
        new_inputs = C.inputs[:i] + E.inputs + C.inputs[i + 1:]
        return CProfile(new_inputs, C.output), composite

    def gamma_rule(C, x, parts):
        # graft the lowest arities first so intermediates stay in bounds
        order = sorted(range(len(parts)), key=lambda i: parts[i][0].arity)
        cur_C, cur_x = C, x
        position = {i: i for i in range(C.arity)}
        for i in order:
            E, y = parts[i]
            at = position[i]
            cur_C, cur_x = graft_once(cur_C, cur_x, at, E, y)
            for j in position:
                if position[j] > at:
                    position[j] += E.arity - 1
        return cur_x

    gact = {(g, c): X.act(g, stick_key, c)
            for g in group.elements for c in colors}
    probe = SetOperad(colors, group, gact, site.max_arity, levels, {}, {},
                      units, {})
    gamma = {}
    for C in probe.levels:
        for x in probe.level(C):
            for parts in _composable_parts(probe, C, site.max_arity):
                gamma[(C, x, parts)] = gamma_rule(C, x, parts)
    sym, gmaps = _materialize_tables(levels, group, gact, sym_rule, g_rule)
    return SetOperad(colors, group, gact, site.max_arity, levels, sym,
                     gmaps, units, gamma)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _enc(value):
    if isinstance(value, tuple):
        return {"t": [_enc(v) for v in value]}
    if isinstance(value, CProfile):
        return {"profile": {"inputs": [_enc(c) for c in value.inputs],
                            "output": _enc(value.output)}}
    if isinstance(value, frozenset):
        return {"fs": sorted((_enc(v) for v in value), key=repr)}
    if value is None or isinstance(value, (str, int, bool)):
        return value
    raise OperadError("value is not serializable", witness=value)


def _dec(value):
    if isinstance(value, dict):
        if "t" in value:
            return tuple(_dec(v) for v in value["t"])
        if "profile" in value:
            return CProfile(tuple(_dec(c)
                                  for c in value["profile"]["inputs"]),
                            _dec(value["profile"]["output"]))
        if "fs" in value:
            return frozenset(_dec(v) for v in value["fs"])
    return value


def operad_to_json(O: SetOperad) -> dict:
    """A JSON-ready dict with explicit levels, units, and composition.

    Beyond the minimal colors, gaction, levels, units, and gamma keys,
    the permutation and group tables are stored so that loading does
    not have to rediscover the actions.
    """
    levels = []
    for C in O.profiles():
        levels.append({"inputs": [_enc(c) for c in C.inputs],
                       "output": _enc(C.output),
                       "elements": [_enc(x) for x in O.level(C)]})
    sym = []
    for (C, p), table in sorted(O.seq.sym.items(), key=repr):
        sym.append({"inputs": [_enc(c) for c in C.inputs],
                    "output": _enc(C.output), "perm": list(p),
                    "table": [[_enc(x), _enc(y)]
                              for x, y in sorted(table.items(), key=repr)]})
    gmaps = []
    for (C, g), table in sorted(O.seq.gmaps.items(), key=repr):
        gmaps.append({"inputs": [_enc(c) for c in C.inputs],
                      "output": _enc(C.output), "g": _enc(g),
                      "table": [[_enc(x), _enc(y)]
                                for x, y in sorted(table.items(), key=repr)]})
    gamma = []
    for (C, x, parts), z in sorted(O.gamma.items(), key=repr):
        gamma.append({
            "head": {"inputs": [_enc(c) for c in C.inputs],
                     "output": _enc(C.output), "element": _enc(x)},
            "parts": [{"inputs": [_enc(c) for c in E.inputs],
                       "output": _enc(E.output), "element": _enc(y)}
                      for E, y in parts],
            "result": _enc(z)})
    return {
        "colors": [_enc(c) for c in O.colors],
        "group": group_to_json(O.group),
        "gaction": [[_enc(g), _enc(c), _enc(gc)]
                    for (g, c), gc in sorted(O.gact.items(), key=repr)],
        "arity_bound": O.arity_bound,
        "levels": levels,
        "units": [[_enc(c), _enc(u)]
                  for c, u in sorted(O.units.items(), key=repr)],
        "sym": sym,
        "gmaps": gmaps,
        "gamma": gamma,
    }


def operad_from_json(data: Mapping) -> SetOperad:
    group = group_from_json(data["group"])
    colors = tuple(_dec(c) for c in data["colors"])
    gact = {(_dec(g), _dec(c)): _dec(gc) for g, c, gc in data["gaction"]}
    levels = {}
    for entry in data["levels"]:
        C = CProfile(tuple(_dec(c) for c in entry["inputs"]),
                     _dec(entry["output"]))
        levels[C] = tuple(_dec(x) for x in entry["elements"])
    sym = {}
    for entry in data["sym"]:
        C = CProfile(tuple(_dec(c) for c in entry["inputs"]),
                     _dec(entry["output"]))
        sym[(C, tuple(entry["perm"]))] = {_dec(x): _dec(y)
                                          for x, y in entry["table"]}
    gmaps = {}
    for entry in data["gmaps"]:
        C = CProfile(tuple(_dec(c) for c in entry["inputs"]),
                     _dec(entry["output"]))
        gmaps[(C, _dec(entry["g"]))] = {_dec(x): _dec(y)
                                        for x, y in entry["table"]}
    units = {_dec(c): _dec(u) for c, u in data["units"]}
    gamma = {}
    for entry in data["gamma"]:
        C = CProfile(tuple(_dec(c) for c in entry["head"]["inputs"]),
                     _dec(entry["head"]["output"]))
        x = _dec(entry["head"]["element"])
        parts = tuple((CProfile(tuple(_dec(c) for c in part["inputs"]),
                                _dec(part["output"])),
                       _dec(part["element"]))
                      for part in entry["parts"])
        gamma[(C, x, parts)] = _dec(entry["result"])
    return SetOperad(colors, group, gact, data["arity_bound"], levels,
                     sym, gmaps, units, gamma)
