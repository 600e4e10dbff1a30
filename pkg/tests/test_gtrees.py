"""Equivariant trees: induction, orbits, map classes, orbital faces, WIS."""

import pytest

from dendrokit.groups import cyclic, dihedral8, graph_subgroups, subgroup_closure, subgroups
from dendrokit.gtrees import (
    GTree,
    GTreeMap,
    classify_gmap,
    complete_action,
    dedupe_gtrees,
    enumerate_gmaps,
    enumerate_gtrees,
    f_tree_family,
    factorize_gmap,
    g_stick,
    g_vertex_corolla,
    gtree_from_json,
    gtrees_isomorphic,
    identity_gmap,
    induce,
    is_g_corolla,
    orbital_faces,
    orbital_representation,
    trivial_action,
    wis_all,
    wis_check,
    wis_families,
    wis_from_families,
    wis_linear,
)
from dendrokit.treemaps import NotAMap, validate_map
from dendrokit.trees import Forest, PlanarTree, corolla, stick


# -- the dihedral example ----------------------------------------------------


def d8_tree():
    """Two mirrored 3-level components carried by the order-8 dihedral group."""
    G = dihedral8()
    H = subgroup_closure(G, {"pp", "s"})
    t_star = PlanarTree(
        "d",
        {
            "d": ("c", "sc"),
            "c": ("a", "b", "ppa"),
            "sc": ("sa", "sb", "ppsa"),
        },
    )
    swap_pp = {"a": "ppa", "ppa": "a", "sa": "ppsa", "ppsa": "sa"}
    swap_s = {
        "c": "sc",
        "sc": "c",
        "a": "sa",
        "sa": "a",
        "b": "sb",
        "sb": "b",
        "ppa": "ppsa",
        "ppsa": "ppa",
    }
    fill = lambda d: {**{e: e for e in t_star.edges}, **d}
    sub = subgroup_closure(G, {"pp", "s"})
    from dendrokit.groups import restricted_group

    phi = complete_action(
        restricted_group(G, sub), t_star.edges, {"pp": fill(swap_pp), "s": fill(swap_s)}
    )
    return G, H, t_star, phi, induce(G, H, t_star, phi)


def test_induce_dihedral_components_and_orbits():
    G, H, t_star, phi, T = d8_tree()
    assert len(T.components) == 2
    assert len(T.edges) == 18
    orbit_sizes = {orb[0]: len(orb) for orb in T.edge_orbits()}
    assert orbit_sizes == {"d": 2, "c": 4, "a": 8, "b": 4}
    assert len(T.isotropy("d")) == 4
    assert T.isotropy("d") == H
    assert len(T.isotropy("c")) == 2
    assert len(T.isotropy("b")) == 2
    assert len(T.isotropy("a")) == 1


def test_induce_recovers_subgroup_and_tree():
    G, H, t_star, phi, T = d8_tree()
    assert T.component_stabilizer(0) == H
    assert T.components[0] == t_star


def test_induce_trivial_and_free():
    G = cyclic(2)
    whole = g_stick(G, {"0", "1"})
    assert len(whole.components) == 1
    free = g_stick(G, {"0"})
    assert len(free.components) == 2
    assert len(free.edges) == 2


def test_induce_rejects_bad_phi():
    G = cyclic(2)
    tree = corolla("r", ("x", "y", "z"))
    cycle = {"r": "r", "x": "y", "y": "z", "z": "x"}
    with pytest.raises(ValueError, match="homomorphism"):
        induce(G, {"0", "1"}, tree, {"1": cycle})
    with pytest.raises(ValueError, match="subgroup"):
        induce(G, {"1"}, tree, {})
    broken = {"r": "x", "x": "r", "y": "y", "z": "z"}
    with pytest.raises(ValueError, match="automorphism"):
        induce(G, {"0", "1"}, tree, {"1": broken})


def test_gtree_validation_rejects_intransitive():
    G = cyclic(2)
    comps = (stick("u"), stick("v"))
    action = {"1": {"u": "u", "v": "v"}}
    with pytest.raises(ValueError, match="transitive"):
        GTree(G, Forest(comps), action)


def test_gtree_validation_rejects_structure_breaking():
    G = cyclic(2)
    comp = PlanarTree("r", {"r": ("x", "y")})
    action = {"1": {"r": "x", "x": "r", "y": "y"}}
    with pytest.raises(ValueError):
        GTree(G, Forest((comp,)), action)


def test_orbital_representation_dihedral():
    G, H, t_star, phi, T = d8_tree()
    R = orbital_representation(T)
    assert R.tree == PlanarTree("d", {"d": ("c",), "c": ("a", "b")})
    assert R.summary() == [("d", 2, 4), ("c", 4, 2), ("a", 8, 1), ("b", 4, 2)]
    assert R.multiplicity[("d", "c")] == 2
    assert R.multiplicity[("c", "a")] == 2
    assert R.multiplicity[("c", "b")] == 1


def test_orbital_representation_free_stick():
    G = cyclic(2)
    free = g_stick(G, {"0"})
    R = orbital_representation(free)
    assert R.tree == stick("e")
    assert R.orbit_size("e") == 2
    assert len(R.isotropy["e"]) == 1


def test_g_vertex_corolla_top_and_bottom():
    G, H, t_star, phi, T = d8_tree()
    top = g_vertex_corolla(T, "c")
    assert is_g_corolla(top)
    assert len(top.components) == 4
    leaf_orbits = orbital_representation(top)
    assert set(leaf_orbits.tree.up["c"]) == {"a", "b"}
    assert leaf_orbits.orbit_size("a") == 8
    assert leaf_orbits.orbit_size("b") == 4
    bottom = g_vertex_corolla(T, "d")
    assert len(bottom.components) == 2
    rb = orbital_representation(bottom)
    assert rb.tree.up["d"] == ("c",)
    assert len(rb.tree.leaves()) == 1
    with pytest.raises(ValueError, match="no vertex"):
        g_vertex_corolla(T, "a")


def test_is_g_corolla():
    G, H, t_star, phi, T = d8_tree()
    assert not is_g_corolla(T)
    assert not is_g_corolla(g_stick(cyclic(2), {"0"}))


# -- the order-two quotient example -------------------------------------------


def z2_quotient():
    G = cyclic(2)
    target = GTree(
        G,
        Forest((PlanarTree("c", {"c": ("a", "-a", "b")}),)),
        {"1": {"c": "c", "a": "-a", "-a": "a", "b": "b"}},
    )
    comp1 = PlanarTree("g", {"g": ("al", "be", "ab")})
    comp2 = PlanarTree("-g", {"-g": ("-al", "-be", "-ab")})
    swap = {}
    for e in ("g", "al", "be", "ab"):
        swap[e] = "-" + e
        swap["-" + e] = e
    source = GTree(G, Forest((comp1, comp2)), {"1": swap})
    f = GTreeMap(
        source,
        target,
        {
            "g": "c",
            "al": "a",
            "ab": "-a",
            "be": "b",
            "-g": "c",
            "-al": "-a",
            "-ab": "a",
            "-be": "b",
        },
    )
    return G, source, target, f


def test_quotient_example_classification():
    G, S, T, f = z2_quotient()
    cls = classify_gmap(f)
    assert cls.quotient
    assert not cls.is_sorted
    assert not cls.pullback
    assert all(c.iso for c in cls.components)


def test_identity_classification():
    G, S, T, f = z2_quotient()
    cls = classify_gmap(identity_gmap(T))
    assert cls.is_sorted and cls.quotient and cls.pullback


def test_gtreemap_rejects_non_equivariant():
    G, S, T, f = z2_quotient()
    bad = dict(f.assignment)
    bad["al"], bad["ab"] = bad["ab"], bad["al"]
    bad["-al"], bad["-ab"] = bad["-al"], bad["-ab"]
    with pytest.raises(NotAMap):
        GTreeMap(S, T, bad)


def test_factorize_quotient():
    G, S, T, f = z2_quotient()
    fac = factorize_gmap(f)
    assert fac.compose() == f
    for part in (fac.spd, fac.spi, fac.spo):
        assert all(c.iso for c in classify_gmap(part).components)
    assert classify_gmap(fac.pullback).pullback
    iso_cls = classify_gmap(fac.sorted_iso)
    assert iso_cls.is_sorted and all(c.iso for c in iso_cls.components)


def test_factorize_identity_trivial():
    G, S, T, f = z2_quotient()
    fac = factorize_gmap(identity_gmap(T))
    assert fac.compose() == identity_gmap(T)
    for part in fac.parts():
        assert all(c.iso for c in classify_gmap(part).components)


def test_factorize_sorted_inner_face():
    G = cyclic(2)
    amb = PlanarTree("r", {"r": ("m",), "m": ("x",)})
    T = induce(G, {"0", "1"}, amb, trivial_action({"0", "1"}, amb))
    src = PlanarTree("r", {"r": ("x",)})
    S = induce(G, {"0", "1"}, src, trivial_action({"0", "1"}, src))
    f = GTreeMap(S, T, {"r": "r", "x": "x"})
    fac = factorize_gmap(f)
    assert fac.compose() == f
    assert all(c.iso for c in classify_gmap(fac.sorted_iso).components)
    assert all(c.iso for c in classify_gmap(fac.spd).components)
    assert all(c.iso for c in classify_gmap(fac.spo).components)
    assert all(c.iso for c in classify_gmap(fac.pullback).components)
    spi_cls = classify_gmap(fac.spi)
    assert not any(c.iso for c in spi_cls.components)
    assert all(c.inner_face and c.planar for c in spi_cls.components)


def test_factorize_enumerated_endomaps():
    G = cyclic(2)
    pool = enumerate_gtrees(G, 2, 2)
    checked = 0
    for T in pool[:10]:
        for f in enumerate_gmaps(T, T):
            fac = factorize_gmap(f)
            assert fac.compose() == f
            for part, want in (
                (fac.spd, "degeneracy"),
                (fac.spi, "inner_face"),
                (fac.spo, "outer_face"),
            ):
                for c in classify_gmap(part).components:
                    assert getattr(c, want)
                    assert c.planar
            assert classify_gmap(fac.pullback).pullback
            checked += 1
    assert checked > 5


# -- orbital faces -------------------------------------------------------------


def test_orbital_faces_dihedral():
    G, H, t_star, phi, T = d8_tree()
    faces = orbital_faces(T)
    assert len(faces) == 8
    by_root_edges = {
        (face.face.source.root, frozenset(face.face.source.edges)): face for face in faces
    }
    no_d = by_root_edges[("c", frozenset({"c", "a", "b"}))]
    assert len(no_d.source.components) == 4
    assert not no_d.is_inner
    no_c = by_root_edges[("d", frozenset({"d", "a", "b"}))]
    assert no_c.is_inner
    assert no_c.removed_orbits == frozenset({"c"})
    assert len(no_c.source.components) == 2
    root_vertex = no_c.source.components[0]
    assert len(root_vertex.up["d"]) == 6


def test_orbital_faces_stick():
    faces = orbital_faces(g_stick(cyclic(2), {"0"}))
    assert len(faces) == 1
    assert len(faces[0].source.components) == 2


def test_orbital_face_sources_are_injective_and_match_quotient():
    G, H, t_star, phi, T = d8_tree()
    for face in orbital_faces(T):
        values = list(face.map.assignment.values())
        assert len(values) == len(set(values))
        assert orbital_representation(face.source).tree == face.face.source


# -- enumeration and isomorphism ------------------------------------------------


def test_enumerate_gtrees_z2():
    G = cyclic(2)
    pool = enumerate_gtrees(G, 2, 2)
    assert pool
    comps = {len(T.components) for T in pool}
    assert comps == {1, 2}
    # the bounded pool is already duplicate-free for this group
    assert len(dedupe_gtrees(pool)) == len(pool)
    relabeled = GTree(
        G, Forest((stick("u"), stick("v"))), {"1": {"u": "v", "v": "u"}}
    )
    assert len(dedupe_gtrees([g_stick(G, {"0"}), relabeled])) == 1


def test_gtrees_isomorphic_basic():
    G = cyclic(2)
    free = g_stick(G, {"0"})
    fixed = g_stick(G, {"0", "1"})
    assert gtrees_isomorphic(free, free)
    assert not gtrees_isomorphic(free, fixed)
    relabeled = GTree(
        G,
        Forest((stick("u"), stick("v"))),
        {"1": {"u": "v", "v": "u"}},
    )
    assert gtrees_isomorphic(free, relabeled)


def test_enumerate_gmaps_counts():
    G = cyclic(2)
    free = g_stick(G, {"0"})
    fixed = g_stick(G, {"0", "1"})
    # free stick maps to a fixed stick two ways (choice of seed image is forced,
    # but each group element translate gives the same map), fixed to free none
    assert len(enumerate_gmaps(free, fixed)) == 1
    assert len(enumerate_gmaps(fixed, free)) == 0
    assert len(enumerate_gmaps(free, free)) == 2


# -- weak indexing systems -------------------------------------------------------


def test_wis_check_maximal_and_linear():
    G = cyclic(2)
    assert wis_check(wis_all(G), 2, 2) == []
    assert wis_check(wis_linear(G), 2, 2) == []


def test_wis_missing_stick_violates_vertex_condition():
    G = cyclic(2)

    def pred(T):
        if all(not c.up for c in T.components) and len(T.components) == 2:
            return False
        return True

    from dendrokit.gtrees import WeakIndexingSystem

    W = WeakIndexingSystem(G, pred, "missing-free-stick")
    kinds = {kind for kind, _ in wis_check(W, 1, 2)}
    assert "vertex-condition" in kinds


def test_wis_families_frozen_counts():
    G = cyclic(2)
    assert len(wis_families(wis_all(G), 1)) == len(subgroups(G)) == 2
    assert len(wis_families(wis_linear(G), 1)) == 2
    assert len(wis_families(wis_all(G), 2)) == len(graph_subgroups(G, 2)) == 3
    assert wis_families(wis_linear(G), 2) == []


def test_f_tree_family_matches_arity_two():
    G = cyclic(2)
    two = corolla("r", ("x0", "x1"))
    assert len(f_tree_family(wis_all(G), two)) == 3
    assert f_tree_family(wis_linear(G), two) == []
    assert len(f_tree_family(wis_linear(G), stick("e"))) == 2


def test_families_closed_under_subgroup_and_conjugation():
    G = cyclic(2)
    from dendrokit.groups import direct_product, symmetric

    product = direct_product(G, symmetric(2))
    all_graphs = graph_subgroups(G, 2)
    for W in (wis_all(G), wis_linear(G)):
        fam = {gs.carrier for gs in wis_families(W, 2)}
        for carrier in fam:
            for other in all_graphs:
                if other.carrier <= carrier:
                    assert other.carrier in fam
            for p in product.elements:
                conj = frozenset(
                    product.mul(product.mul(p, x), product.inv(p)) for x in carrier
                )
                assert conj in fam


def test_wis_round_trip_through_families():
    G = cyclic(2)
    for W in (wis_all(G), wis_linear(G)):
        families = {n: {gs.carrier for gs in wis_families(W, n)} for n in (0, 1, 2)}
        W2 = wis_from_families(G, families)
        for T in enumerate_gtrees(G, 2, 2):
            assert W.contains(T) == W2.contains(T)


# -- serialization ----------------------------------------------------------------


def test_gtree_from_json_explicit():
    G = cyclic(2)
    T = gtree_from_json(
        G,
        {
            "forest": ["(r x y)"],
            "action": {"1": {"x": "y", "y": "x"}},
        },
    )
    assert len(T.components) == 1
    assert T.apply("1", "x") == "y"


def test_gtree_from_json_induce_shorthand():
    G = cyclic(2)
    T = gtree_from_json(G, {"H": ["0"], "tree": "(r x)", "phi": {}})
    assert len(T.components) == 2
    assert "1.r" in T.edges


def test_complete_action_detects_conflict():
    G = cyclic(2)
    edges = ("u", "v")
    with pytest.raises(ValueError, match="inconsistent|determine"):
        complete_action(G, edges, {"1": {"u": "u", "v": "v"}, "0": {"u": "v", "v": "u"}})
