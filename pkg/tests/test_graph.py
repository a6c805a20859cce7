import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalbias.errors import GraphParseError, StructureError
from causalbias.graph import (
    CausalGraph,
    classify_structure,
    d_separated,
    load_graph,
    open_paths,
    parse_graph,
    validate,
    wright_cov_matrix,
    wright_covariance,
    wright_variance,
)

from oracles import implied_cov

ROLES = {"A": "sensitive", "Y": "outcome"}


def simple_confounding(alpha=0.3, beta=0.5, gamma=0.5, **kw):
    return CausalGraph.from_edges([("Z", "A", beta), ("Z", "Y", gamma), ("A", "Y", alpha)], ROLES, **kw)


# -- validation and parsing --------------------------------------------------


def test_validate_accepts_confounding_triangle():
    g = CausalGraph.from_edges([("A", "Y"), ("Z", "A"), ("Z", "Y")], ROLES)
    assert validate(g) == []


def test_validate_flags_self_loop():
    g = CausalGraph.from_edges([("A", "A"), ("A", "Y")], ROLES)
    assert any(p.startswith("cycle") for p in validate(g))


def test_validate_flags_dangling_edge():
    g = parse_graph("node A role=sensitive\nnode Y role=outcome\nedge A -> Y\nedge Q -> Y\n")
    assert any("dangling edge" in p and "Q" in p for p in validate(g))


def test_validate_flags_mixed_coefficients_and_duplicate_outcomes():
    g = CausalGraph.from_edges([("A", "Y", 0.5), ("Z", "Y")], {"A": "sensitive", "Y": "outcome", "Z": "outcome"})
    problems = validate(g)
    assert any("mixed coefficient" in p for p in problems)
    assert any("multiple outcome" in p for p in problems)


def test_parse_reports_line_numbers():
    text = "node A role=sensitive\n\n# comment\nnode Y role=boss\n"
    with pytest.raises(GraphParseError, match="line 4"):
        parse_graph(text)
    with pytest.raises(GraphParseError, match="line 1"):
        parse_graph("edge A => Y\n")


def test_parse_round_trip(tmp_path):
    text = (
        "node Z role=covariate latent var=2.0  # hidden\n"
        "node A role=sensitive\nnode Y role=outcome\nnode W role=covariate conditioned\n"
        "edge Z -> A coef=0.5\nedge Z -> Y coef=-0.25\nedge A -> Y coef=1\nedge A -> W coef=0.1\nedge Y -> W coef=0.2\n"
    )
    g = parse_graph(text)
    assert g.node("Z").latent and g.node("Z").variance == 2.0 and g.node("W").conditioned
    assert parse_graph(g.to_text()) == g
    path = tmp_path / "g.txt"
    path.write_text(text)
    assert load_graph(path) == g


def test_load_graph_rejects_cycles(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("node A role=sensitive\nnode Y role=outcome\nedge A -> Y\nedge Y -> A\n")
    with pytest.raises(GraphParseError, match="cycle"):
        load_graph(path)


def test_topological_order_raises_on_cycle():
    with pytest.raises(StructureError):
        CausalGraph.from_edges([("A", "B"), ("B", "A")]).topological_order()


# -- d-separation ------------------------------------------------------------


def test_d_separation_examples():
    g = simple_confounding()
    assert not d_separated(g, "A", "Y")
    g2 = g.without_edge("A", "Y")
    assert d_separated(g2, "A", "Y", {"Z"})
    assert not d_separated(g2, "A", "Y")
    collider = CausalGraph.from_edges([("A", "W"), ("Y", "W")], ROLES)
    assert d_separated(collider, "A", "Y")
    assert not d_separated(collider, "A", "Y", {"W"})


def test_descendant_of_collider_opens_path():
    g = CausalGraph.from_edges([("A", "W"), ("Y", "W"), ("W", "S")])
    assert not d_separated(g, "A", "Y", {"S"})


def test_d_separation_argument_errors():
    g = simple_confounding()
    with pytest.raises(ValueError):
        d_separated(g, "A", "A")
    with pytest.raises(ValueError):
        d_separated(g, "A", "Y", {"A"})
    with pytest.raises(KeyError):
        d_separated(g, "A", "Q")


@st.composite
def random_dags(draw, max_nodes=7):
    n = draw(st.integers(3, max_nodes))
    names = [f"v{i}" for i in range(n)]
    pairs = [(names[i], names[j]) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    coefs = draw(st.lists(st.floats(-1, 1, allow_nan=False), min_size=len(pairs), max_size=len(pairs)))
    edges = [(s, d, c) for (s, d), m, c in zip(pairs, mask, coefs) if m]
    variances = dict(zip(names, draw(st.lists(st.floats(0.2, 3.0), min_size=n, max_size=n))))
    g = CausalGraph.from_edges(edges, {v: "covariate" for v in names}, variances=variances)
    return g


@settings(max_examples=150, deadline=None)
@given(random_dags(), st.data())
def test_d_separation_matches_networkx(g, data):
    x, y = data.draw(st.sampled_from(list(itertools.permutations(g.names, 2))))
    rest = [n for n in g.names if n not in (x, y)]
    z = set(data.draw(st.lists(st.sampled_from(rest), unique=True, max_size=len(rest))) if rest else [])
    ng = nx.DiGraph()
    ng.add_nodes_from(g.names)
    ng.add_edges_from((e.source, e.target) for e in g.edges)
    expected = nx.is_d_separator(ng, {x}, {y}, z)
    assert d_separated(g, x, y, z) == expected
    assert d_separated(g, y, x, z) == expected


# -- Wright's rule -----------------------------------------------------------


def test_wright_three_node_formula():
    # Z -> A (beta), Z -> Y (gamma), A -> Y (alpha), A -> M (delta), M -> Y (lam)
    a, b, c, d, l = 0.3, 0.4, -0.6, 0.7, 0.5
    g = CausalGraph.from_edges([("Z", "A", b), ("Z", "Y", c), ("A", "Y", a), ("A", "M", d), ("M", "Y", l)])
    var_a = wright_variance(g, "A")
    expected = var_a * a + wright_variance(g, "Z") * b * c + var_a * d * l
    assert wright_covariance(g, "Y", "A") == pytest.approx(expected, abs=1e-14)


def test_wright_confounding_value():
    g = simple_confounding()
    assert wright_variance(g, "A") == pytest.approx(1.25)
    assert wright_covariance(g, "Y", "A") == pytest.approx(0.625, abs=1e-14)
    assert wright_covariance(g, "Z", "A") == pytest.approx(0.5)


def test_wright_disconnected_is_zero():
    g = CausalGraph.from_edges([("A", "B", 0.5), ("C", "D", 0.5)])
    assert wright_covariance(g, "A", "D") == 0.0


def test_wright_requires_coefficients():
    g = CausalGraph.from_edges([("A", "B"), ("B", "C")])
    with pytest.raises(StructureError):
        wright_covariance(g, "A", "C")


def test_wright_node_limit():
    edges = [(f"v{i}", f"v{i + 1}", 0.5) for i in range(13)]
    with pytest.raises(StructureError):
        wright_variance(CausalGraph.from_edges(edges), "v13")


@settings(max_examples=100, deadline=None)
@given(random_dags())
def test_wright_matches_matrix_oracle(g):
    names, cov = wright_cov_matrix(g)
    coef = {(e.source, e.target): e.coefficient for e in g.edges}
    expected = implied_cov(list(names), coef, g.variances)
    np.testing.assert_allclose(cov, expected, atol=1e-10, rtol=1e-10)


@settings(max_examples=100, deadline=None)
@given(random_dags(), st.data())
def test_wright_zero_when_d_separated(g, data):
    x, y = data.draw(st.sampled_from(list(itertools.combinations(g.names, 2))))
    if d_separated(g, x, y):
        assert wright_covariance(g, x, y) == 0.0
    else:
        assert open_paths(g, x, y)


def test_wright_matches_simulation():
    rng = np.random.default_rng(5)
    n = 1_000_000
    z = rng.standard_normal(n)
    a = 0.5 * z + rng.standard_normal(n)
    y = 0.3 * a + 0.5 * z + rng.standard_normal(n)
    sample = np.cov(np.vstack([z, a, y]))
    names, model = wright_cov_matrix(simple_confounding(), ["Z", "A", "Y"])
    # Standard error of a sample covariance: sqrt((s_xx s_yy + s_xy^2) / n).
    se = np.sqrt((np.outer(np.diag(model), np.diag(model)) + model**2) / n)
    assert np.all(np.abs(sample - model) < 4 * se)


# -- structure classification ------------------------------------------------


def test_classify_confounder():
    tags = classify_structure(simple_confounding(), "A", "Y")
    assert tags.confounders == ("Z",) and not tags.colliders and not tags.proxies


def test_classify_collider_requires_conditioning():
    edges = [("A", "Y"), ("A", "W"), ("Y", "W")]
    assert classify_structure(CausalGraph.from_edges(edges, ROLES, conditioned=["W"]), "A", "Y").colliders == ("W",)
    assert classify_structure(CausalGraph.from_edges(edges, ROLES), "A", "Y").colliders == ()


def test_classify_proxy_of_latent_confounder():
    g = CausalGraph.from_edges([("Z", "A"), ("Z", "Y"), ("A", "Y"), ("Z", "T")],
                               {**ROLES, "T": "proxy"}, latent=["Z"])
    tags = classify_structure(g, "A", "Y")
    assert tags.latent_confounders == ("Z",)
    assert tags.confounders == ()
    assert tags.proxies == ("T",)


def test_classify_mediator_is_not_a_confounder_and_second_sensitive():
    g = CausalGraph.from_edges([("A", "M"), ("M", "Y"), ("B", "Y")], {**ROLES, "B": "sensitive"})
    tags = classify_structure(g, "A", "Y")
    assert tags.confounders == () and tags.second_sensitive == ("B",)


def test_classify_role_mismatch():
    with pytest.raises(StructureError):
        classify_structure(simple_confounding(), "Y", "A")
