import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalbias import linear as lin
from causalbias.closed_forms import ConfoundParams
from causalbias.errors import InputError, ParameterError
from causalbias.scm import (
    ScmSpec,
    axis_values,
    enumerate_joint,
    simulate,
    spec_graph,
    sweep,
    sweep_slices,
)
from causalbias.tables import cond_prob, from_samples

REFERENCE = dict(alpha=0.9, beta=0.1, gamma=0.8, delta=0.2, epsilon=0.4, tau=0.3, lam=0.5)


# -- simulate ----------------------------------------------------------------


def test_n_must_be_positive():
    with pytest.raises(ParameterError):
        ScmSpec("linear_confounding", {"beta": 0.5}, n=0)


@pytest.mark.parametrize("structure", ["linear_confounding", "binary_measurement", "binary_interaction",
                                       "linear_interaction", "linear_colliding"])
def test_simulation_is_deterministic(structure):
    if structure.startswith("binary"):
        spec = ScmSpec.randomize(structure, seed=5, n=1)
    else:
        spec = ScmSpec(structure, {}, n=1, seed=5)
    first, second = simulate(spec), simulate(spec)
    assert len(first) == 1
    assert first.equals(second)
    bigger = ScmSpec(spec.structure, spec.params, n=200, seed=5)
    assert simulate(bigger).equals(simulate(bigger))


def test_different_seeds_differ():
    a = simulate(ScmSpec("linear_confounding", {"beta": 0.5}, n=50, seed=1))
    b = simulate(ScmSpec("linear_confounding", {"beta": 0.5}, n=50, seed=2))
    assert not a.equals(b)


def test_linear_confounding_covariance():
    spec = ScmSpec("linear_confounding", {"alpha": 0.3, "beta": 0.5, "gamma": 0.5}, n=1_000_000, seed=42)
    c = lin.sample_moments(simulate(spec))
    se = np.sqrt((1.0 * 1.25 + 0.25) / spec.n)
    assert abs(c.cov("Z", "A") - 0.5) < 4 * se


def test_perfect_proxy_copies_latent():
    params = {"p_z1": 0.4, "p_a1_z1": 0.7, "p_a1_z0": 0.2, "p_t1_z1": 1.0, "p_t1_z0": 0.0}
    frame = simulate(ScmSpec("binary_measurement", params, n=5000, seed=3))
    assert (frame["T"] == frame["Z"]).all()
    assert set(np.unique(frame.to_numpy())) <= {0, 1}


def test_invalid_probability_rejected():
    with pytest.raises(ParameterError):
        ScmSpec("binary_measurement", {"p_z1": 1.4, "p_a1_z1": 0.7, "p_a1_z0": 0.2, "p_t1_z1": 1.0, "p_t1_z0": 0.0})
    with pytest.raises(ParameterError):
        ScmSpec("binary_interaction", {"p_a1": 0.5, "p_b1": 0.5})


def test_flat_conditional_keys():
    flat = {"p_a1": 0.5, "p_b1": 0.5, "p_y1_00": 0.1, "p_y1_01": 0.2, "p_y1_10": 0.3, "p_y1_11": 0.8}
    t = enumerate_joint(ScmSpec("binary_interaction", flat))
    assert cond_prob(t, {"Y": 1}, {"A": 0, "B": 1}) == pytest.approx(0.2)


# -- enumerate_joint ---------------------------------------------------------


def test_enumerate_reference_confounding():
    t = enumerate_joint(ScmSpec("binary_confounding", REFERENCE))
    assert cond_prob(t, {"Y": 1}, {"A": 1}) == pytest.approx(0.74, abs=1e-12)
    assert cond_prob(t, {"Y": 1}, {"A": 0}) == pytest.approx(0.34, abs=1e-12)
    np.testing.assert_allclose(t.marginal(["Z", "A", "Y"]).probs,
                               ConfoundParams(**REFERENCE).joint().probs, atol=1e-15)


def test_enumerate_rejects_degenerate_epsilon():
    with pytest.raises(ParameterError):
        ScmSpec("binary_confounding", {**REFERENCE, "epsilon": 0.0})


def test_enumerate_is_seed_free():
    a = enumerate_joint(ScmSpec("binary_confounding", REFERENCE, seed=1))
    b = enumerate_joint(ScmSpec("binary_confounding", REFERENCE, seed=99))
    np.testing.assert_array_equal(a.probs, b.probs)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["binary_measurement", "binary_confounding", "binary_interaction"]))
def test_enumeration_sums_to_one(seed, structure):
    t = enumerate_joint(ScmSpec.randomize(structure, seed=seed))
    assert t.flat().sum() == pytest.approx(1.0, abs=1e-12)


def test_thousand_random_specs_normalized():
    totals = [enumerate_joint(ScmSpec.randomize("binary_measurement", seed=s)).flat().sum() for s in range(1000)]
    assert np.max(np.abs(np.array(totals) - 1.0)) < 1e-12


def test_sampling_converges_to_enumeration():
    spec = ScmSpec.randomize("binary_measurement", seed=11, n=1_000_000)
    exact = enumerate_joint(spec)
    est = from_samples(simulate(spec), list(exact.variables))
    assert np.max(np.abs(est.flat() - exact.flat())) < 0.005


def test_error_mech_view():
    spec = ScmSpec("binary_measurement", {"p_z1": 0.4, "p_a1_z1": 0.7, "p_a1_z0": 0.2,
                                          "p_t1_z1": 0.9, "p_t1_z0": 0.15})
    assert spec.error_mech == pytest.approx((0.15, 0.1))
    with pytest.raises(ParameterError):
        ScmSpec("binary_confounding", REFERENCE).error_mech


def test_spec_graphs_declare_roles():
    g = spec_graph(ScmSpec("linear_colliding", {"alpha": 0.5, "eta": 0.3, "epsilon": 0.6}))
    assert g.node("W").conditioned
    g = spec_graph(ScmSpec.randomize("binary_measurement"))
    assert g.node("Z").latent


# -- sweep -------------------------------------------------------------------


def test_axis_values():
    v = axis_values(-1, 1, 0.1)
    assert len(v) == 21 and v[10] == 0.0 and v[-1] == 1.0
    with pytest.raises(InputError):
        axis_values(1, -1, 0.1)


def test_conf_grid_zero_axes():
    g = sweep("conf", {"beta": (-1, 1, 1), "gamma": (-1, 1, 1)})
    assert g.shape == (3, 3)
    assert np.all(g.cells[1, :] == 0) and np.all(g.cells[:, 1] == 0)


def test_conf_grid_standardized_corner():
    g = sweep("conf", {"beta": [1.0], "gamma": [1.0]}, standardized=True)
    assert g.cells[0, 0] == 1.0


def test_meas_grid_with_useless_proxy_equals_conf():
    axes = {"beta": (-1, 1, 0.25), "gamma": (-1, 1, 0.25)}
    for std in (False, True):
        conf = sweep("conf", axes, standardized=std)
        meas = sweep("meas", axes, fixed={"lam": 0.0}, standardized=std)
        np.testing.assert_allclose(meas.cells, conf.cells, atol=1e-15)


def test_sweep_records_singular_cells():
    g = sweep("meas", {"beta": [1.0], "lam": [1.0]}, standardized=True)
    assert np.isnan(g.cells[0, 0]) and g.singular
    assert "nan" in g.to_csv()


def test_sweep_rejects_unknown_parameters():
    with pytest.raises(InputError):
        sweep("conf", {"eta": (0, 1, 0.5)})
    with pytest.raises(InputError):
        sweep("bogus", {"beta": (0, 1, 0.5)})


def test_sweep_threads_do_not_change_output():
    axes = {"beta": (-1, 1, 0.1), "gamma": (-1, 1, 0.1)}
    assert sweep("sel", {"alpha": (-1, 1, 0.1), "epsilon": (-1, 1, 0.1)}).to_csv() == \
        sweep("sel", {"alpha": (-1, 1, 0.1), "epsilon": (-1, 1, 0.1)}, threads=4).to_csv()
    assert sweep("conf", axes).to_csv() == sweep("conf", axes, threads=8).to_csv()


def test_sweep_slices():
    frame = sweep_slices("sel", hold=-1.0)
    assert set(frame["parameter"]) == {"alpha", "eta", "epsilon"}
    eps0 = frame[(frame.parameter == "epsilon") & (frame.value == 0.0)]
    assert float(eps0.bias.iloc[0]) == 0.0
