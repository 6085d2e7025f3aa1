import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfqnn.devices import NeuronParams, pass_probability
from sfqnn.engine import EngineConfig, simulate, synapse_params
from sfqnn.netgraph import parse_netlist
from sfqnn.pulsecore import RATE_NORM_GHZ
from sfqnn.ratemodel import (ActivationModel, activation, activation_grad, characterization_csv,
                             characterize_neuron, fit_activation, merger_rate, merger_rate_grad,
                             propagate_rates, read_characterization)

DEFAULT = ActivationModel()

models = st.builds(ActivationModel, r_sat=st.floats(1.0, 200.0), r_thr=st.floats(-20.0, 60.0),
                   gain=st.floats(0.05, 5.0), beta=st.floats(0.05, 10.0))


def central(f, x, eps):
    return (f(x + eps) - f(x - eps)) / (2 * eps)


# -- activation ------------------------------------------------------------------

def test_activation_far_below_threshold_is_zero():
    assert activation(DEFAULT, DEFAULT.r_thr - 50.0) < 1e-3 * DEFAULT.r_sat
    assert activation(DEFAULT, -500.0) >= 0.0


def test_activation_saturates():
    assert activation(DEFAULT, 1e4) == pytest.approx(DEFAULT.r_sat, rel=1e-12)
    assert activation(DEFAULT, 200.0) == pytest.approx(DEFAULT.r_sat, rel=1e-3)


def test_activation_slope_near_threshold():
    x = DEFAULT.r_thr + 5.0
    fd = central(lambda r: activation(DEFAULT, r), x, 1e-4)
    assert activation_grad(DEFAULT, x) == pytest.approx(fd, rel=1e-5)


def test_activation_vectorized_and_callable():
    x = np.linspace(-10, 100, 7)
    assert np.allclose(activation(DEFAULT, x), [DEFAULT(v) for v in x])
    assert isinstance(DEFAULT(3.0), float)


@given(models, st.floats(-200.0, 400.0), st.floats(0.0, 50.0))
def test_activation_monotone_and_bounded(m, x, dx):
    a, b = activation(m, x), activation(m, x + dx)
    assert 0.0 <= a <= b <= m.r_sat
    assert activation_grad(m, x) >= 0.0


def test_activation_gradient_at_100_points():
    rng = np.random.default_rng(11)
    for _ in range(100):
        m = ActivationModel(rng.uniform(5, 100), rng.uniform(-10, 40), rng.uniform(0.2, 3), rng.uniform(0.3, 5))
        x = rng.uniform(m.r_thr - 3 * m.beta, m.r_thr + m.r_sat)
        fd = central(lambda r: activation(m, r), x, 1e-4)
        an = activation_grad(m, x)
        assert abs(an - fd) <= 1e-5 * max(abs(fd), 1e-3)


@pytest.mark.parametrize("kw", [dict(r_sat=0.0), dict(gain=-1.0), dict(beta=0.0)])
def test_activation_model_validation(kw):
    with pytest.raises(ValueError):
        ActivationModel(**kw)


@given(models)
def test_activation_text_round_trip(m):
    assert ActivationModel.from_text(m.to_text()) == m


def test_activation_file_round_trip(tmp_path):
    m = ActivationModel(30.0, 4.5, 1.25, 0.5)
    m.save(tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text() == "r_sat=30.0\nr_thr=4.5\ngain=1.25\nbeta=0.5\n"
    assert ActivationModel.load(tmp_path / "a.txt") == m


# -- merger ------------------------------------------------------------------------

def test_merger_rate_formula_example():
    assert merger_rate(30.0, [60.0]) == pytest.approx(60.0 / 2.8)
    assert round(merger_rate(30.0, [30.0, 30.0]), 1) == 21.4


def test_merger_rate_linear_regime_and_asymptote():
    assert merger_rate(30.0, [0.01]) == pytest.approx(0.01, rel=1e-3)
    assert merger_rate(30.0, [1e9]) == pytest.approx(1000.0 / 30.0, rel=1e-6)
    assert merger_rate(30.0, [1e9], "hold") == pytest.approx(1000.0 / 30.0, rel=1e-6)
    assert merger_rate(0.0, [12.0, 5.0], "hold") == pytest.approx(17.0)


@given(st.floats(0.0, 100.0), st.lists(st.floats(0.0, 500.0), min_size=1, max_size=5),
       st.sampled_from(["hold", "drop"]))
def test_merger_rate_bounds(t_dead, rates, mode):
    out = merger_rate(t_dead, rates, mode)
    assert 0.0 <= out <= sum(rates) + 1e-9
    if t_dead > 0:
        assert out <= 1000.0 / t_dead + 1e-9


def test_merger_rate_hold_exceeds_drop():
    for total in (5.0, 30.0, 60.0, 200.0):
        assert merger_rate(30.0, [total], "hold") > merger_rate(30.0, [total], "drop")


def test_merger_rate_unknown_mode():
    with pytest.raises(ValueError):
        merger_rate(1.0, [1.0], "other")


@pytest.mark.parametrize("mode", ["hold", "drop"])
def test_merger_gradient_at_100_points(mode):
    rng = np.random.default_rng(3)
    for _ in range(100):
        t_dead, total = rng.uniform(0.5, 40.0), rng.uniform(0.5, 150.0)
        fd = central(lambda r: merger_rate(t_dead, [r], mode), total, 1e-4)
        assert abs(merger_rate_grad(t_dead, total, mode) - fd) <= 1e-5 * abs(fd)


@pytest.mark.parametrize("mode, t_dead, rates", [
    ("drop", 30.0, (30.0, 30.0)),
    ("hold", 30.0, (30.0, 30.0)),
    ("hold", 10.0, (20.0, 15.0, 5.0)),
    ("drop", 10.0, (20.0, 15.0, 5.0)),
])
def test_merger_rate_matches_poisson_events(mode, t_dead, rates):
    lines = [f"node source s{k} rate={r}GHz process=poisson" for k, r in enumerate(rates)]
    lines += [f"node merger m t_dead={t_dead}ps mode={mode}", "node probe p", "edge m p"]
    lines += [f"edge s{k} m" for k in range(len(rates))]
    spec, diags = parse_netlist("\n".join(lines))
    assert diags == []
    got = simulate(spec, EngineConfig(duration=2e5, seed=4)).probe_rates["p"]
    # about 5000 output pulses: 3 sigma of counting noise is ~4%
    assert got == pytest.approx(merger_rate(t_dead, rates, mode), rel=0.04)


# -- network propagation ---------------------------------------------------------------

def net(text):
    spec, diags = parse_netlist(text)
    assert diags == []
    return spec


def test_propagate_single_synapse():
    spec = net("node source a rate=10GHz\nnode synapse s weight=0.5\nnode probe p\nedge a s\nedge s p\n")
    assert propagate_rates(spec, {}) == pytest.approx({"a": 10.0, "s": 5.0, "p": 5.0})


def test_propagate_zero_inputs():
    spec = net("node source a rate=0GHz\nnode source b rate=0GHz\nnode merger m t_dead=30ps\n"
               "node neuron n theta=1 tau_leak=40ps t_ref=5ps\nnode probe p\n"
               "edge a m\nedge b m\nedge m n\nedge n p\n")
    rates = propagate_rates(spec, {"n": ActivationModel(33.3, 5.0, 1.0, 0.1)})
    assert rates["p"] == pytest.approx(0.0, abs=1e-3)


def test_propagate_device_maps():
    spec = net("node source a rate=40GHz\nnode source b rate=25GHz\nnode source c rate=7GHz\n"
               "node synapse s i_b=110uA\nnode merger m t_dead=12ps mode=hold\n"
               "node neuron n theta=1 tau_leak=40ps t_ref=5ps\nnode splitter sp delay=5ps\n"
               "node probe p\nnode probe q\n"
               "edge a s\nedge s m\nedge b m\nedge m n.exc\nedge c n.inh\nedge n sp\n"
               "edge sp.0 p\nedge sp.1 q\n")
    model = ActivationModel(50.0, 3.0, 0.8, 1.5)
    rates = propagate_rates(spec, {"n": model})
    syn = 40.0 * pass_probability(synapse_params({"i_b": 110.0}))
    merged = merger_rate(12.0, [syn, 25.0], "hold")
    assert rates["s"] == pytest.approx(syn)
    assert rates["m"] == pytest.approx(merged)
    assert rates["n"] == pytest.approx(activation(model, merged - 7.0))
    assert rates["p"] == rates["q"] == rates["sp"] == rates["n"]


def test_propagate_requires_model_per_neuron():
    spec = net("node source a rate=1GHz\nnode neuron n theta=1 tau_leak=40ps t_ref=5ps\nedge a n\n")
    with pytest.raises(KeyError):
        propagate_rates(spec, {})


# -- characterization and fitting ------------------------------------------------------------

@pytest.fixture(scope="module")
def default_curve():
    grid = np.linspace(0.0, 2.0, 20) * RATE_NORM_GHZ
    return characterize_neuron(NeuronParams(), grid, EngineConfig(duration=10_000.0, seed=1))


def test_characterize_zero_input(default_curve):
    assert default_curve[0] == (0.0, 0.0)


def test_characterize_monotone(default_curve):
    out = [r for _, r in default_curve]
    quantum = 1000.0 / 8000.0
    assert all(b >= a - quantum for a, b in zip(out, out[1:]))


def test_characterize_saturates_at_inverse_refractory(default_curve):
    r_in, r_out = default_curve[-1]
    assert r_in == pytest.approx(2 * RATE_NORM_GHZ)
    assert r_out == pytest.approx(1000.0 / NeuronParams().t_ref, rel=0.05)


def test_characterize_rejects_negative_rates():
    with pytest.raises(ValueError):
        characterize_neuron(NeuronParams(), [-1.0, 2.0])


def test_fit_default_neuron(default_curve):
    fit = fit_activation(default_curve)
    assert fit.rms <= 0.05 * fit.model.r_sat
    r_in, r_out = default_curve[-1]
    assert fit.model(r_in) == pytest.approx(r_out, rel=0.05)


@pytest.mark.parametrize("truth", [
    ActivationModel(33.3, 12.0, 1.2, 2.0),
    ActivationModel(60.0, 5.0, 0.7, 1.0),
    ActivationModel(20.0, 30.0, 2.0, 3.0),
])
def test_fit_recovers_known_model(truth):
    x = np.linspace(0.0, 100.0, 41)
    fit = fit_activation(list(zip(x, activation(truth, x))))
    got = fit.model
    for key in ("r_sat", "r_thr", "gain", "beta"):
        assert getattr(got, key) == pytest.approx(getattr(truth, key), rel=0.02)
    assert fit.rms < 1e-6


def test_fit_with_fixed_saturation():
    truth = ActivationModel(33.3, 12.0, 1.2, 2.0)
    x = np.linspace(0.0, 100.0, 41)
    fit = fit_activation(list(zip(x, activation(truth, x))), r_sat=33.3)
    assert fit.model.r_sat == 33.3
    assert fit.model.r_thr == pytest.approx(12.0, rel=0.02)


def test_fit_errors():
    with pytest.raises(ValueError, match="at least 8"):
        fit_activation([(float(k), float(k)) for k in range(7)])
    with pytest.raises(ValueError, match="all-zero"):
        fit_activation([(float(k), 0.0) for k in range(10)])


def test_characterization_csv_round_trip(tmp_path):
    samples = [(0.0, 0.0), (16.65, 3.0), (33.3, 12.5)]
    text = characterization_csv(samples, tmp_path / "ghz.csv")
    assert text.splitlines()[0] == "r_in_ghz,r_out_ghz"
    assert read_characterization(tmp_path / "ghz.csv") == samples
    normed = characterization_csv(samples, tmp_path / "norm.csv", norm=33.3)
    assert normed.splitlines()[:3] == ["r_in_norm,r_out_norm", "0.0,0.0", f"0.5,{3.0 / 33.3!r}"]
    back = read_characterization(tmp_path / "norm.csv")
    assert np.allclose(back, samples)


def test_read_characterization_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_characterization(tmp_path / "x.csv")


def test_reconvergent_fanout_is_outside_the_independence_model():
    # One source reaches a merger twice over equal-delay paths: the copies
    # coincide and the buffer collapses them, while the rate model adds them.
    spec = net("node source a rate=20GHz\nnode splitter sp delay=5ps\nnode merger m t_dead=1ps\n"
               "node probe p\nedge a sp\nedge sp.0 m\nedge sp.1 m\nedge m p\n")
    model = propagate_rates(spec, {})["p"]
    event = simulate(spec).probe_rates["p"]
    assert model == pytest.approx(merger_rate(1.0, [20.0, 20.0], "hold"))
    assert event == pytest.approx(20.0, abs=0.2)
    assert math.isclose(event / model, 0.5, rel_tol=0.05)
