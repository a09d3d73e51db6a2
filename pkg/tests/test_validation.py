from dataclasses import replace

import numpy as np
import pytest

from vfcontrol import dynamics
from vfcontrol.validation import (
    PropertyResult, coriolis_bound_property, energy_property, filter_response_property,
    inertia_property, validate_model,
)

NAMES = ["inertia_symmetry", "inertia_positive", "inertia_bounds", "skew_symmetry",
         "coriolis_bound", "coriolis_exchange", "gravity_gradient", "energy_balance",
         "filter_frequency_response"]


@pytest.fixture(scope="module")
def phantom_report():
    return validate_model(dynamics.Phantom3(), samples=10_000, seed=0)


def test_phantom_passes_every_property(phantom_report):
    assert [r.name for r in phantom_report.results] == NAMES
    assert phantom_report.passed, phantom_report.render()


@pytest.mark.parametrize("model", [dynamics.Planar2(), dynamics.PointMass1()], ids=str)
def test_other_models_pass(model):
    report = validate_model(model, samples=10_000, seed=0)
    assert report.passed, report.render()


def test_report_is_deterministic(phantom_report):
    again = validate_model(dynamics.Phantom3(), samples=10_000, seed=0)
    assert again.render() == phantom_report.render()
    assert validate_model(dynamics.Phantom3(), samples=500, seed=1).render() != \
        phantom_report.render()


def test_render_lists_each_property(phantom_report):
    text = phantom_report.render()
    for name in NAMES:
        assert name in text
    assert text.splitlines()[-1] == "overall: PASS"
    assert phantom_report.result("skew_symmetry").worst < 1e-6
    with pytest.raises(KeyError):
        phantom_report.result("nope")


def test_suites_flag_wrong_constants():
    model = dynamics.Phantom3()
    c = dynamics.model_constants(model)
    rng = np.random.default_rng(0)
    Q = rng.uniform(-np.pi, np.pi, (2000, 3))
    X = rng.normal(size=(2000, 3))
    narrowed = replace(c, lambda_max_H=0.5 * c.lambda_max_H)
    bounds = {r.name: r for r in inertia_property(model, Q, X, narrowed)}
    assert not bounds["inertia_bounds"].passed
    assert bounds["inertia_symmetry"].passed
    # the sampled k_c is conservative by a factor of about five
    assert not coriolis_bound_property(model, Q, X, 0.1 * c.k_c).passed
    assert coriolis_bound_property(model, Q, X, c.k_c).passed


def test_energy_balance_and_its_failure_mode():
    res = energy_property(dynamics.Planar2(), seed=3)
    assert res.passed and res.worst < 1e-6
    # the residual is integration error, so it grows like dt^4 and eventually fails
    fine = energy_property(dynamics.Planar2(), seed=3, dt=0.01).worst
    coarse = energy_property(dynamics.Planar2(), seed=3, dt=0.05)
    assert fine < coarse.worst and not coarse.passed


def test_filter_response_across_poles():
    for b, l in ((1.0, 10.0), (5.0, 100.0), (50.0, 30.0)):
        assert filter_response_property(b=b, l=l, dt=1e-3).passed


def test_property_result_rejects_nan():
    assert not PropertyResult("x", float("nan"), 1.0).passed
    assert PropertyResult("x", 0.0, 0.0).passed
