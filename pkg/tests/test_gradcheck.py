import numpy as np
import pytest

from slide_attn import NumericError
from slide_attn.gradcheck import GradReport, check_gradients, compare_gradients, numeric_gradient
from slide_attn.verify import GRADIENT_CASES, run_gradient_case


def test_numeric_gradient_of_sum(rng):
    x = rng.standard_normal((3, 4))
    np.testing.assert_allclose(numeric_gradient(lambda a: a.sum(), x), np.ones((3, 4)), atol=1e-9)


def test_numeric_gradient_of_half_square(rng):
    x = rng.standard_normal(7)
    # central differences are exact for quadratics up to rounding
    np.testing.assert_allclose(numeric_gradient(lambda a: (a**2).sum() / 2, x), x, atol=1e-9)


def test_numeric_gradient_subset_leaves_nan(rng):
    g = numeric_gradient(lambda a: a.sum(), np.zeros(5), indices=[1, 3])
    assert np.isnan(g[[0, 2, 4]]).all()
    np.testing.assert_allclose(g[[1, 3]], 1.0)


def test_numeric_gradient_non_finite():
    with pytest.raises(NumericError), np.errstate(invalid="ignore", divide="ignore"):
        numeric_gradient(lambda a: np.log(a).sum(), np.array([0.0]))


def test_numeric_gradient_does_not_mutate_input(rng):
    x = rng.standard_normal(4)
    before = x.copy()
    numeric_gradient(lambda a: (a**3).sum(), x)
    np.testing.assert_array_equal(x, before)


def test_compare_tiny_gradients_pass_by_floor():
    r = compare_gradients("p", np.array([1e-9, 1.0]), np.array([-5e-9, 1.0]))
    assert r.passed and r.max_rel_error == 0.0


def test_zero_backward_fails_negative_control(rng):
    x = rng.standard_normal(4)
    reports = check_gradients(lambda d: float((d["x"] ** 2).sum()), lambda d: {"x": np.zeros(4)}, {"x": x})
    assert len(reports) == 1 and not reports[0].passed


def test_missing_gradient_counts_as_zero(rng):
    x = rng.standard_normal(3)
    c = rng.standard_normal(3)
    reports = check_gradients(
        lambda d: float((d["x"] * d["c"]).sum()),
        lambda d: {"x": d["c"]},  # "c" left out
        {"x": x, "c": c},
    )
    by_name = {r.parameter_name: r for r in reports}
    assert by_name["x"].passed and not by_name["c"].passed


def test_report_serialises(rng):
    r = check_gradients(lambda d: float(d["x"].sum()), lambda d: {"x": np.ones(2)}, {"x": np.zeros(2)})[0]
    d = r.to_dict()
    assert list(d) == ["parameter_name", "max_rel_error", "max_abs_error", "num_elements_checked", "tolerance", "passed"]
    assert GradReport(**d) == r


def test_subsampling_is_seeded(rng):
    x = rng.standard_normal(50)
    args = (lambda d: float((d["x"] ** 2).sum()), lambda d: {"x": 2 * d["x"]}, {"x": x})
    a = check_gradients(*args, max_elements=10, seed=3)
    b = check_gradients(*args, max_elements=10, seed=3)
    assert a == b and a[0].num_elements_checked == 10 and a[0].passed


@pytest.mark.parametrize("name", sorted(GRADIENT_CASES))
@pytest.mark.parametrize("seed", range(3))
def test_analytic_backward_matches_numeric(name, seed):
    reports = run_gradient_case(name, seed)
    assert reports and all(r.passed for r in reports), reports


@pytest.mark.parametrize("name", sorted(GRADIENT_CASES))
def test_one_percent_perturbation_is_detected(name):
    assert not all(r.passed for r in run_gradient_case(name, 0, perturb=0.01))


def test_deformed_fixed_bank_gets_no_gradient():
    fwd, bwd, params = GRADIENT_CASES["deformed_two_path"](np.random.default_rng(0))
    assert set(bwd(params)) == {"f", "learnable"}
