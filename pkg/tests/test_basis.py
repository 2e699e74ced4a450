import numpy as np
import pytest

from greyboxid import BasisFunctionSet, Monomial, eval_basis, eval_basis_derivative


@pytest.fixture
def quad_cubic():
    return BasisFunctionSet([[(0, 0, 2)], [(0, 0, 3)]])


def test_monomial_evaluation(quad_cubic):
    assert np.allclose(eval_basis(quad_cubic, [2.0]), [4.0, 8.0])


def test_zero_input(quad_cubic):
    assert np.array_equal(eval_basis(quad_cubic, [0.0]), [0.0, 0.0])


def test_odd_monomial_sign():
    basis = BasisFunctionSet([[(0, 0, 3)]])
    assert np.allclose(eval_basis(basis, [-1.5]), [-3.375])


def test_derivative_values(quad_cubic):
    der = eval_basis_derivative(quad_cubic, [2.0])
    assert np.allclose(der, [[4.0], [12.0]])
    assert np.array_equal(eval_basis_derivative(BasisFunctionSet([[(0, 0, 2)]]), [0.0]),
                          [[0.0]])


def test_derivative_matches_finite_differences(quad_cubic):
    # central-difference oracle over random samples in [-10, 10]
    rng = np.random.default_rng(0)
    basis = BasisFunctionSet([[(0, 0, 2)], [(0, 0, 3)], [(0, 0, 1), (1, 0, 2)]])
    for _ in range(50):
        y = rng.uniform(-10, 10, size=2)
        der = eval_basis_derivative(basis, y)
        h = 1e-5
        for j in range(2):
            yp, ym = y.copy(), y.copy()
            yp[j] += h
            ym[j] -= h
            fd = (eval_basis(basis, yp) - eval_basis(basis, ym)) / (2 * h)
            scale = np.maximum(np.abs(fd), 1e-3)
            assert np.all(np.abs(der[:, j] - fd) / scale < 1e-6)


def test_velocity_factors():
    basis = BasisFunctionSet([[(0, 1, 2)]])
    assert basis.any_velocity
    assert np.allclose(eval_basis(basis, [1.0], [3.0]), [9.0])
    # derivative w.r.t. y treats the velocity signal as independent
    assert np.array_equal(eval_basis_derivative(basis, [1.0], [3.0]), [[0.0]])


def test_missing_velocity_rejected():
    basis = BasisFunctionSet([[(0, 1, 2)]])
    with pytest.raises(ValueError, match="y_dot"):
        eval_basis(basis, [1.0])


def test_channel_out_of_range():
    basis = BasisFunctionSet([[(3, 0, 2)]])
    with pytest.raises(ValueError, match="channel"):
        eval_basis(basis, [1.0, 2.0])


def test_degree_one_rejected():
    with pytest.raises(ValueError, match="degree"):
        BasisFunctionSet([[(0, 0, 1)]])


def test_bad_factors_rejected():
    with pytest.raises(ValueError):
        Monomial([(0, 2, 2)])
    with pytest.raises(ValueError):
        Monomial([(0, 0, 0)])
    with pytest.raises(ValueError):
        Monomial([])


def test_vectorized_evaluation(quad_cubic):
    y = np.linspace(-1, 1, 7)[None, :]
    g = eval_basis(quad_cubic, y)
    assert g.shape == (2, 7)
    assert np.allclose(g[0], y[0] ** 2)
    der = eval_basis_derivative(quad_cubic, y)
    assert der.shape == (2, 1, 7)
    assert np.allclose(der[1, 0], 3 * y[0] ** 2)


def test_text_round_trip(quad_cubic):
    text = quad_cubic.to_text()
    back = BasisFunctionSet.from_text(text)
    assert back == quad_cubic
    mono = Monomial([(0, 0, 1), (1, 1, 3)])
    assert Monomial.from_text(mono.to_text()) == mono
    with pytest.raises(ValueError):
        Monomial.from_text("(1,2)")
