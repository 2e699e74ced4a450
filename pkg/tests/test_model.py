import numpy as np
import pytest

from greyboxid import (
    BasisFunctionSet,
    GreyBoxModel,
    NumericalError,
    benchmark,
    extended_frf,
    modal_parameters,
    pack_parameters,
    unpack_parameters,
)
from helpers import random_stable_model

from properties import (
    check_frf_similarity_invariance,
    check_pack_roundtrip,
)


def silverbox_dims_model():
    basis = BasisFunctionSet([[(0, 0, 2)], [(0, 0, 3)]])
    rng = np.random.default_rng(1)
    return GreyBoxModel(
        rng.standard_normal((2, 2)) * 0.3, rng.standard_normal((2, 1)),
        rng.standard_normal((1, 2)), rng.standard_normal((1, 1)),
        rng.standard_normal((2, 2)), rng.standard_normal((1, 2)),
        basis, 1.0 / 2441.0,
    )


def test_parameter_count_silverbox_dims():
    # n=2, m=1, p=1, s=2 gives 4 + 6 + 2 + 3 parameters
    theta = pack_parameters(silverbox_dims_model())
    assert len(theta) == 15


def test_identity_slots():
    basis = BasisFunctionSet([])
    model = GreyBoxModel(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)),
                         np.zeros((1, 1)), np.zeros((2, 0)), np.zeros((1, 0)),
                         basis, 0.1)
    theta = pack_parameters(model)
    expected = np.zeros(len(theta))
    expected[0] = expected[3] = 1.0  # column-stacked A diagonal
    assert np.array_equal(theta.values, expected)
    assert theta.layout.owner(0) == ("A", 0, 0)
    assert theta.layout.owner(3) == ("A", 1, 1)
    assert theta.layout.owner(4)[0] == "bbar"


def test_round_trip_exact():
    check_pack_roundtrip()


def test_unpack_length_mismatch():
    model = silverbox_dims_model()
    with pytest.raises(ValueError, match="length"):
        unpack_parameters(np.zeros(14), model)


def test_concatenation_views():
    model = silverbox_dims_model()
    assert np.array_equal(model.bbar, np.hstack([model.B, model.E]))
    assert np.array_equal(model.dbar, np.hstack([model.D, model.F]))
    assert model.bbar.shape == (2, 3)
    assert model.dbar.shape == (1, 3)


def test_dimension_validation():
    basis = BasisFunctionSet([[(0, 0, 2)]])
    with pytest.raises(ValueError):
        GreyBoxModel(np.eye(2), np.zeros((3, 1)), np.zeros((1, 2)),
                     np.zeros((1, 1)), np.zeros((2, 1)), np.zeros((1, 1)), basis, 0.1)
    with pytest.raises(ValueError, match="outputs"):
        # basis references channel 1 but the model has one output
        GreyBoxModel(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), np.zeros((1, 1)),
                     np.zeros((2, 1)), np.zeros((1, 1)),
                     BasisFunctionSet([[(1, 0, 2)]]), 0.1)


def test_frf_pure_feedthrough():
    basis = BasisFunctionSet([])
    model = GreyBoxModel(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)),
                         np.eye(2), np.zeros((2, 0)), np.zeros((2, 0)), basis, 0.1)
    he = extended_frf(model, np.arange(10), 64)
    assert np.allclose(he, np.broadcast_to(np.eye(2), (10, 2, 2)))


def test_frf_scalar_dc():
    basis = BasisFunctionSet([])
    model = GreyBoxModel([[0.5]], [[1.0]], [[1.0]], [[0.0]],
                         np.zeros((1, 0)), np.zeros((1, 0)), basis, 0.1)
    he = extended_frf(model, [0], 64)
    assert np.allclose(he[0, 0, 0], 2.0)


def test_frf_peak_near_benchmark_resonance():
    # peak-search oracle on a dense grid
    model = benchmark.benchmark_truth_model()
    n_grid = 1 << 16
    lines = np.arange(1, int(120 * n_grid / model.fs))
    he = extended_frf(model, lines, n_grid)
    freqs = lines * model.fs / n_grid
    peak = freqs[np.argmax(np.abs(he[:, 0, 0]))]
    bin_width = model.fs / n_grid
    # damped SDOF peaks at f_n sqrt(1 - 2 zeta^2)
    expected = benchmark.NATURAL_FREQUENCY_HZ * np.sqrt(
        1 - 2 * benchmark.DAMPING_RATIO**2)
    assert abs(peak - expected) <= 2 * bin_width


def test_frf_singular_line_reported():
    basis = BasisFunctionSet([])
    model = GreyBoxModel([[1.0]], [[1.0]], [[1.0]], [[0.0]],
                         np.zeros((1, 0)), np.zeros((1, 0)), basis, 0.1)
    with pytest.raises(NumericalError, match="line 0"):
        extended_frf(model, [0, 1], 64)


def test_frf_similarity_invariance():
    check_frf_similarity_invariance()


def test_modal_benchmark_round_trip():
    model = benchmark.benchmark_truth_model()
    modal = modal_parameters(model)
    assert len(modal) == 1
    assert abs(modal.frequencies[0] - benchmark.NATURAL_FREQUENCY_HZ) \
        <= 1e-10 * benchmark.NATURAL_FREQUENCY_HZ
    assert abs(modal.damping_ratios[0] - benchmark.DAMPING_RATIO) \
        <= 1e-10 * benchmark.DAMPING_RATIO


def test_modal_pure_decay_reports_no_oscillatory_mode():
    basis = BasisFunctionSet([])
    model = GreyBoxModel(np.eye(2) * np.exp(-0.3), np.zeros((2, 1)),
                         np.zeros((1, 2)), np.zeros((1, 1)),
                         np.zeros((2, 0)), np.zeros((1, 0)), basis, 0.01)
    modal = modal_parameters(model)
    assert len(modal) == 0
    assert len(modal.real_poles) == 2
    assert np.allclose(modal.real_poles, -0.3 / 0.01)


def test_modal_conjugate_pairs():
    rng = np.random.default_rng(4)
    for _ in range(10):
        A = rng.standard_normal((2, 2))
        A *= 0.9 / np.abs(np.linalg.eigvals(A)).max()
        lam = np.linalg.eigvals(A)
        modal = modal_parameters(A, 0.01)
        if np.iscomplexobj(lam) and np.any(np.abs(lam.imag) > 1e-12):
            assert len(modal) == 1  # one pole per conjugate pair
            assert modal.poles[0].imag > 0


def test_modal_zero_eigenvalue_rejected():
    with pytest.raises(NumericalError, match="zero eigenvalue"):
        modal_parameters(np.diag([0.0, 0.5]), 0.01)


def test_modal_negative_real_flagged():
    modal = modal_parameters(np.diag([-0.5, 0.5]), 0.01)
    assert any("negative real" in note for note in modal.notes)


def test_modal_invariance_under_similarity():
    model = benchmark.benchmark_truth_model()
    T = np.array([[2.0, 0.3], [-0.4, 1.1]])
    other = model.similarity_transform(T)
    a, b = modal_parameters(model), modal_parameters(other)
    assert np.allclose(a.frequencies, b.frequencies, rtol=1e-9)
    assert np.allclose(a.damping_ratios, b.damping_ratios, rtol=1e-9)


def test_matrices_read_only():
    model = silverbox_dims_model()
    with pytest.raises(ValueError):
        model.A[0, 0] = 5.0
