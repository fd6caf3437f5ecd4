import numpy as np
import pytest

from funcbreak.basis import (
    Curve,
    CurveSeries,
    DegenerateFitError,
    FourierBasis,
    KernelMatrix,
    eigen_decompose,
    evaluate,
    fit_curve,
    inner_product,
    project_to_basis,
)


def fine_grid(num=10_001):
    return np.linspace(0.0, 1.0, num)


def test_constant_curve_projects_to_first_coefficient():
    basis = FourierBasis(7)
    series = project_to_basis(np.full((2, basis.grid.size), 3.0), basis)
    expected = np.zeros(7)
    expected[0] = 3.0
    np.testing.assert_allclose(series.data[0], expected, atol=1e-10)


def test_second_basis_function_projects_to_unit_vector():
    basis = FourierBasis(9)
    samples = np.sqrt(2.0) * np.sin(2.0 * np.pi * basis.grid)
    series = project_to_basis(np.vstack([samples, samples]), basis)
    expected = np.zeros(9)
    expected[1] = 1.0
    np.testing.assert_allclose(series.data[0], expected, atol=1e-8)


def test_projection_residuals_orthogonal_to_design():
    rng = np.random.default_rng(7)
    basis = FourierBasis(11)
    samples = rng.standard_normal((3, basis.grid.size))
    series = project_to_basis(samples, basis)
    design = basis.design_matrix(basis.grid)
    for i in range(3):
        residual = samples[i] - design @ series.data[i]
        assert np.max(np.abs(design.T @ residual)) <= 1e-8


def test_too_few_points_names_the_curve():
    basis = FourierBasis(21)
    samples = np.full((4, basis.grid.size), np.nan)
    samples[:3] = 1.0
    samples[3, :10] = 1.0  # 10 usable points < 21 basis functions
    with pytest.raises(DegenerateFitError, match="curve 3"):
        project_to_basis(samples, basis)


def test_fit_curve_on_irregular_points():
    basis = FourierBasis(5)
    t = np.linspace(0.03, 0.98, 41)
    coeffs_true = np.array([1.0, -0.5, 0.25, 0.0, 2.0])
    values = basis.design_matrix(t) @ coeffs_true
    np.testing.assert_allclose(fit_curve(basis, t, values), coeffs_true, atol=1e-9)


def test_inner_product_of_unit_vectors():
    basis = FourierBasis(6)
    e1 = Curve(np.eye(6)[0], basis)
    e2 = Curve(np.eye(6)[1], basis)
    assert inner_product(e1, e1) == 1.0
    assert inner_product(e1, e2) == 0.0


def test_inner_product_matches_quadrature():
    rng = np.random.default_rng(3)
    basis = FourierBasis(13)
    f = Curve(rng.standard_normal(13), basis)
    g = Curve(rng.standard_normal(13), basis)
    t = fine_grid()
    ft = basis.design_matrix(t) @ f.coeffs
    gt = basis.design_matrix(t) @ g.coeffs
    quad = np.trapezoid(ft * gt, t)
    assert abs(inner_product(f, g) - quad) <= 1e-6


def test_inner_product_rejects_basis_mismatch():
    f = Curve(np.ones(4), FourierBasis(4))
    g = Curve(np.ones(5), FourierBasis(5))
    with pytest.raises(ValueError, match="different bases"):
        inner_product(f, g)


def test_basis_is_orthonormal_under_quadrature():
    basis = FourierBasis(21)
    t = fine_grid()
    design = basis.design_matrix(t)
    gram = np.empty((21, 21))
    for i in range(21):
        for j in range(21):
            gram[i, j] = np.trapezoid(design[:, i] * design[:, j], t)
    np.testing.assert_allclose(gram, np.eye(21), atol=1e-4)


def test_projection_inverts_evaluation_on_the_span():
    rng = np.random.default_rng(5)
    basis = FourierBasis(8)
    coeffs = rng.standard_normal((4, 8))
    samples = coeffs @ basis.design_matrix(basis.grid).T
    series = project_to_basis(samples, basis)
    np.testing.assert_allclose(series.data, coeffs, atol=1e-8)


def test_evaluate_constant_and_zero_curves():
    basis = FourierBasis(4)
    e1 = Curve([1.0, 0.0, 0.0, 0.0], basis)
    zero = Curve(np.zeros(4), basis)
    t = [0.0, 0.25, 1.0]
    np.testing.assert_allclose(evaluate(e1, t), np.ones(3))
    np.testing.assert_allclose(evaluate(zero, t), np.zeros(3))


def test_evaluate_matches_closed_form_sine():
    basis = FourierBasis(5)
    v2 = Curve([0.0, 1.0, 0.0, 0.0, 0.0], basis)
    values = evaluate(v2, basis.grid)
    closed = np.sqrt(2.0) * np.sin(2.0 * np.pi * basis.grid)
    np.testing.assert_allclose(values, closed, atol=1e-10)


def test_evaluate_rejects_points_outside_unit_interval():
    c = Curve(np.ones(3), FourierBasis(3))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        evaluate(c, [0.5, 1.2])


def test_eigen_identity_and_diagonal():
    eye = eigen_decompose(KernelMatrix(np.eye(6)))
    np.testing.assert_allclose(eye.values, np.ones(6))

    diag = eigen_decompose(KernelMatrix(np.diag([4.0, 1.0, 0.0, 0.0])))
    np.testing.assert_allclose(diag.values, [4.0, 1.0, 0.0, 0.0])
    assert abs(diag.vectors[0, 0]) == pytest.approx(1.0)
    assert diag.vectors[0, 0] > 0  # sign fixed by largest-magnitude entry
    assert abs(diag.vectors[1, 1]) == pytest.approx(1.0)


def test_eigen_reconstructs_random_symmetric_matrix():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((9, 9))
    k = KernelMatrix(a + a.T)
    eig = eigen_decompose(k)
    rebuilt = eig.vectors @ np.diag(eig.values) @ eig.vectors.T
    assert np.linalg.norm(rebuilt - k.entries) <= 1e-8
    assert abs(eig.values.sum() - np.trace(k.entries)) <= 1e-8 * max(
        1.0, abs(np.trace(k.entries))
    )
    np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(9), atol=1e-8)


def test_eigen_of_psd_matrix_is_nonnegative():
    rng = np.random.default_rng(13)
    a = rng.standard_normal((12, 7))
    eig = eigen_decompose(KernelMatrix(a @ a.T / 7))
    assert eig.values.min() >= -1e-10


def test_eigen_rejects_non_finite_and_asymmetric():
    with pytest.raises(ValueError, match="finite"):
        KernelMatrix(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(ValueError, match="symmetric"):
        eigen_decompose(KernelMatrix(np.array([[1.0, 2.0], [0.0, 1.0]])))


def test_series_validation():
    basis = FourierBasis(3)
    with pytest.raises(ValueError, match="two curves"):
        CurveSeries(np.ones((1, 3)), basis)
    with pytest.raises(ValueError, match="match basis"):
        CurveSeries(np.ones((4, 5)), basis)
