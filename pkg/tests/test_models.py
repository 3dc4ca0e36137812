import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from syncwave.errors import ConfigurationError, DegenerateNodesError, NumericalOverflowError, ShapeError
from syncwave.integrator import SystemState
from syncwave.models import (
    Berger,
    FractionalPower,
    Identity,
    LocalFunction,
    ModalProjector,
    SineGordon,
    SubsystemSpec,
    ZeroForce,
    apply_coupling,
    assemble,
    build_lagrange,
    coupling_matrix,
    eval_force,
    graph_laplacian,
    kirchhoff,
    potential,
    rhs,
)
from syncwave.spectral import ModelDomain, build_basis, from_grid

coeff = st.floats(-3, 3, allow_nan=False)
SYMMETRIC = [Identity(), FractionalPower(0.25), FractionalPower(0.5), ModalProjector(0), ModalProjector(5)]


@pytest.fixture
def basis():
    return build_basis(ModelDomain(), 16)


def _sine(x, k):
    return np.sqrt(2 / np.pi) * np.sin(np.outer(np.atleast_1d(x), k))


# -- coupling operators -------------------------------------------------------------


@pytest.mark.parametrize("K", SYMMETRIC, ids=repr)
@given(v=arrays(float, 16, elements=coeff), w=arrays(float, 16, elements=coeff))
def test_symmetric_and_nonnegative(K, v, w):
    b = build_basis(ModelDomain(), 16)
    Kv, Kw = apply_coupling(K, b, v), apply_coupling(K, b, w)
    assert Kv @ w == pytest.approx(v @ Kw, rel=1e-12, abs=1e-12)
    assert Kv @ v >= -1e-12


def test_apply_coupling_examples(basis):
    u = np.random.default_rng(0).standard_normal(16)
    np.testing.assert_array_equal(apply_coupling(Identity(), basis, u), u)
    b3 = build_basis(ModelDomain(), 3)
    np.testing.assert_array_equal(apply_coupling(ModalProjector(2), b3, [1.0, 2.0, 3.0]), [1, 2, 0])
    np.testing.assert_allclose(apply_coupling(FractionalPower(0.5), basis, u), np.arange(1, 17) * u)


def test_operator_parameter_checks():
    with pytest.raises(ConfigurationError):
        FractionalPower(0.75)
    with pytest.raises(ConfigurationError):
        ModalProjector(-1)


def test_lagrange_reproduces_nodal_values(basis):
    nodes = [np.pi / 4, np.pi / 2, 3 * np.pi / 4]
    K = build_lagrange(basis, nodes)
    k = np.arange(1, 17)
    for seed in range(5):
        v = np.random.default_rng(seed).standard_normal(16)
        Kv = apply_coupling(K, basis, v)
        # pointwise values from the sine series, independent of the operator's own tables
        assert np.max(np.abs(_sine(nodes, k) @ Kv - _sine(nodes, k) @ v)) < 1e-10


def test_lagrange_single_node(basis):
    K = build_lagrange(basis, [np.pi / 2])
    e1_mid = np.sqrt(2 / np.pi)
    np.testing.assert_allclose(K.psi[:, 0], basis.unit(1) / e1_mid, atol=1e-15)


def test_lagrange_biorthogonality(basis):
    N = 3
    nodes = [j * np.pi / (N + 1) for j in range(1, N + 1)]
    K = build_lagrange(basis, nodes)
    E = _sine(nodes, np.arange(1, N + 1))
    np.testing.assert_allclose(K.psi[:N], np.linalg.inv(E), atol=1e-12)
    # l_k(psi_j) = psi_j(x_k)
    vals = _sine(nodes, np.arange(1, 17)) @ K.psi
    assert np.max(np.abs(vals - np.eye(N))) < 1e-10


def test_lagrange_on_rectangle():
    b = build_basis(ModelDomain("rectangle", "dirichlet", "laplacian"), 20)
    nodes = [(1.0, 1.0), (2.0, 1.3), (0.7, 2.2), (1.6, 2.5)]
    K = build_lagrange(b, nodes)
    from syncwave.spectral import eval_modes

    v = np.random.default_rng(1).standard_normal(20)
    E = eval_modes(b, nodes)
    assert np.max(np.abs(E @ apply_coupling(K, b, v) - E @ v)) < 1e-10
    assert not K.symmetric


def test_lagrange_errors(basis):
    with pytest.raises(DegenerateNodesError):
        build_lagrange(basis, [1.0, 1.0])
    with pytest.raises(ConfigurationError):
        build_lagrange(basis, [0.0, 1.0])
    with pytest.raises(ConfigurationError):
        build_lagrange(basis, np.linspace(0.1, 3.0, 17))
    # nearly coincident nodes exceed the conditioning limit
    with pytest.raises(DegenerateNodesError):
        build_lagrange(basis, [np.pi / 2, np.pi / 2 + 1e-15])


def test_coupling_matrix_of_nodal(basis):
    K = build_lagrange(basis, [0.5, 1.5, 2.5])
    v = np.random.default_rng(2).standard_normal(16)
    np.testing.assert_allclose(coupling_matrix(K, basis) @ v, apply_coupling(K, basis, v), atol=1e-12)


# -- nonlinear forces -------------------------------------------------------------------


def test_zero_field_forces(basis):
    z = np.zeros(16)
    assert np.all(eval_force(Berger(1.0, 2.0), basis, z) == 0)
    assert np.all(eval_force(SineGordon(1.0), basis, z) == 0)
    assert np.all(eval_force(ZeroForce(), basis, z) == 0)


def test_local_function_at_zero_is_projected_constant(basis):
    nl = LocalFunction(phi=lambda s: s + 2.0, prim=lambda s: 0.5 * s**2 + 2.0 * s)
    np.testing.assert_allclose(eval_force(nl, basis, np.zeros(16)),
                               2.0 * from_grid(basis, np.ones(basis.grid_shape)), atol=1e-15)


def test_berger_single_mode():
    b = build_basis(ModelDomain("interval", "dirichlet", "hinged"), 6)
    kb, Gam, c = 1.5, 0.7, 0.4
    np.testing.assert_allclose(eval_force(Berger(kb, Gam), b, c * b.unit(1)),
                               (kb * c**2 - Gam) * c * b.unit(1), atol=1e-15)
    assert potential(Berger(kb, Gam), b, c * b.unit(1)) == pytest.approx(kb * c**4 / 4 - Gam * c**2 / 2)


def test_potentials_vanish_at_zero(basis):
    for nl in [ZeroForce(), SineGordon(2.0), kirchhoff(1.0, -0.5), Berger(1.0, 3.0)]:
        assert potential(nl, basis, np.zeros(16)) == 0.0


def test_sine_gordon_small_amplitude(basis):
    u = 1e-3 * basis.unit(1)
    lam_s = 1.7
    approx = 0.5 * lam_s * float(u @ u)
    assert abs(potential(SineGordon(lam_s), basis, u) - approx) / approx < 1e-5


@pytest.mark.parametrize("nl", [SineGordon(1.3), kirchhoff(0.8, -0.4), Berger(0.6, 1.1)],
                         ids=["sine_gordon", "kirchhoff", "berger"])
@given(data=st.data())
def test_gradient_consistency(nl, data):
    M = data.draw(st.integers(2, 32))
    b = build_basis(ModelDomain(), M)
    u = data.draw(arrays(float, M, elements=st.floats(-2, 2)))
    v = data.draw(arrays(float, M, elements=st.floats(-2, 2)))
    nv = np.linalg.norm(v)
    if nv < 1e-3:
        return
    h = 1e-5 / nv
    # central difference: no O(h) curvature bias when (B(u), v) happens to vanish
    fd = (potential(nl, b, u + h * v) - potential(nl, b, u - h * v)) / (2 * h)
    Bu = eval_force(nl, b, u)
    exact = float(Bu @ v)
    scale = max(abs(exact), np.linalg.norm(Bu) * nv, 1e-3)
    assert abs(fd - exact) <= 1e-4 * scale


def test_overflow_is_reported(basis):
    nl = LocalFunction(phi=np.exp, prim=lambda s: np.exp(s) - 1.0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalOverflowError):
        eval_force(nl, basis, 1e4 * basis.unit(1))


def test_kirchhoff_checks():
    with pytest.raises(ConfigurationError):
        kirchhoff(-1.0, 0.0)
    assert kirchhoff(0.0, 1.0).globally_lipschitz
    assert not kirchhoff(1.0, 0.0).globally_lipschitz
    with pytest.raises(ConfigurationError):
        Berger(-1.0, 0.0)


# -- systems ---------------------------------------------------------------------------


def test_subsystem_checks():
    with pytest.raises(ConfigurationError):
        SubsystemSpec(0.0)
    with pytest.raises(ConfigurationError):
        SubsystemSpec(1.0, -0.1)


def test_chain_graph():
    np.testing.assert_array_equal(graph_laplacian(3), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    np.testing.assert_array_equal(graph_laplacian(2), [[1, -1], [-1, 1]])


def test_assemble_errors(basis):
    s = SubsystemSpec(1.0, 0.1)
    with pytest.raises(ConfigurationError):
        assemble(basis, [s])
    with pytest.raises(ConfigurationError):
        assemble(basis, [s, s, s], "pair")
    with pytest.raises(ConfigurationError):
        assemble(basis, [s, s], kappa=-1.0)
    with pytest.raises(ConfigurationError):
        assemble(basis, [s, s, s], "chain", sine_link=1.0)
    other = build_basis(ModelDomain(), 8)
    with pytest.raises(ConfigurationError):
        assemble(basis, [s, s], K=build_lagrange(other, [1.0]))
    with pytest.raises(ConfigurationError):
        assemble(basis, [SubsystemSpec(1.0, forcing=np.zeros(3)), s])


def _random_state(n, M, seed):
    r = np.random.default_rng(seed)
    return SystemState(0.0, r.standard_normal((n, M)), r.standard_normal((n, M)))


def test_decoupled_rhs_splits(basis):
    a = SubsystemSpec(1.0, 0.3, SineGordon(1.0), np.ones(16))
    c = SubsystemSpec(2.0, 0.1, kirchhoff(1.0, 0.0))
    pair = assemble(basis, [a, c])
    st_ = _random_state(2, 16, 0)
    _, dV = rhs(pair, st_)
    for i, s in enumerate([a, c]):
        f = np.zeros(16) if s.forcing is None else s.forcing
        ref = f - s.nu * basis.lam * st_.positions[i] - s.gamma * st_.velocities[i] \
            - eval_force(s.nonlinearity, basis, st_.positions[i])
        np.testing.assert_allclose(dV[i], ref, atol=1e-12)


def test_modal_coupling_touches_first_modes(basis):
    s = SubsystemSpec(1.0)
    pair = assemble(basis, [s, s], kappa=5.0, K=ModalProjector(2))
    base = assemble(basis, [s, s])
    st_ = _random_state(2, 16, 1)
    diff = rhs(pair, st_)[1] - rhs(base, st_)[1]
    assert np.all(diff[:, 2:] == 0)
    dU = st_.positions[0] - st_.positions[1]
    np.testing.assert_allclose(diff[0, :2], -5.0 * dU[:2])


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("K", SYMMETRIC + ["nodal"], ids=repr)
def test_diagonal_kernel(basis, n, K):
    if K == "nodal":
        K = build_lagrange(basis, [0.4, 1.1, 2.0])
    s = SubsystemSpec(1.0)
    sys_ = assemble(basis, [s] * n, "pair" if n == 2 else "chain", kappa=3.0, K=K)
    u = np.random.default_rng(3).standard_normal(16)
    assert np.all(sys_.couple(np.tile(u, (n, 1))) == 0)


@pytest.mark.parametrize("n", [2, 4])
@given(data=st.data())
def test_coupling_matrix_symmetric_nonnegative(n, data):
    b = build_basis(ModelDomain(), 10)
    K = data.draw(st.sampled_from(SYMMETRIC[:4]))
    sys_ = assemble(b, [SubsystemSpec(1.0)] * n, "pair" if n == 2 else "chain", kappa=1.0, K=K)
    U = data.draw(arrays(float, (n, 10), elements=coeff))
    V = data.draw(arrays(float, (n, 10), elements=coeff))
    assert np.sum(sys_.couple(U) * V) == pytest.approx(np.sum(U * sys_.couple(V)), rel=1e-12, abs=1e-12)
    assert np.sum(sys_.couple(U) * U) >= -1e-12


def test_rhs_zero_state(basis):
    sys_ = assemble(basis, [SubsystemSpec(1.0, 0.5, SineGordon(1.0))] * 2, kappa=2.0, alpha=1.0)
    dU, dV = rhs(sys_, SystemState.zeros(2, 16))
    assert np.all(dU == 0) and np.all(dV == 0)


def test_rhs_coupling_vanishes_on_diagonal(basis):
    s = SubsystemSpec(1.3, 0.2)
    coupled = assemble(basis, [s, s], kappa=7.0, alpha=3.0)
    free = assemble(basis, [s, s])
    r = np.random.default_rng(4)
    u, ut = r.standard_normal(16), r.standard_normal(16)
    st_ = SystemState(0.0, [u, u], [ut, ut])
    np.testing.assert_array_equal(rhs(coupled, st_)[1], rhs(free, st_)[1])


def test_rhs_single_mode_oscillator(basis):
    nu, gamma = 2.0, 0.3
    sys_ = assemble(basis, [SubsystemSpec(nu, gamma)] * 2)
    c, cdot = 0.7, -0.2
    U = np.zeros((2, 16))
    V = np.zeros((2, 16))
    U[:, 2], V[:, 2] = c, cdot
    dU, dV = rhs(sys_, SystemState(0.0, U, V))
    assert dU[0, 2] == cdot
    assert dV[0, 2] == pytest.approx(-nu * 9 * c - gamma * cdot, rel=1e-15)
    assert np.count_nonzero(dV) == 2


def test_rhs_shape_error(basis):
    sys_ = assemble(basis, [SubsystemSpec(1.0)] * 2)
    with pytest.raises(ShapeError):
        rhs(sys_, SystemState.zeros(2, 8))


def test_lagrange_hypothesis_flag(basis):
    K = build_lagrange(basis, [1.0, 2.0])
    assert assemble(basis, [SubsystemSpec(1.0, 0.1, SineGordon(1.0))] * 2, kappa=1.0, K=K) \
        .within_lagrange_hypotheses
    assert not assemble(basis, [SubsystemSpec(1.0, 0.1, kirchhoff(1.0, 0.0))] * 2, kappa=1.0, K=K) \
        .within_lagrange_hypotheses


def test_system_is_immutable(basis):
    sys_ = assemble(basis, [SubsystemSpec(1.0)] * 2)
    with pytest.raises(dataclasses.FrozenInstanceError):
        sys_.kappa = 3.0
    with pytest.raises(ValueError):
        sys_.forcing[0, 0] = 1.0
