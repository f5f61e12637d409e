import numpy as np
import pytest

from mapstop.errors import PoleHit
from mapstop.jumps import JumpLaw
from mapstop.model import (LevyComponent, MapModel, big_psi, big_psi_deriv,
                           esscher_tilt, kappa, perron_vector, phi,
                           stationary_law, validate)

from conftest import random_model


def test_big_psi_rows_vanish_at_zero(ivanovs2, wiener2):
    """Psi(0) = Q, so its rows sum to zero."""
    for model in (ivanovs2, wiener2):
        A = big_psi(model, 0.0)
        assert np.abs(A - model.q_matrix).max() < 1e-12
        assert np.abs(A.sum(axis=1)).max() < 1e-12


def test_big_psi_derivative(ivanovs2):
    z = 0.8
    h = 1e-6
    num = (big_psi(ivanovs2, z + h) - big_psi(ivanovs2, z - h)) / (2 * h)
    assert np.abs(big_psi_deriv(ivanovs2, z) - num).max() < 1e-7


def test_kappa_zero_and_convexity(ivanovs2, wiener2):
    for model in (ivanovs2, wiener2):
        assert abs(kappa(model, 0.0)) < 1e-12
        grid = np.linspace(0.0, 2.5, 26)
        vals = np.array([kappa(model, t) for t in grid])
        second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
        assert (second > -1e-9).all()


def test_kappa_convexity_random_models():
    for seed in (11, 12, 13):
        model = random_model(seed)
        grid = np.linspace(0.0, 2.0, 21)
        vals = np.array([kappa(model, t) for t in grid])
        second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
        assert (second > -1e-9).all()


def test_kappa_drift_ivanovs(ivanovs2):
    """kappa'(0) is the long-run drift; for this model it is 1/4."""
    h = 1e-6
    d = (kappa(ivanovs2, h) - kappa(ivanovs2, 0.0)) / h
    assert abs(d - 0.25) < 1e-4


def test_perron_vector_positive_and_eigen(ivanovs2):
    th = 1.3
    v = perron_vector(ivanovs2, th)
    assert (v > 0).all()
    lhs = big_psi(ivanovs2, th) @ v
    assert np.abs(lhs - kappa(ivanovs2, th) * v).max() < 1e-9


def test_phi_right_inverse(ivanovs2, wiener2):
    for model in (ivanovs2, wiener2):
        for q in (0.3, 1.0, 2.2, 6.0):
            p = phi(model, q)
            assert p > 0
            assert abs(kappa(model, p) - q) < 1e-9


def test_phi_is_smallest_positive_root(ivanovs2):
    """det(Psi(z) - q I) has no sign change strictly inside (0, Phi(q))."""
    q = 1.5
    p = phi(ivanovs2, q)

    def det(z):
        return np.linalg.det(big_psi(ivanovs2, z) - q * np.eye(2))

    zs = np.linspace(1e-6, p * 0.999, 200)
    signs = np.sign([det(z) for z in zs])
    assert (signs == signs[0]).all()
    assert abs(det(p)) < 1e-6 * max(1.0, abs(det(zs[0])))


def test_stationary_law(ivanovs2):
    pi = stationary_law(ivanovs2)
    assert abs(pi.sum() - 1.0) < 1e-12
    assert np.abs(pi @ ivanovs2.q_matrix).max() < 1e-12
    # Q = [[-3,3],[1,-1]] has stationary law (1/4, 3/4)
    assert np.abs(pi - np.array([0.25, 0.75])).max() < 1e-12


def test_esscher_tilt_shifts_kappa(ivanovs2):
    g = 0.6
    tilted = esscher_tilt(ivanovs2, g)
    base = kappa(ivanovs2, g)
    for th in (0.0, 0.4, 1.1):
        assert abs(kappa(tilted, th) - (kappa(ivanovs2, th + g) - base)) < 1e-9


def test_esscher_tilt_drift_positive_at_phi(ivanovs2):
    """Under the tilt by Phi(q) the process drifts upward."""
    q = 1.5
    tilted = esscher_tilt(ivanovs2, phi(ivanovs2, q))
    h = 1e-6
    assert (kappa(tilted, h) - kappa(tilted, 0.0)) / h > 0


def test_pole_hit_raises(ivanovs2):
    with pytest.raises(PoleHit):
        big_psi(ivanovs2, -3.0)


def test_validate_flags_bad_models():
    good = MapModel(
        q_matrix=np.array([[-1.0, 1.0], [2.0, -2.0]]),
        components=(LevyComponent(1.0, 1.0), LevyComponent(1.0, 0.5)),
    )
    assert validate(good) == []

    bad_rows = MapModel(
        q_matrix=np.array([[-1.0, 0.5], [2.0, -2.0]]),
        components=(LevyComponent(1.0, 1.0), LevyComponent(1.0, 0.5)),
    )
    assert any(d.code == "q_rowsum" for d in validate(bad_rows))

    monotone = MapModel(
        q_matrix=np.array([[-1.0, 1.0], [2.0, -2.0]]),
        components=(LevyComponent(-1.0, 0.0), LevyComponent(1.0, 0.5)),
    )
    assert any(d.code == "monotone_path" for d in validate(monotone))


def test_switch_laws_masked_by_rate_matrix():
    Q = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.5, 0.5, -1.0]])
    law = JumpLaw.exponential(2.0)
    rows = tuple(tuple(law for _ in range(3)) for _ in range(3))
    comps = tuple(LevyComponent(1.0, 1.0) for _ in range(3))
    model = MapModel(q_matrix=Q, components=comps, switch_jumps=rows)
    assert model.switch_jumps[0][2].is_none  # q_{13} = 0
    assert model.switch_jumps[1][1].is_none  # diagonal
    assert not model.switch_jumps[0][1].is_none
