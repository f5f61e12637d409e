"""Exit identities and the harmonicity diagnostic.

Three discounted exit functionals of the additive process started at
level x in modulator state i, for barriers 0 and a:

    id0  E[e^{-q T_a}; J = j]                 (one-sided up-crossing)
    id1  E[e^{-q T_a}; T_a < T_0, J = j]      (up before down)
    id2  E[e^{-q T_0}; T_0 < T_a, J = j]      (down before up)

id1 and id2 are ratios of scale matrices; id0 comes from the positive
spectral roots and their null vectors.  The generator residual H_i(x)
verifies that x -> [Z^(q)(x) 1]_i kills the discounted generator on
x > 0 and equals -q below zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import EigenFailure, QuadratureFailure, SingularScaleMatrix
from .model import MapModel
from .scale import (
    SpectralRep,
    eval_w,
    eval_w_one,
    eval_w_one_deriv,
    eval_z,
    eval_z_one,
    spectral_decompose,
)

__all__ = [
    "FirstPassageRep",
    "first_passage_rep",
    "one_sided_up",
    "two_sided_up",
    "two_sided_down",
    "generator_check",
]

COND_LIMIT = 1e12
TAIL_MEANS = 40.0


# --- one-sided up-crossing --------------------------------------------


@dataclass(frozen=True, eq=False)
class FirstPassageRep:
    """Up-crossing data: positive roots zeta_k and null vectors h_k.

    The matrix E_{(x,i)}[e^{-q tau_a^+}; J_{tau_a^+} = j] equals
    H diag(e^{-zeta_k (a - x)}) H^{-1} with H = [h_1 ... h_N].
    """

    q: float
    up_roots: np.ndarray
    up_vectors: np.ndarray

    def matrix(self, x: float, a: float):
        if x > a:
            raise ValueError("requires x <= a")
        d = np.exp(-self.up_roots * (a - float(x)))
        H = self.up_vectors
        out = (H * d) @ np.linalg.inv(H)
        mag = np.abs(out.real).max()
        if np.abs(out.imag).max() > 1e-8 * (1.0 + mag):
            raise EigenFailure("first-passage matrix came out non-real")
        return out.real


def first_passage_rep(model: MapModel, q: float) -> FirstPassageRep:
    """Collect the N positive-real-part roots with their null vectors."""
    from .model import big_psi

    rep = spectral_decompose(model, q)
    n = model.n_states
    pos = rep.roots[rep.roots.real > 0]
    H = np.empty((n, n), dtype=complex)
    for k, z in enumerate(pos):
        A = big_psi(model, z) - q * np.eye(n)
        _, s, vh = np.linalg.svd(A)
        h = vh[-1].conj()
        if s[-1] > 1e-8 * (1.0 + s[0]):
            raise EigenFailure(f"no null vector at root {z}")
        h = h / h[np.argmax(np.abs(h))]
        H[:, k] = h
    return FirstPassageRep(q=float(q), up_roots=pos, up_vectors=H)


def one_sided_up(model: MapModel, q: float, x: float, a: float,
                 i: int = None, j: int = None):
    """E_{(x,i)}[e^{-q tau_a^+}; J_{tau_a^+} = j] for x <= a.

    With i and j omitted the full matrix is returned; indices are 0-based.
    """
    P = first_passage_rep(model, q).matrix(x, a)
    if i is None and j is None:
        return P
    return float(P[i, j])


# --- two-sided exits ---------------------------------------------------


def _w_inverse_at(rep: SpectralRep, a: float):
    Wa = eval_w(rep, a)
    cond = np.linalg.cond(Wa)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularScaleMatrix(
            f"W(a) at a={a} has condition number {cond:.2e}"
        )
    return np.linalg.inv(Wa)


def two_sided_up(rep: SpectralRep, x: float, a: float):
    """E_{(x,i)}[e^{-q tau_a^+}; tau_a^+ < tau_0^-, J = j] = W(x) W(a)^{-1}."""
    if x > a:
        raise ValueError("requires x <= a")
    return eval_w(rep, x) @ _w_inverse_at(rep, a)


def two_sided_down(rep: SpectralRep, x: float, a: float):
    """E_{(x,i)}[e^{-q tau_0^-}; tau_0^- < tau_a^+, J = j].

    Z(x) - W(x) W(a)^{-1} Z(a); the identity matrix for x <= 0 (the level
    starts below the barrier, so the exit is immediate and undiscounted).
    """
    if x > a:
        raise ValueError("requires x <= a")
    return eval_z(rep, x) - two_sided_up(rep, x, a) @ eval_z(rep, a)


# --- generator residual ------------------------------------------------


def _jump_integral(law, f, x, budget):
    """integral f(x - u) dF(u) over u > 0 with f = 1 on the negative axis.

    Quadrature runs on (0, upper) with upper = min(x, 40 mean jump sizes);
    the remaining mass contributes survival(upper) (f there is 1 up to a
    tail beyond 40 means, which carries ~e^{-40} relative weight).
    """
    if x <= 0:
        return 1.0
    mean = -law.mean()
    upper = min(x, TAIL_MEANS * mean)
    val, err = quad(
        lambda u: float(law.density_mag(u)) * f(x - u),
        0.0,
        upper,
        epsabs=1e-11,
        epsrel=1e-11,
        limit=200,
    )
    budget.append(err)
    return val + float(law.survival_mag(upper))


def generator_check(model: MapModel, rep: SpectralRep, x: float, i: int) -> float:
    """Residual H_i(x) of the discounted generator on [Z^(q) 1]_i.

    Zero (to quadrature accuracy) for x > 0 and exactly -q for x < 0,
    reflecting that the row sums of Z^(q) are q-harmonic above the origin.
    i is a 0-based state index; x must be nonzero.

    Raises QuadratureFailure when the accumulated quadrature error
    estimate exceeds 1e-6 (1 + |q|).
    """
    x = float(x)
    if x == 0.0:
        raise ValueError("the residual is two-valued at x = 0; pick a side")
    q = rep.q
    n = model.n_states

    def f(j, y):
        return 1.0 if y <= 0 else float(eval_z_one(rep, y)[j])

    comp = model.components[i]
    budget = []
    if x <= 0:
        total = 0.0
        for r, law in comp.jumps:
            total += r * (_jump_integral(law, lambda y: f(i, y), x, budget) - 1.0)
        for j in range(n):
            if j != i and model.q_matrix[i, j] != 0.0:
                law = model.switch_jumps[i][j]
                if law.is_none:
                    total += model.q_matrix[i, j] * f(j, x)
                else:
                    total += model.q_matrix[i, j] * _jump_integral(
                        law, lambda y: f(j, y), x, budget
                    )
        total += model.q_matrix[i, i] * f(i, x)
        return total - q * f(i, x)
    fp = q * float(eval_w_one(rep, x)[i])
    total = comp.drift * fp
    if comp.sigma2 > 0:
        fpp = q * float(eval_w_one_deriv(rep, x)[i])
        total += 0.5 * comp.sigma2 * fpp
    for r, law in comp.jumps:
        total += r * (_jump_integral(law, lambda y: f(i, y), x, budget) - f(i, x))
    for j in range(n):
        if j != i and model.q_matrix[i, j] != 0.0:
            law = model.switch_jumps[i][j]
            if law.is_none:
                total += model.q_matrix[i, j] * f(j, x)
            else:
                total += model.q_matrix[i, j] * _jump_integral(
                    law, lambda y: f(j, y), x, budget
                )
    total += model.q_matrix[i, i] * f(i, x)
    total -= q * f(i, x)
    if sum(budget) > 1e-6 * (1.0 + abs(q)):
        raise QuadratureFailure(
            f"jump-integral error budget {sum(budget):.2e} too large at x={x}"
        )
    return total
