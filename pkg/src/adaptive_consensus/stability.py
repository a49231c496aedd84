"""Lyapunov equations, Hurwitz certification and constructive gain selection."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

HURWITZ_MARGIN = 1e-10
MAX_GAMMA1 = 2.0**60
# above this size the dense Kronecker system gets too large to form
KRONECKER_MAX_DIM = 60


class StabilityError(ValueError):
    pass


def solve_lyapunov(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``P A + A^T P = RHS`` for symmetric ``P``.

    Uses the vectorized form ``(A^T kron I + I kron A^T) vec(P) = vec(RHS)``
    (column-major ``vec``).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
    k = a.shape[0]
    if a.shape != (k, k) or rhs.shape != (k, k):
        raise StabilityError("A and RHS must be square and of equal size")
    eig = np.linalg.eigvals(a)
    gap = np.abs(eig[:, None] + eig[None, :]).min()
    if gap <= 1e-12 * max(1.0, np.abs(eig).max()):
        raise StabilityError("spectrum violates solvability: A and -A share an eigenvalue")
    if k > KRONECKER_MAX_DIM:
        p = solve_continuous_lyapunov(a.T, rhs)
    else:
        eye = np.eye(k)
        big = np.kron(a.T, eye) + np.kron(eye, a.T)
        try:
            vec_p = np.linalg.solve(big, rhs.reshape(-1, order="F"))
        except np.linalg.LinAlgError as exc:
            raise StabilityError("spectrum violates solvability") from exc
        p = vec_p.reshape(k, k, order="F")
    return 0.5 * (p + p.T)


def lyapunov_residual(p: np.ndarray, a: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.abs(p @ a + a.T @ p - rhs).max())


def spectral_abscissa(a: np.ndarray) -> float:
    return float(np.linalg.eigvals(np.atleast_2d(a)).real.max())


def is_hurwitz(a: np.ndarray) -> tuple[bool, float]:
    """``(True, abscissa)`` when every eigenvalue has real part below ``-1e-10``."""
    s = spectral_abscissa(a)
    return s < -HURWITZ_MARGIN, s


def closed_loop_matrix(j, alpha1, alpha2=0.0, gamma1=1.0, gamma2=0.0, order=2) -> np.ndarray:
    """Reduced nominal dynamics in disagreement coordinates.

    Second order: ``[[0, I], [a1 I - g1 J, a2 I - g2 J]]`` acting on ``(Wp, Wv)``.
    First order: ``a1 I - g1 J`` acting on ``Wx``.
    """
    j = np.atleast_2d(np.asarray(j, dtype=float))
    eye = np.eye(j.shape[0])
    if order == 1:
        return alpha1 * eye - gamma1 * j
    return np.block([
        [np.zeros_like(j), eye],
        [alpha1 * eye - gamma1 * j, alpha2 * eye - gamma2 * j],
    ])


def assumption1_sigma(p: np.ndarray, r: np.ndarray) -> float:
    """Bound on ``||dV/dx||^2 / ||x||_R^2`` for ``V = x^T R^T P R x``: ``4 ||P R||_2^2``."""
    pr = np.asarray(p) @ np.asarray(r)
    if not pr.size or not np.any(pr):
        return 0.0
    return float(4.0 * np.linalg.norm(pr, 2) ** 2)


@dataclass(frozen=True)
class GainCertificate:
    gamma1: float
    gamma2: float
    A_bar: np.ndarray
    P: np.ndarray
    sigma: float | None
    P_min: float
    P_max: float
    abscissa: float
    residual: float
    order: int = 2

    def with_sigma(self, r: np.ndarray) -> "GainCertificate":
        return replace(self, sigma=assumption1_sigma(self.P, r))

    def check(self, r: np.ndarray | None = None) -> dict[str, bool]:
        """Evaluate every certificate invariant; keys name the invariant."""
        out = {
            "symmetric": bool(np.array_equal(self.P, self.P.T)),
            "positive_definite": self.P_min > 0,
            "lyapunov_residual": self.residual <= 1e-8,
            "hurwitz": self.abscissa < -HURWITZ_MARGIN,
        }
        if r is not None:
            out["sigma_bound"] = self.sigma is not None and self.sigma >= assumption1_sigma(self.P, r) * (1 - 1e-12)
        return out

    def to_json(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "sigma": self.sigma,
            "P_min": self.P_min,
            "P_max": self.P_max,
            "abscissa": self.abscissa,
            "lyapunov_residual": self.residual,
            "P": self.P.tolist(),
        }


@dataclass(frozen=True)
class AppendixScratch:
    P_J: np.ndarray
    c: float
    Q: np.ndarray
    Q_c: np.ndarray


def certify_gains(j, alpha1, alpha2, gamma1, gamma2=0.0, r=None, order=2) -> GainCertificate:
    """Certify explicit gains: closed loop Hurwitz plus its Lyapunov matrix ``P``."""
    a_bar = closed_loop_matrix(j, alpha1, alpha2, gamma1, gamma2, order=order)
    ok, absc = is_hurwitz(a_bar)
    if not ok:
        raise StabilityError(
            f"closed loop is not Hurwitz for gamma1={gamma1}, gamma2={gamma2} (abscissa {absc:.3g})"
        )
    rhs = -np.eye(a_bar.shape[0])
    p = solve_lyapunov(a_bar, rhs)
    eig = np.linalg.eigvalsh(p)
    cert = GainCertificate(
        gamma1=float(gamma1),
        gamma2=float(gamma2),
        A_bar=a_bar,
        P=p,
        sigma=None,
        P_min=float(eig[0]),
        P_max=float(eig[-1]),
        abscissa=absc,
        residual=lyapunov_residual(p, a_bar, rhs),
        order=order,
    )
    return cert.with_sigma(r) if r is not None else cert


def appendix_blocks(p_j: np.ndarray, c: float, alpha1: float, alpha2: float):
    """The constant matrices ``Q`` and ``Q_c`` with ``P A_bar + A_bar^T P = g1 Q + Q_c``."""
    k = p_j.shape[0]
    eye = np.eye(k)
    q = np.block([[-eye, p_j - c * eye], [p_j - c * eye, -(c**2) * eye]])
    q_c = np.block([
        [2 * alpha1 * p_j, (alpha2 + alpha1 * c) * p_j],
        [(alpha2 + alpha1 * c) * p_j, 2 * (1 + alpha2 * c) * p_j],
    ])
    return q, q_c


def select_gains(j, alpha1, alpha2, r=None) -> tuple[GainCertificate, AppendixScratch]:
    """Pick ``(gamma1, gamma2 = c gamma1)`` making the second-order closed loop Hurwitz.

    ``P_J`` solves ``P_J J + J^T P_J = I``; ``c = 1.1 lambda_max(P_J) / 2`` so that
    ``P_J < 2 c I``; ``gamma1`` doubles from 1 until ``gamma1 Q + Q_c < 0`` and
    ``c gamma1 > 1``.
    """
    j = np.atleast_2d(np.asarray(j, dtype=float))
    if np.linalg.eigvals(j).real.min() <= 0:
        raise StabilityError("J must have eigenvalues with positive real parts")
    eye = np.eye(j.shape[0])
    # P_J J + J^T P_J = I  <=>  P_J (-J) + (-J)^T P_J = -I
    p_j = solve_lyapunov(-j, -eye)
    c = 1.1 * np.linalg.eigvalsh(p_j)[-1] / 2.0
    q, q_c = appendix_blocks(p_j, c, alpha1, alpha2)
    if np.linalg.eigvalsh(q)[-1] >= 0:
        raise StabilityError("Schur-complement block Q is not negative definite")
    gamma1 = 1.0
    while not (np.linalg.eigvalsh(gamma1 * q + q_c)[-1] < 0 and c * gamma1 > 1):
        gamma1 *= 2.0
        if gamma1 > MAX_GAMMA1:
            raise StabilityError("gain search exceeded 2**60; J is badly conditioned")
    cert = certify_gains(j, alpha1, alpha2, gamma1, c * gamma1, r=r, order=2)
    return cert, AppendixScratch(P_J=p_j, c=float(c), Q=q, Q_c=q_c)


def select_gains_first_order(j, alpha1, r=None) -> GainCertificate:
    """Double ``gamma1`` from 1 until ``alpha1 I - gamma1 J`` is Hurwitz."""
    gamma1 = 1.0
    while not is_hurwitz(closed_loop_matrix(j, alpha1, gamma1=gamma1, order=1))[0]:
        gamma1 *= 2.0
        if gamma1 > MAX_GAMMA1:
            raise StabilityError("gain search exceeded 2**60")
    return certify_gains(j, alpha1, 0.0, gamma1, 0.0, r=r, order=1)
