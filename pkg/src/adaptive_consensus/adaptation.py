"""Adaptive update laws and the manifold / energy diagnostics.

Four laws are provided:

* ``distributed`` - the manifold law: ``mu_i = w_hat_i - rho_i``, ``w_hat_i' = -lam_i zeta_i^T f_i``.
  Per agent it reads only ``(p_i, v_i, w_hat_i, L_i p, L_i v)``.
* ``centralized`` - gradient of ``V = x^T R^T P R x``; needs the full network state.
* ``example1`` - gradient law for first-order agents on an undirected graph.
* ``zhang`` - leader-following gradient law with sigma-modification leakage.

Controllers only ever see a :class:`~adaptive_consensus.agents.ControlSpec`, which
carries no ``w_true``. Functions taking a full scenario are diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import ControlSpec, RegressorSpec, ScenarioSpec, actuated, eval_rho, eval_zeta, nominal_drive
from .graph import has_spanning_tree, interleave

SCHEMES = ("ideal", "distributed", "centralized", "example1", "zhang")


class SchemeError(ValueError):
    """A scheme was requested on a scenario it cannot run on."""


# -- distributed manifold law -------------------------------------------------

def local_update(reg: RegressorSpec, alpha1, alpha2, gamma1, gamma2, p_i, v_i, w_hat_i, Lp_i, Lv_i):
    """One agent's manifold law from agent-local data only.

    For first-order agents pass ``v_i = Lv_i = None``; the regressor then reads ``p_i``.
    Returns ``(mu_i, w_hat_dot_i)``.
    """
    w_hat_i = np.asarray(w_hat_i, dtype=float)
    if w_hat_i.shape != (reg.m,):
        raise ValueError(f"w_hat_i must have {reg.m} entries")
    if v_i is None:
        q = p_i
        f_i = alpha1 * p_i - gamma1 * Lp_i
    else:
        q = v_i
        f_i = alpha1 * p_i + alpha2 * v_i - gamma1 * Lp_i - gamma2 * Lv_i
    mu_i = w_hat_i - eval_rho(reg, q)
    return mu_i, -reg.lam * eval_zeta(reg, q) * f_i


def distributed_update(ctrl: ControlSpec, p, v, w_hat):
    """Vectorized :func:`local_update` over all agents.

    The network contributes only the neighbor sums ``L p`` and ``L v``; every
    other operation below is elementwise in the agent index.
    """
    p = np.asarray(p, dtype=float)
    v = None if v is None else np.asarray(v, dtype=float)
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat.shape != (ctrl.m,):
        raise ValueError(f"w_hat must have {ctrl.m} entries")
    f = nominal_drive(ctrl, p, v)
    q = actuated(ctrl, p, v)
    mu = w_hat - ctrl.rho(q)
    w_hat_dot = -ctrl.lam * ctrl.zeta(q) * f[ctrl.owner]
    return mu, w_hat_dot


# -- centralized gradient law -------------------------------------------------

def regressor_matrix(ctrl: ControlSpec, p, v=None) -> np.ndarray:
    """Block-diagonal ``H(x)`` with ``h_i = [0; zeta_i(v_i)]`` (or ``zeta_i(p_i)`` first order)."""
    q = actuated(ctrl, np.asarray(p, float), None if v is None else np.asarray(v, float))
    h = np.zeros((ctrl.order * ctrl.n, ctrl.m))
    rows = ctrl.order * ctrl.owner + (ctrl.order - 1)
    h[rows, np.arange(ctrl.m)] = ctrl.zeta(q)
    return h


def lyapunov_gradient(ctrl: ControlSpec, x: np.ndarray) -> np.ndarray:
    """``dV/dx = 2 x^T R^T P R`` for ``V = x^T R^T P R x`` (returned as a flat vector)."""
    rx = ctrl.R @ x
    return 2.0 * ctrl.R.T @ (ctrl.P @ rx)


def centralized_update(v_gradient, h, lam) -> np.ndarray:
    """``w_hat'^T = lam dV/dx H(x)``; ``lam`` may be a scalar or per-parameter."""
    return np.asarray(lam) * (np.asarray(h).T @ np.asarray(v_gradient))


def centralized_law(ctrl: ControlSpec, p, v, w_hat):
    x = interleave(p, v if ctrl.order == 2 else None)
    grad = lyapunov_gradient(ctrl, x)
    return np.asarray(w_hat, float).copy(), centralized_update(grad, regressor_matrix(ctrl, p, v), ctrl.lam)


# -- example1: undirected first-order gradient law ---------------------------

def example1_update(lap, x, h_list, lam) -> np.ndarray:
    """``w_hat_i' = lam h_i^T (L_i x)`` with ``h_i`` the evaluated regressor row of agent ``i``."""
    lap = np.asarray(lap, dtype=float)
    if not np.allclose(lap, lap.T, rtol=0, atol=1e-12):
        raise SchemeError("the example1 law requires a symmetric Laplacian (undirected graph)")
    lx = lap @ np.asarray(x, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (len(h_list),))
    return np.concatenate([lam[i] * np.atleast_1d(h) * lx[i] for i, h in enumerate(h_list)]) if h_list else np.zeros(0)


def example1_law(ctrl: ControlSpec, p, v, w_hat):
    if ctrl.order != 1:
        raise SchemeError("the example1 law is defined for first-order agents")
    zeta = ctrl.zeta(p)
    lx = ctrl.lap @ p
    return np.asarray(w_hat, float).copy(), ctrl.lam * zeta * lx[ctrl.owner]


# -- zhang: leader-following law with sigma-modification ------------------

@dataclass(frozen=True)
class ZhangParams:
    """Leader-following decomposition ``L = [[0, 0], [-b, L_o + B]]`` with agent 1 as leader."""

    kappa: float
    L_o: np.ndarray
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    b: np.ndarray
    P_diag: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        """``Q = (P (L_o + B) + (L_o + B)^T P) / 2``."""
        m = self.L_o + self.B
        return 0.5 * (self.P_diag @ m + m.T @ self.P_diag)

    @property
    def R(self) -> np.ndarray:
        return np.column_stack([-self.b, self.L_o + self.B])

    @property
    def gains(self) -> np.ndarray:
        """Per-follower scalar ``(d_i + b_i) p_i`` (leader entry 0)."""
        return np.concatenate([[0.0], (np.diag(self.D) + self.b) * np.diag(self.P_diag)])


def zhang_params(lap, kappa: float = 1.0) -> ZhangParams:
    lap = np.asarray(lap, dtype=float)
    if not kappa > 0:
        raise SchemeError("sigma-modification constant kappa must be positive")
    if np.any(lap[0] != 0):
        raise SchemeError(
            "zhang scheme needs the leader-following block form L = [[0, 0], [-b, L_o + B]] "
            "(agent 1 must receive no information)"
        )
    ok, root = has_spanning_tree(lap)
    if not ok or root != 0:
        raise SchemeError("leader-following form needs a spanning tree rooted at agent 1")
    b = -lap[1:, 0]
    m = lap[1:, 1:]
    bmat = np.diag(b)
    l_o = m - bmat
    d = np.diag(np.diag(l_o))
    e = d - l_o
    q = np.linalg.solve(m.T, np.ones(m.shape[0]))
    p_diag = np.diag(q)
    if np.linalg.eigvalsh(p_diag @ m + m.T @ p_diag)[0] <= 0:
        # diag(q) is not always enough; diag(q_i / s_i) with s = M^{-1} 1 is
        # the standard M-matrix scaling and always is
        s = np.linalg.solve(m, np.ones(m.shape[0]))
        p_diag = np.diag(q / s)
    if np.any(np.diag(p_diag) <= 0) or np.linalg.eigvalsh(p_diag @ m + m.T @ p_diag)[0] <= 0:
        raise SchemeError("could not find a positive diagonal scaling for L_o + B")
    return ZhangParams(kappa=float(kappa), L_o=l_o, B=bmat, D=d, E=e, b=b, P_diag=p_diag)


def zhang_update(zp: ZhangParams, x, w_hat, h_list, lam) -> np.ndarray:
    """``w_hat_i' = lam (d_i + b_i) p_i h_i^T L_i x - lam kappa w_hat_i`` for followers."""
    n = zp.L_o.shape[0] + 1
    lap = np.zeros((n, n))
    lap[1:, 0] = -zp.b
    lap[1:, 1:] = zp.L_o + zp.B
    lx = lap @ np.asarray(x, dtype=float)
    if len(h_list) and np.size(h_list[0]):
        raise SchemeError("the leader must be free of uncertainty")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    g = zp.gains
    w_hat = np.asarray(w_hat, dtype=float)
    out, k = [], 0
    for i, h in enumerate(h_list):
        h = np.atleast_1d(np.asarray(h, dtype=float))
        blk = w_hat[k:k + h.size]
        out.append(lam[i] * g[i] * h * lx[i] - lam[i] * zp.kappa * blk)
        k += h.size
    return np.concatenate(out) if out else np.zeros(0)


def zhang_law(ctrl: ControlSpec, zp: ZhangParams, p, v, w_hat):
    if ctrl.order != 1:
        raise SchemeError("the zhang baseline is defined for first-order agents")
    if np.any(ctrl.owner == 0):
        raise SchemeError("the leader (agent 1) must be free of uncertainty")
    w_hat = np.asarray(w_hat, float)
    lx = ctrl.lap @ p
    g = zp.gains[ctrl.owner]
    return w_hat.copy(), ctrl.lam * g * ctrl.zeta(p) * lx[ctrl.owner] - ctrl.lam * zp.kappa * w_hat


# -- diagnostics (may read w_true) ---------------------------------------------

def manifold_coords(scenario: ScenarioSpec, q, w_hat) -> np.ndarray:
    """``z_i = rho_i(q_i) - (w_hat_i - w_i)``; ``q`` is the actuated state."""
    ctrl = scenario.control
    return ctrl.rho(np.asarray(q, float)) - np.asarray(w_hat, float) + scenario.w_true


def lyapunov_value(ctrl: ControlSpec, p, v=None) -> float:
    rx = ctrl.R @ interleave(p, v if ctrl.order == 2 else None)
    return float(rx @ ctrl.P @ rx)


@dataclass(frozen=True)
class CompositeEnergy:
    V: float
    U: float
    k: float


def manifold_energy(scenario: ScenarioSpec, z) -> float:
    """``sum_i z_i^T z_i / (2 lam_i)``."""
    z = np.asarray(z, float)
    return float(np.sum(z * z / (2.0 * scenario.control.lam)))


def composite_energy(scenario: ScenarioSpec, p, v, w_hat, k: float = 0.5) -> CompositeEnergy:
    """``U = V + sigma / (4 (1 - k)) * sum_i z_i^T z_i / (2 lam_i)``."""
    if not 0 < k < 1:
        raise ValueError("k must lie in (0, 1)")
    ctrl = scenario.control
    big_v = lyapunov_value(ctrl, p, v)
    z = manifold_coords(scenario, actuated(ctrl, np.asarray(p, float), None if v is None else np.asarray(v, float)), w_hat)
    sigma = scenario.gains.sigma
    u = big_v + sigma / (4.0 * (1.0 - k)) * manifold_energy(scenario, z)
    return CompositeEnergy(V=big_v, U=u, k=k)


def gradient_energy(scenario: ScenarioSpec, p, v, w_hat) -> float:
    """``V + sum_i |w_hat_i - w_i|^2 / (2 lam_i)``, the energy of the gradient laws."""
    err = np.asarray(w_hat, float) - scenario.w_true
    return lyapunov_value(scenario.control, p, v) + manifold_energy(scenario, err)
