"""Agent dynamics, monomial uncertainty regressors and the nominal / uncertain closed loops.

Each agent obeys ``p' = v``, ``v' = a1 p + a2 v + zeta(v) w + u`` (second order) or
``p' = a1 p + zeta(p) w + u`` (first order). The variable fed to the regressor
(``v`` or ``p``) is called the *actuated* state below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ConsensusTransform, DirectedNetwork
from .stability import GainCertificate


@dataclass(frozen=True)
class RegressorSpec:
    """Basis ``zeta(v) = [v**k for k in exponents]`` with adaptation gain ``lam``.

    The matching antiderivative is ``rho(v) = -lam [v**(k+1) / (k+1)]``, so that
    ``d rho / dv = -lam zeta(v)^T`` and ``rho(0) = 0``.
    """

    exponents: tuple[int, ...]
    lam: float

    def __post_init__(self):
        exps = tuple(int(k) for k in self.exponents)
        if any(k < 0 for k in exps):
            raise ValueError("monomial exponents must be nonnegative")
        if not self.lam > 0:
            raise ValueError("adaptation gain lambda must be positive")
        object.__setattr__(self, "exponents", exps)

    @property
    def m(self) -> int:
        return len(self.exponents)


def eval_zeta(reg: RegressorSpec, v: float) -> np.ndarray:
    return np.array([v**k for k in reg.exponents], dtype=float)


def eval_rho(reg: RegressorSpec, v: float) -> np.ndarray:
    return np.array([-reg.lam * v ** (k + 1) / (k + 1) for k in reg.exponents], dtype=float)


def eval_drho(reg: RegressorSpec, v: float) -> np.ndarray:
    """Analytic derivative of :func:`eval_rho`, equal to ``-lam * zeta(v)``."""
    return np.array([-reg.lam * v**k for k in reg.exponents], dtype=float)


def gradient_check(reg: RegressorSpec, v: float, step: float = 1e-5) -> float:
    """Central-difference error ``|d rho/dv + lam zeta|`` scaled by ``1 + ||zeta||``."""
    num = (eval_rho(reg, v + step) - eval_rho(reg, v - step)) / (2 * step)
    zeta = eval_zeta(reg, v)
    if zeta.size == 0:
        return 0.0
    scale = 1.0 + np.linalg.norm(zeta)
    return float(np.abs(num + reg.lam * zeta).max() / scale)


@dataclass(frozen=True)
class AgentParams:
    alpha1: float
    alpha2: float
    regressor: RegressorSpec
    w_true: np.ndarray

    def __post_init__(self):
        w = np.array(self.w_true, dtype=float).reshape(-1)
        if w.size != self.regressor.m:
            raise ValueError(
                f"w_true has {w.size} entries but the regressor has {self.regressor.m} terms"
            )
        object.__setattr__(self, "w_true", w)


@dataclass(frozen=True)
class ControlSpec:
    """Everything a controller may know. ``w_true`` is deliberately absent."""

    order: int
    lap: np.ndarray
    alpha1: float
    alpha2: float
    gamma1: float
    gamma2: float
    exps: np.ndarray   # exponent of each parameter
    owner: np.ndarray  # agent index owning each parameter
    lam: np.ndarray    # adaptation gain of each parameter
    P: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.lap.shape[0]

    @property
    def m(self) -> int:
        return self.exps.size

    def zeta(self, q: np.ndarray) -> np.ndarray:
        """Flattened regressor values ``zeta_i(q_i)`` over all parameters."""
        return q[self.owner] ** self.exps

    def rho(self, q: np.ndarray) -> np.ndarray:
        e1 = self.exps + 1
        return -self.lam * q[self.owner] ** e1 / e1

    def block_sum(self, per_param: np.ndarray) -> np.ndarray:
        """Sum a per-parameter vector into per-agent totals."""
        return np.bincount(self.owner, weights=per_param, minlength=self.n)

    def blocks(self, flat: np.ndarray) -> list[np.ndarray]:
        return [flat[self.owner == i] for i in range(self.n)]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    order: int
    network: DirectedNetwork
    transform: ConsensusTransform
    agents: tuple[AgentParams, ...]
    gains: GainCertificate
    p0: np.ndarray
    v0: np.ndarray | None
    w_hat0: np.ndarray
    scheme: str
    step: float = 1e-3
    horizon: float = 30.0
    sample_every: int = 10
    seed: int = 0
    k: float = 0.5
    kappa: float = 1.0
    source: dict = field(default_factory=dict, repr=False, compare=False)
    control: ControlSpec = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.network.n
        if len(self.agents) != n:
            raise ValueError(f"{len(self.agents)} agents given for an {n}-node network")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if np.shape(self.p0) != (n,) or (self.order == 2 and np.shape(self.v0) != (n,)):
            raise ValueError("initial state has the wrong dimension")
        if np.shape(self.w_hat0) != (self.m,):
            raise ValueError(f"w_hat0 must have {self.m} entries")
        a1 = {a.alpha1 for a in self.agents}
        a2 = {a.alpha2 for a in self.agents}
        if len(a1) > 1 or len(a2) > 1:
            raise ValueError("all agents must share alpha1 and alpha2")
        exps = np.array([k for a in self.agents for k in a.regressor.exponents], dtype=float)
        owner = np.array([i for i, a in enumerate(self.agents) for _ in a.regressor.exponents], dtype=int)
        lam = np.array([a.regressor.lam for a in self.agents for _ in a.regressor.exponents], dtype=float)
        ctrl = ControlSpec(
            order=self.order,
            lap=self.transform.lap,
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            gamma1=self.gains.gamma1,
            gamma2=self.gains.gamma2,
            exps=exps,
            owner=owner,
            lam=lam,
            P=self.gains.P,
            R=self.transform.R,
        )
        object.__setattr__(self, "control", ctrl)

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def m(self) -> int:
        return sum(a.regressor.m for a in self.agents)

    @property
    def alpha1(self) -> float:
        return self.agents[0].alpha1

    @property
    def alpha2(self) -> float:
        return self.agents[0].alpha2

    @property
    def w_true(self) -> np.ndarray:
        return np.concatenate([a.w_true for a in self.agents]) if self.m else np.zeros(0)

    @property
    def lam_per_param(self) -> np.ndarray:
        return self.control.lam


def actuated(ctrl: ControlSpec, p: np.ndarray, v: np.ndarray | None) -> np.ndarray:
    """The state entering the regressors: ``v`` for second order, ``p`` for first."""
    return p if ctrl.order == 1 else v


def nominal_drive(ctrl: ControlSpec, p: np.ndarray, v: np.ndarray | None) -> np.ndarray:
    """Right-hand side of the actuated channel under the ideal controller."""
    lap = ctrl.lap
    if ctrl.order == 1:
        return ctrl.alpha1 * p - ctrl.gamma1 * (lap @ p)
    return ctrl.alpha1 * p + ctrl.alpha2 * v - ctrl.gamma1 * (lap @ p) - ctrl.gamma2 * (lap @ v)


def nominal_field(scenario: ScenarioSpec, p, v=None):
    """``(p', v')`` of the uncertainty-free closed loop; ``(p',)`` for first order."""
    f = nominal_drive(scenario.control, np.asarray(p, float), None if v is None else np.asarray(v, float))
    if scenario.order == 1:
        return (f,)
    return np.asarray(v, float).copy(), f


def uncertain_field(scenario: ScenarioSpec, p, v, mu):
    """Closed loop with uncertainty ``zeta_i (w_i - mu_i)`` added to the actuated channel."""
    ctrl = scenario.control
    p = np.asarray(p, float)
    v = None if v is None else np.asarray(v, float)
    mu = np.asarray(mu, float)
    if mu.shape != (ctrl.m,):
        raise ValueError(f"mu must have {ctrl.m} entries")
    f = nominal_drive(ctrl, p, v)
    zeta = ctrl.zeta(actuated(ctrl, p, v))
    f = f + ctrl.block_sum(zeta * (scenario.w_true - mu))
    if scenario.order == 1:
        return (f,)
    return v.copy(), f
