"""Fixed-step RK4 integration of the coupled ``(p, v, w_hat)`` system with metric logging."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import adaptation as ad
from .agents import ScenarioSpec, actuated
from .graph import interleave

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e9


class SimulationError(RuntimeError):
    pass


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of the autonomous system ``y' = f(y)``."""
    if not h > 0:
        raise ValueError("step must be positive")
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class TrajectoryLog:
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray | None
    w_hat: np.ndarray
    dis_p: np.ndarray
    dis_v: np.ndarray
    V: np.ndarray
    U: np.ndarray
    znorm: np.ndarray
    r: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return bool(self.meta.get("diverged", False))

    @property
    def disagreement(self) -> np.ndarray:
        return self.dis_p + self.dis_v

    @property
    def p_o(self) -> np.ndarray:
        """Consensus trajectory ``r^T p(t)``."""
        return self.p @ self.r

    @property
    def v_o(self) -> np.ndarray | None:
        return None if self.v is None else self.v @ self.r

    def columns(self) -> list[str]:
        n = self.p.shape[1]
        cols = ["t"] + [f"p_{i + 1}" for i in range(n)]
        if self.v is not None:
            cols += [f"v_{i + 1}" for i in range(n)]
        cols += self.meta.get("what_columns", [f"what_{j + 1}" for j in range(self.w_hat.shape[1])])
        return cols + ["dis_p", "dis_v", "V", "U", "znorm"]

    def table(self) -> np.ndarray:
        parts = [self.t[:, None], self.p]
        if self.v is not None:
            parts.append(self.v)
        parts += [self.w_hat, self.dis_p[:, None], self.dis_v[:, None], self.V[:, None],
                  self.U[:, None], self.znorm[:, None]]
        return np.hstack(parts)

    def write_csv(self, path) -> Path:
        path = Path(path)
        np.savetxt(path, self.table(), delimiter=",", header=",".join(self.columns()),
                   comments="", fmt="%.17g")
        return path

    def write_meta(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.meta, indent=2, sort_keys=True))
        return path


def _what_columns(scenario: ScenarioSpec) -> list[str]:
    return [f"what_{i + 1}_{k + 1}" for i, a in enumerate(scenario.agents) for k in range(a.regressor.m)]


def closed_loop(scenario: ScenarioSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Vector field of the concatenated state ``y = (p, [v,] w_hat)`` for the scenario's scheme."""
    ctrl = scenario.control
    n, m, order = scenario.n, scenario.m, scenario.order
    w_true = scenario.w_true
    scheme = scenario.scheme
    if scheme == "distributed":
        law = ad.distributed_update
    elif scheme == "centralized":
        law = ad.centralized_law
    elif scheme == "example1":
        ad.example1_update(ctrl.lap, np.zeros(n), [], 1.0)  # rejects asymmetric L
        law = ad.example1_law
    elif scheme == "zhang":
        zp = ad.zhang_params(ctrl.lap, scenario.kappa)

        def law(c, p, v, w_hat):
            return ad.zhang_law(c, zp, p, v, w_hat)
    elif scheme == "ideal":
        law = None
    else:
        raise ad.SchemeError(f"unknown scheme {scheme!r}; expected one of {ad.SCHEMES}")
    if scheme in ("example1", "zhang") and order != 1:
        raise ad.SchemeError(f"the {scheme} scheme is defined for first-order agents")
    zeros_m = np.zeros(m)
    # nominal drive as one matvec over (p, v): a1 p + a2 v - g1 L p - g2 L v
    eye = np.eye(n)
    drive = ctrl.alpha1 * eye - ctrl.gamma1 * ctrl.lap
    if order == 2:
        drive = np.hstack([drive, ctrl.alpha2 * eye - ctrl.gamma2 * ctrl.lap])

    def field_(y: np.ndarray) -> np.ndarray:
        p = y[:n]
        v = y[n:2 * n] if order == 2 else None
        w_hat = y[order * n:]
        f = drive @ y[:order * n]
        if law is None:
            w_dot = zeros_m
        else:
            mu, w_dot = law(ctrl, p, v, w_hat)
            q = p if order == 1 else v
            f = f + ctrl.block_sum(ctrl.zeta(q) * (w_true - mu))
        if order == 1:
            return np.concatenate([f, w_dot])
        return np.concatenate([v, f, w_dot])

    return field_


def initial_state(scenario: ScenarioSpec) -> np.ndarray:
    parts = [scenario.p0] + ([scenario.v0] if scenario.order == 2 else []) + [scenario.w_hat0]
    return np.concatenate([np.asarray(a, dtype=float) for a in parts])


def _metrics(scenario: ScenarioSpec, p, v, w_hat):
    ctrl = scenario.control
    tr = scenario.transform
    dis_p = float(np.linalg.norm(tr.W @ p))
    dis_v = 0.0 if v is None else float(np.linalg.norm(tr.W @ v))
    big_v = ad.lyapunov_value(ctrl, p, v)
    if scenario.scheme == "ideal":
        return dis_p, dis_v, big_v, big_v, 0.0
    if scenario.scheme == "distributed":
        z = ad.manifold_coords(scenario, actuated(ctrl, p, v), w_hat)
        big_u = big_v + scenario.gains.sigma / (4.0 * (1.0 - scenario.k)) * ad.manifold_energy(scenario, z)
        return dis_p, dis_v, big_v, big_u, float(np.linalg.norm(z))
    # gradient-type laws aim at w_hat = w, i.e. the manifold with rho = 0
    err = w_hat - scenario.w_true
    return dis_p, dis_v, big_v, big_v + ad.manifold_energy(scenario, err), float(np.linalg.norm(err))


def run(scenario: ScenarioSpec, sample_every: int | None = None) -> TrajectoryLog:
    """Integrate from ``t = 0`` to the horizon and log every ``sample_every`` steps."""
    h = scenario.step
    if not h > 0 or not scenario.horizon > 0:
        raise SimulationError("step and horizon must be positive")
    every = scenario.sample_every if sample_every is None else sample_every
    if every < 1:
        raise SimulationError("sample_every must be >= 1")
    n, order = scenario.n, scenario.order
    f = closed_loop(scenario)
    steps = int(round(scenario.horizon / h))
    y = initial_state(scenario)
    rows_t, rows_y = [0.0], [y]
    diverged, reason, t_fail = False, None, None
    for s in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            y_new = rk4_step(f, y, h)
        if not np.all(np.isfinite(y_new)) or np.abs(y_new).max() > DIVERGENCE_BOUND:
            diverged, t_fail = True, s * h
            reason = "non-finite state" if not np.all(np.isfinite(y_new)) else f"|state| > {DIVERGENCE_BOUND:g}"
            log.warning("run %s diverged at t=%.6g: %s", scenario.name, t_fail, reason)
            if rows_t[-1] != (s - 1) * h:
                rows_t.append((s - 1) * h)
                rows_y.append(y)
            break
        y = y_new
        if s % every == 0 or s == steps:
            rows_t.append(s * h)
            rows_y.append(y)
    ys = np.array(rows_y)
    p = ys[:, :n]
    v = ys[:, n:2 * n] if order == 2 else None
    w_hat = ys[:, order * n:]
    mets = np.array([_metrics(scenario, p[j], None if v is None else v[j], w_hat[j]) for j in range(len(ys))])
    meta = {
        "scenario": scenario.name,
        "scenario_hash": scenario.source.get("_hash"),
        "scheme": scenario.scheme,
        "seed": scenario.seed,
        "step": h,
        "horizon": scenario.horizon,
        "sample_every": every,
        "order": order,
        "n": n,
        "m": scenario.m,
        "k": scenario.k,
        "kappa": scenario.kappa,
        "gains": {key: val for key, val in scenario.gains.to_json().items() if key != "P"},
        "w_true": scenario.w_true.tolist(),
        "diverged": diverged,
        "what_columns": _what_columns(scenario),
    }
    if diverged:
        meta["diverged_at"] = t_fail
        meta["diverged_reason"] = reason
    return TrajectoryLog(
        t=np.array(rows_t), p=p, v=v, w_hat=w_hat,
        dis_p=mets[:, 0], dis_v=mets[:, 1], V=mets[:, 2], U=mets[:, 3], znorm=mets[:, 4],
        r=np.asarray(scenario.transform.r), meta=meta,
    )


def tail_metrics(trajectory: TrajectoryLog, fraction: float = 0.2) -> tuple[float, float]:
    """Mean and max of ``dis_p + dis_v`` over the trailing ``fraction`` of the time span."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if trajectory.diverged:
        raise SimulationError("tail metrics are undefined for a diverged run")
    t = trajectory.t
    if t.size == 0:
        raise SimulationError("empty log")
    start = t[-1] - fraction * (t[-1] - t[0])
    sel = t >= start - 1e-9 * max(1.0, abs(t[-1]))
    window = trajectory.disagreement[sel]
    if window.size == 0:
        raise SimulationError("tail window is empty")
    return float(window.mean()), float(window.max())


def state_at_end(trajectory: TrajectoryLog) -> np.ndarray:
    """Final ``(p, [v,] w_hat)`` row as a flat vector."""
    parts = [trajectory.p[-1]] + ([trajectory.v[-1]] if trajectory.v is not None else []) + [trajectory.w_hat[-1]]
    return np.concatenate(parts)


def x_of(trajectory: TrajectoryLog, j: int) -> np.ndarray:
    """Interleaved agent state ``x`` at logged row ``j``."""
    return interleave(trajectory.p[j], None if trajectory.v is None else trajectory.v[j])
