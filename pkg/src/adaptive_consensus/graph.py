"""Directed weighted graphs, Laplacians and the consensus similarity transform.

Edge convention: an edge ``(j, i, a_ij)`` means agent ``i`` receives information
from agent ``j``, so ``weights[i, j] = a_ij``. Indices in files and in
:func:`build_network` are 1-based; everything stored is 0-based.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import null_space


class GraphError(ValueError):
    """Raised for malformed graphs or graphs violating a structural assumption."""


@dataclass(frozen=True)
class DirectedNetwork:
    n: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if self.n < 2 or w.shape != (self.n, self.n):
            raise GraphError(f"weights must be {self.n}x{self.n} with n >= 2")
        if np.any(np.diag(w) != 0):
            raise GraphError("self-loops are not allowed")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise GraphError("edge weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as 1-based ``(source, target, weight)`` triples."""
        tgt, src = np.nonzero(self.weights)
        return [(int(j) + 1, int(i) + 1, float(self.weights[i, j])) for i, j in zip(tgt, src)]

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}


def build_network(n: int, edges) -> DirectedNetwork:
    """Build a network from 1-based ``(from, to, weight)`` triples."""
    w = np.zeros((n, n))
    seen = set()
    for edge in edges:
        if len(edge) != 3:
            raise GraphError(f"edge {edge!r} is not a (from, to, weight) triple")
        j, i, a = edge
        if int(j) != j or int(i) != i:
            raise GraphError(f"edge {edge!r} has non-integer endpoints")
        j, i = int(j), int(i)
        if not (1 <= j <= n and 1 <= i <= n):
            raise GraphError(f"edge {edge!r} references a node outside 1..{n}")
        if i == j:
            raise GraphError(f"self-edge on node {i}")
        if not a > 0:
            raise GraphError(f"edge {edge!r} has nonpositive weight")
        if (j, i) in seen:
            raise GraphError(f"duplicate edge {j}->{i}")
        seen.add((j, i))
        w[i - 1, j - 1] = float(a)
    return DirectedNetwork(n, w)


def load_network(source) -> DirectedNetwork:
    """Read ``{"n": int, "edges": [[from, to, weight], ...]}`` from a path or dict."""
    if not isinstance(source, dict):
        source = json.loads(Path(source).read_text())
    try:
        return build_network(int(source["n"]), source["edges"])
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph document: {exc}") from exc


def laplacian(net: DirectedNetwork) -> np.ndarray:
    """``L = diag(A 1) - A``; every row sums to zero."""
    a = net.weights
    return np.diag(a.sum(axis=1)) - a


def _successors(lap: np.ndarray) -> list[list[int]]:
    # off-diagonal L_ij < 0 encodes the edge j -> i
    n = lap.shape[0]
    out = [[] for _ in range(n)]
    for i, j in zip(*np.nonzero(lap)):
        if i != j and lap[i, j] < 0:
            out[j].append(int(i))
    return out


def _reaches_all(succ: list[list[int]], root: int) -> bool:
    seen = {root}
    queue = deque([root])
    while queue:
        k = queue.popleft()
        for nxt in succ[k]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(succ)


def has_spanning_tree(lap: np.ndarray) -> tuple[bool, int | None]:
    """Return ``(True, root)`` with the lowest 0-based root reaching every node."""
    succ = _successors(np.asarray(lap))
    for root in range(len(succ)):
        if _reaches_all(succ, root):
            return True, root
    return False, None


def left_null_vector(lap: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Normalized left eigenvector of the zero eigenvalue: ``r^T L = 0``, ``r^T 1 = 1``."""
    lap = np.asarray(lap, dtype=float)
    basis = null_space(lap.T, rcond=tol)
    if basis.shape[1] != 1:
        raise GraphError(
            f"zero eigenvalue has multiplicity {basis.shape[1]}; no directed spanning tree"
        )
    r = basis[:, 0] / basis[:, 0].sum()
    if np.any(r < -tol):
        raise GraphError("left null vector has negative entries")
    return np.clip(r, 0.0, None) / np.clip(r, 0.0, None).sum()


def orthonormal_complement(n: int) -> np.ndarray:
    """Rows form an orthonormal basis of the complement of ``1`` in R^n."""
    q, _ = np.linalg.qr(np.ones((n, 1)), mode="complete")
    return q[:, 1:].T.copy()


def disagreement_projector(w: np.ndarray, order: int) -> np.ndarray:
    """Matrix ``R`` with ``R x = (W p, W v)`` for interleaved ``x = (p1, v1, p2, v2, ...)``.

    For first-order agents ``x = p`` and ``R = W``.
    """
    if order == 1:
        return w.copy()
    m, n = w.shape
    out = np.zeros((2 * m, 2 * n))
    out[:m, 0::2] = w
    out[m:, 1::2] = w
    return out


def interleave(p: np.ndarray, v: np.ndarray | None) -> np.ndarray:
    """Stack agent states as ``x = (p1, v1, ..., pn, vn)``; ``x = p`` when ``v`` is None."""
    if v is None:
        return np.asarray(p, dtype=float)
    return np.column_stack([p, v]).ravel()


@dataclass(frozen=True)
class ConsensusTransform:
    """Spectral objects that reduce the network to disagreement coordinates."""

    r: np.ndarray
    W: np.ndarray
    U_mat: np.ndarray
    J: np.ndarray
    R: np.ndarray
    order: int = 2
    lap: np.ndarray = field(repr=False, default=None)

    def residuals(self) -> dict[str, float]:
        """Sup-norm residuals of every defining identity."""
        n = self.W.shape[1]
        ones = np.ones(n)
        lap = self.lap
        res = {
            "rT_L": float(np.abs(self.r @ lap).max()),
            "rT_1": float(abs(self.r.sum() - 1.0)),
            "W_1": float(np.abs(self.W @ ones).max()),
            "W_U": float(np.abs(self.W @ self.U_mat - np.eye(n - 1)).max()),
            "rT_U": float(np.abs(self.r @ self.U_mat).max()),
            "1rT_UW": float(np.abs(np.outer(ones, self.r) + self.U_mat @ self.W - np.eye(n)).max()),
            "JW_WL": float(np.abs(self.J @ self.W - self.W @ lap).max()),
        }
        if self.order == 2:
            res["R_consensus"] = float(np.abs(self.R @ np.kron(ones, np.eye(2)).T).max())
        else:
            res["R_consensus"] = float(np.abs(self.R @ ones).max())
        return res

    def norm_R(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.R @ x))


def build_transform(lap: np.ndarray, r: np.ndarray | None = None, order: int = 2) -> ConsensusTransform:
    """Construct ``(r, W, U, J, R)`` with ``T = [r^T; W]``, ``T^{-1} = [1, U]``."""
    lap = np.asarray(lap, dtype=float)
    n = lap.shape[0]
    ok, _ = has_spanning_tree(lap)
    if not ok:
        raise GraphError("no directed spanning tree")
    r = left_null_vector(lap) if r is None else np.array(r, dtype=float)
    w = orthonormal_complement(n)
    gram = w @ w.T
    if np.linalg.cond(gram) > 1e12:
        raise GraphError(f"W is numerically rank deficient (cond {np.linalg.cond(gram):.3g})")
    w_pinv = w.T @ np.linalg.inv(gram)
    u = (np.eye(n) - np.outer(np.ones(n), r)) @ w_pinv
    j = w @ lap @ u
    if np.min(np.linalg.eigvals(j).real) <= 0:
        raise GraphError("J has an eigenvalue with nonpositive real part")
    rr = disagreement_projector(w, order)
    if np.linalg.matrix_rank(rr) != rr.shape[0]:
        raise GraphError("R is not full row rank")
    lap_ro = lap.copy()
    for arr in (r, w, u, j, rr, lap_ro):
        arr.setflags(write=False)
    return ConsensusTransform(r=r, W=w, U_mat=u, J=j, R=rr, order=order, lap=lap_ro)
