"""Matrix-geometric solution of level-independent QBDs with a finite boundary.

Levels ``0 .. b-1`` carry their own blocks; from level ``b`` on the chain is
homogeneous with blocks ``A0`` (one level up), ``A1`` (within level) and
``A2`` (one level down). All levels share the phase dimension ``m``. The
stationary vector satisfies ``pi_{b+n} = pi_b R^n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class NoConvergence(RuntimeError):
    pass


class SingularBoundary(RuntimeError):
    pass


@dataclass(frozen=True)
class QbdBlocks:
    """``local[l]``, ``up[l]`` and ``down[l]`` describe boundary level ``l``
    (``down[0]`` is ignored). ``up[b-1]`` feeds the first repeating level,
    which returns to ``b-1`` through ``A2``."""

    local: Sequence[np.ndarray]
    up: Sequence[np.ndarray]
    down: Sequence[Optional[np.ndarray]]
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    phase_labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        a0, a1, a2 = (np.asarray(x, dtype=float) for x in (self.A0, self.A1, self.A2))
        m = a1.shape[0]
        for blk in (a0, a1, a2):
            if blk.shape != (m, m):
                raise ValueError("repeating blocks must be square with a common size")
        b = len(self.local)
        if b < 1 or len(self.up) != b or len(self.down) != b:
            raise ValueError("need at least one boundary level and matching block lists")
        local = tuple(np.asarray(x, dtype=float) for x in self.local)
        up = tuple(np.asarray(x, dtype=float) for x in self.up)
        down = (np.zeros((m, m)),) + tuple(np.asarray(x, dtype=float) for x in self.down[1:])
        for blk in local + up + down:
            if blk.shape != (m, m):
                raise ValueError("boundary blocks must match the phase dimension")
        for name, val in (("A0", a0), ("A1", a1), ("A2", a2), ("local", local),
                          ("up", up), ("down", down)):
            object.__setattr__(self, name, val)

    @property
    def m(self) -> int:
        return self.A1.shape[0]

    @property
    def n_boundary(self) -> int:
        return len(self.local)

    def level_blocks(self, level: int):
        """(down, local, up) blocks for ``level``."""
        b = self.n_boundary
        if level < b:
            return self.down[level], self.local[level], self.up[level]
        return self.A2, self.A1, self.A0

    def generator(self, n_levels: int) -> np.ndarray:
        """Generator truncated to the first ``n_levels`` levels (last level's
        upward rates are dropped, so its row sums are not zero)."""
        m = self.m
        q = np.zeros((n_levels * m, n_levels * m))
        for lvl in range(n_levels):
            d, loc, u = self.level_blocks(lvl)
            s = slice(lvl * m, (lvl + 1) * m)
            q[s, s] = loc
            if lvl > 0:
                q[s, (lvl - 1) * m:lvl * m] = d
            if lvl + 1 < n_levels:
                q[s, (lvl + 1) * m:(lvl + 2) * m] = u
        return q

    def structural_errors(self, atol: float = 1e-10) -> list:
        """Row-sum and sign problems of every distinct level; empty if valid."""
        errors = []
        for lvl in range(self.n_boundary + 1):
            d, loc, u = self.level_blocks(lvl)
            if lvl == 0:
                d = np.zeros_like(loc)
            off = loc - np.diag(np.diag(loc))
            if (off < 0).any() or (d < 0).any() or (u < 0).any():
                errors.append(f"negative off-diagonal rate at level {lvl}")
            rows = (d + loc + u).sum(axis=1)
            scale = max(1.0, np.abs(loc).max())
            if np.abs(rows).max() > atol * scale:
                errors.append(f"row sums {rows} nonzero at level {lvl}")
        return errors


@dataclass(frozen=True)
class StationaryDistribution:
    boundary_probs: tuple
    pi_b: np.ndarray
    R: np.ndarray
    residual: float
    iterations: int

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_probs)

    def level_probs(self, level: int) -> np.ndarray:
        if level < self.n_boundary:
            return self.boundary_probs[level]
        return self.pi_b @ np.linalg.matrix_power(self.R, level - self.n_boundary)

    def _fund(self):
        return np.linalg.inv(np.eye(self.R.shape[0]) - self.R)

    def total_mass(self) -> float:
        tail = self.pi_b @ self._fund() @ np.ones(self.R.shape[0])
        return float(sum(p.sum() for p in self.boundary_probs) + tail)

    def mean_level(self) -> float:
        m = self.R.shape[0]
        b = self.n_boundary
        ones = np.ones(m)
        n = self._fund()
        head = sum(lvl * p.sum() for lvl, p in enumerate(self.boundary_probs))
        tail = b * (self.pi_b @ n @ ones) + self.pi_b @ self.R @ n @ n @ ones
        return float(head + tail)

    def phase_marginal(self) -> np.ndarray:
        """Probability of each phase summed over all levels."""
        return sum(self.boundary_probs) + self.pi_b @ self._fund()

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.R))))


def rate_residual(R, A0, A1, A2) -> float:
    return float(np.abs(A0 + R @ A1 + R @ R @ A2).sum(axis=1).max())


def _log_reduction(A0, A1, A2, max_iter):
    m = A1.shape[0]
    eye = np.eye(m)
    inv = np.linalg.inv(-A1)
    low = inv @ A2
    high = inv @ A0
    g = low.copy()
    t = high.copy()
    for it in range(1, max_iter + 1):
        u = high @ low + low @ high
        w = np.linalg.inv(eye - u)
        low = w @ (low @ low)
        high = w @ (high @ high)
        g = g + t @ low
        t = t @ high
        if np.abs(t).max() < 1e-16 or np.abs(1.0 - g.sum(axis=1)).max() < 1e-15:
            break
    else:
        raise NoConvergence(f"logarithmic reduction did not converge in {max_iter} steps")
    r = A0 @ np.linalg.inv(-(A1 + A0 @ g))
    return r, it


def _natural(A0, A1, A2, tol, max_iter, r=None):
    inv = np.linalg.inv(A1)
    r = np.zeros_like(A1) if r is None else r
    for it in range(1, max_iter + 1):
        r = -(A0 + r @ r @ A2) @ inv
        if rate_residual(r, A0, A1, A2) <= tol:
            return r, it
    raise NoConvergence(f"R iteration did not reach residual {tol} in {max_iter} steps")


def solve_rate_matrix(A0, A1, A2, tol=1e-12, max_iter=100_000, method="log-reduction"):
    if method == "log-reduction":
        r, it = _log_reduction(A0, A1, A2, max_iter)
        if rate_residual(r, A0, A1, A2) > tol:
            r, more = _natural(A0, A1, A2, tol, max_iter, r)
            it += more
    elif method == "natural":
        r, it = _natural(A0, A1, A2, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    return r, it


def solve_qbd(blocks: QbdBlocks, tol: float = 1e-12, max_iter: int = 100_000,
              method: str = "log-reduction") -> StationaryDistribution:
    A0, A1, A2 = blocks.A0, blocks.A1, blocks.A2
    r, it = solve_rate_matrix(A0, A1, A2, tol, max_iter, method)
    res = rate_residual(r, A0, A1, A2)
    if not np.isfinite(r).all() or res > tol:
        raise NoConvergence(f"rate matrix residual {res:.3g} exceeds {tol:.3g}")
    sr = float(np.max(np.abs(np.linalg.eigvals(r))))
    if sr >= 1.0 - 1e-14:
        raise NoConvergence(f"spectral radius of R is {sr:.6g}; repeating part not positive recurrent")

    m = blocks.m
    b = blocks.n_boundary
    n = (b + 1) * m
    # x @ M = 0 with x = (pi_0, ..., pi_b)
    M = np.zeros((n, n))
    for lvl in range(b + 1):
        s = slice(lvl * m, (lvl + 1) * m)
        if lvl < b:
            M[s, s] = blocks.local[lvl]
            M[s, (lvl + 1) * m:(lvl + 2) * m] = blocks.up[lvl]
        else:
            M[s, s] = A1 + r @ A2
        if lvl > 0:
            M[s, (lvl - 1) * m:lvl * m] = blocks.down[lvl] if lvl < b else A2
    norm = np.ones(n)
    norm[b * m:] = np.linalg.inv(np.eye(m) - r) @ np.ones(m)
    aug = np.column_stack([M, norm])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    if np.linalg.matrix_rank(aug) < n:
        raise SingularBoundary("boundary equations are rank deficient")
    x, *_ = np.linalg.lstsq(aug.T, rhs, rcond=None)
    # tiny negative entries are rounding noise on unreachable phases
    x[np.abs(x) < 1e-15] = 0.0
    if (x < -1e-10).any():
        raise SingularBoundary(f"boundary solution has negative mass {x.min():.3g}")
    x = np.clip(x, 0.0, None)
    probs = tuple(x[lvl * m:(lvl + 1) * m] for lvl in range(b))
    return StationaryDistribution(probs, x[b * m:], r, res, it)


def homogeneous_qbd(A0, A1, A2) -> QbdBlocks:
    """QBD whose level 0 only lacks the downward transitions."""
    A0, A1, A2 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (A0, A1, A2))
    level0 = A1 + np.diag(A2.sum(axis=1))
    return QbdBlocks([level0], [A0], [None], A0, A1, A2)
