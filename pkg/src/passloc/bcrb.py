"""Bayesian Cramer-Rao bound for joint target/receiver position estimation.

The Fisher information of the stacked parameter ``[x_1..x_A, theta_1..theta_M]``
is split into target (``F11``), cross (``F12``) and receiver (``F22``) blocks.
Equivalent information for one group is the Schur complement that eliminates
the other group; the position bound of a node is the trace of its 2x2 block
of the inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .exceptions import DegenerateGeometryError, RankDeficiencyError
from .geometry import Scenario

__all__ = [
    "PartialDerivs",
    "FimBlocks",
    "partial_derivatives",
    "assemble_fim",
    "efim_target",
    "efim_receiver",
    "bcrb_position",
    "bcrb_table",
    "COND_LIMIT",
]

COND_LIMIT = 1e12


class PartialDerivs(NamedTuple):
    """Gradient of one bistatic range: ``(A, B)`` w.r.t. the target, ``(C, D)`` w.r.t. the receiver."""

    A: float
    B: float
    C: float
    D: float


def partial_derivatives(target, receiver) -> PartialDerivs:
    x, y = float(target[0]), float(target[1])
    a, b = float(receiver[0]), float(receiver[1])
    d_t = math.hypot(x, y)
    d_l = math.hypot(x - a, y - b)
    if d_t == 0.0:
        raise DegenerateGeometryError(f"target ({x}, {y}) sits on the transmitter")
    if d_l == 0.0:
        raise DegenerateGeometryError(f"target ({x}, {y}) sits on receiver ({a}, {b})")
    return PartialDerivs(x / d_t + (x - a) / d_l, y / d_t + (y - b) / d_l, (a - x) / d_l, (b - y) / d_l)


@dataclass(frozen=True)
class FimBlocks:
    F11: np.ndarray
    F12: np.ndarray
    F22: np.ndarray

    @property
    def F21(self) -> np.ndarray:
        return self.F12.T

    @property
    def n_targets(self) -> int:
        return self.F11.shape[0] // 2

    @property
    def n_receivers(self) -> int:
        return self.F22.shape[0] // 2

    def full(self) -> np.ndarray:
        return np.block([[self.F11, self.F12], [self.F21, self.F22]])


def assemble_fim(scenario: Scenario, include_prior: bool = True) -> FimBlocks:
    """FIM at the true positions.

    Receivers with zero prior variance get infinite prior information on
    their diagonal; they are treated as perfectly known downstream.  Targets
    with a proper Gaussian prior get its precision on their diagonal, flat
    ones get nothing.
    """
    A, M = scenario.n_targets, scenario.n_receivers
    F11 = np.zeros((2 * A, 2 * A))
    F12 = np.zeros((2 * A, 2 * M))
    F22 = np.zeros((2 * M, 2 * M))
    for i, t in enumerate(scenario.targets):
        for m, r in enumerate(scenario.receivers):
            var = scenario.meas_var[i, m]
            if var == 0.0:
                raise RankDeficiencyError(f"link ({i}, {m}) has zero noise; information is unbounded")
            g = np.array(partial_derivatives(t, r))
            gt, gr = g[:2], g[2:]
            F11[2 * i:2 * i + 2, 2 * i:2 * i + 2] += np.outer(gt, gt) / var
            F22[2 * m:2 * m + 2, 2 * m:2 * m + 2] += np.outer(gr, gr) / var
            F12[2 * i:2 * i + 2, 2 * m:2 * m + 2] = np.outer(gt, gr) / var
    if include_prior:
        with np.errstate(divide="ignore"):
            prec = 1.0 / scenario.receiver_prior_var
        F22 += np.diag(np.repeat(prec, 2))
        if scenario.target_prior is not None:
            F11 += np.eye(2 * A) / scenario.target_prior.var
    return FimBlocks(F11, F12, F22)


def _known(F: np.ndarray) -> np.ndarray:
    """Node indices (2x2 blocks) with infinite information."""
    diag = np.diag(F).reshape(-1, 2)
    return np.flatnonzero(np.isinf(diag).any(axis=1))


def _block_diag_inverse(F: np.ndarray, kind: str) -> np.ndarray:
    """Inverse of a 2x2-block-diagonal matrix, zero for nodes with infinite information."""
    n = F.shape[0] // 2
    out = np.zeros_like(F)
    for k in range(n):
        blk = F[2 * k:2 * k + 2, 2 * k:2 * k + 2]
        if np.isinf(blk).any():
            continue
        if np.linalg.cond(blk) > COND_LIMIT:
            raise RankDeficiencyError(f"information block of {kind} {k} is singular")
        out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = np.linalg.inv(blk)
    return out


def efim_target(fim: FimBlocks) -> np.ndarray:
    """Equivalent target information ``F11 - F12 F22^-1 F21``."""
    S = fim.F11 - fim.F12 @ _block_diag_inverse(fim.F22, "receiver") @ fim.F21
    return 0.5 * (S + S.T)


def efim_receiver(fim: FimBlocks) -> np.ndarray:
    """Equivalent receiver information ``F22 - F21 F11^-1 F12``."""
    known = _known(fim.F22)
    F22 = fim.F22.copy()
    F12 = fim.F12.copy()
    for k in known:
        # known receivers: keep the infinite diagonal, drop coupling terms
        F12[:, 2 * k:2 * k + 2] = 0.0
    S = F22 - F12.T @ _block_diag_inverse(fim.F11, "target") @ F12
    return np.where(np.isinf(F22), F22, 0.5 * (S + S.T))


def _stable_inverse(F: np.ndarray) -> np.ndarray:
    known = _known(F)
    keep = np.setdiff1d(np.arange(F.shape[0] // 2), known)
    idx = np.ravel(np.column_stack([2 * keep, 2 * keep + 1]))
    out = np.zeros_like(F)
    if len(idx) == 0:
        return out
    sub = F[np.ix_(idx, idx)]
    if not np.all(np.isfinite(sub)) or np.linalg.cond(sub) > COND_LIMIT:
        raise RankDeficiencyError("equivalent information matrix is singular")
    try:
        c = linalg.cho_factor(sub)
    except linalg.LinAlgError as exc:
        raise RankDeficiencyError("equivalent information matrix is not positive definite") from exc
    out[np.ix_(idx, idx)] = linalg.cho_solve(c, np.eye(len(idx)))
    return out


def bcrb_position(efim: np.ndarray, node: int) -> float:
    """Bound on the 2-D position MSE of ``node``: trace of its block of ``efim^-1``."""
    inv = _stable_inverse(np.asarray(efim, dtype=float))
    blk = inv[2 * node:2 * node + 2, 2 * node:2 * node + 2]
    return float(np.trace(blk))


def bcrb_table(scenario: Scenario) -> list[tuple[str, int, float]]:
    """``(node_kind, node_id, bound_m2)`` for every target then every receiver."""
    fim = assemble_fim(scenario)
    ft, fr = efim_target(fim), efim_receiver(fim)
    inv_t, inv_r = _stable_inverse(ft), _stable_inverse(fr)
    rows = [("target", i, float(np.trace(inv_t[2 * i:2 * i + 2, 2 * i:2 * i + 2])))
            for i in range(scenario.n_targets)]
    rows += [("receiver", m, float(np.trace(inv_r[2 * m:2 * m + 2, 2 * m:2 * m + 2])))
             for m in range(scenario.n_receivers)]
    return rows
