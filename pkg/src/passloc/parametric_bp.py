"""Linearized Gaussian message passing over the target/receiver factor graph.

Every message is a scalar Gaussian over one coordinate (x and y are treated
as independent).  Range terms are linearized around the previous iteration's
estimates and the factor-to-variable messages follow closed forms in the
four directional derivatives of that expansion.  All messages are updated in
parallel (flooding) each iteration.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .exceptions import (
    DegenerateLinearizationError,
    DegenerateMessageError,
    InvalidParameterError,
    NoInformationError,
)
from .geometry import MeasurementSet, Priors, coarse_target_search
from .trace import BPResult

__all__ = [
    "GaussianMessage",
    "VACUOUS",
    "LinearizationPoint",
    "linearize",
    "factor_to_variable",
    "fuse_beliefs",
    "variable_to_factor",
    "run_parametric_bp",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-6


class GaussianMessage(NamedTuple):
    mean: float
    variance: float

    @property
    def precision(self) -> float:
        if self.variance == 0.0:
            return math.inf
        return 1.0 / self.variance

    @property
    def is_vacuous(self) -> bool:
        return math.isinf(self.variance)


VACUOUS = GaussianMessage(0.0, math.inf)


class LinearizationPoint(NamedTuple):
    x: float
    y: float
    a: float
    b: float
    d_target: float    # |target|, transmitter leg
    d_link: float      # |target - receiver|, receiver leg
    A1: float
    A2: float
    B1: float
    B2: float


def linearize(target, receiver, eps: float | None = DEFAULT_EPS) -> LinearizationPoint:
    """Distances and unit direction cosines at the expansion point.

    With ``eps=None`` any expansion point on the transmitter or on the receiver
    raises.  Otherwise distances below ``eps`` are clamped up to ``eps``; an
    exactly coincident point still raises because no direction exists there.
    """
    x, y = float(target[0]), float(target[1])
    a, b = float(receiver[0]), float(receiver[1])
    d_t = math.hypot(x, y)
    d_l = math.hypot(x - a, y - b)
    if d_t == 0.0 or d_l == 0.0:
        where = "transmitter" if d_t == 0.0 else "receiver"
        raise DegenerateLinearizationError(f"expansion point ({x}, {y}) coincides with the {where}")
    if eps is not None and (d_t < eps or d_l < eps):
        # keep the direction, bound the magnitude used in the quotients
        ux, uy = x / d_t, y / d_t
        vx, vy = (x - a) / d_l, (y - b) / d_l
        d_t, d_l = max(d_t, eps), max(d_l, eps)
        return LinearizationPoint(x, y, a, b, d_t, d_l, vx, vy, ux, uy)
    return LinearizationPoint(x, y, a, b, d_t, d_l, (x - a) / d_l, (y - b) / d_l, x / d_t, y / d_t)


def _to_target_coord(R, s2, from_receiver: GaussianMessage, A, B, d_t, d_l):
    # message g -> x_i uses a_m -> g (and g -> y_i uses b_m -> g)
    if from_receiver.is_vacuous:
        return GaussianMessage(B * (R - d_l), s2)
    v = from_receiver.variance
    den = 2.0 * s2 + v
    mean = (A * s2 * (R - d_t) + B * (s2 + v) * (R - d_l) + s2 * from_receiver.mean) / den
    return GaussianMessage(mean, s2 * (s2 + v) / den)


def _to_receiver_coord(R, s2, from_target: GaussianMessage, A, B, d_t, d_l):
    # message g -> a_m uses x_i -> g (and g -> b_m uses y_i -> g)
    if from_target.is_vacuous:
        return GaussianMessage(B * (R - d_l) - A * (R - d_t), 2.0 * s2)
    v = from_target.variance
    den = s2 + v
    mean = (B * v * (R - d_l) - A * (s2 + v) * (R - d_t) + s2 * from_target.mean) / den
    return GaussianMessage(mean, s2 * (2.0 * v + s2) / den)


def factor_to_variable(R: float, meas_var: float, incoming, lin: LinearizationPoint):
    """Closed-form Gaussian messages from one range factor to its four coordinates.

    Parameters
    ----------
    R : float
        Measured range for the link.
    meas_var : float
        Range noise variance, must be positive.
    incoming : sequence of GaussianMessage
        Variable-to-factor messages from ``(x_i, y_i, a_m, b_m)`` of the
        previous iteration.  Vacuous messages are handled as the
        infinite-variance limit.
    lin : LinearizationPoint
        Expansion point from :func:`linearize`.

    Returns
    -------
    tuple of GaussianMessage
        Messages to ``(x_i, y_i, a_m, b_m)``.
    """
    if not meas_var > 0:
        raise InvalidParameterError("meas_var must be positive")
    mx, my, ma, mb = incoming
    s2 = float(meas_var)
    to_x = _to_target_coord(R, s2, ma, lin.A1, lin.B1, lin.d_target, lin.d_link)
    to_y = _to_target_coord(R, s2, mb, lin.A2, lin.B2, lin.d_target, lin.d_link)
    to_a = _to_receiver_coord(R, s2, mx, lin.A1, lin.B1, lin.d_target, lin.d_link)
    to_b = _to_receiver_coord(R, s2, my, lin.A2, lin.B2, lin.d_target, lin.d_link)
    return to_x, to_y, to_a, to_b


def fuse_beliefs(prior: GaussianMessage, incoming) -> GaussianMessage:
    """Product of Gaussians: precisions add, means are precision weighted.

    Zero-variance inputs are exact knowledge and override everything else.
    """
    msgs = [prior, *incoming]
    exact = [m.mean for m in msgs if m.variance == 0.0]
    if exact:
        return GaussianMessage(float(np.mean(exact)), 0.0)
    prec = 0.0
    weighted = 0.0
    for m in msgs:
        if m.is_vacuous:
            continue
        p = 1.0 / m.variance
        prec += p
        weighted += p * m.mean
    if prec == 0.0:
        raise NoInformationError("all messages are vacuous")
    return GaussianMessage(weighted / prec, 1.0 / prec)


def variable_to_factor(belief: GaussianMessage, incoming: GaussianMessage) -> GaussianMessage:
    """Divide the belief by the message that came from the recipient factor."""
    if incoming.is_vacuous:
        return belief
    if belief.variance == 0.0:
        return GaussianMessage(belief.mean, 0.0)
    pb, pi = 1.0 / belief.variance, incoming.precision
    prec = pb - pi
    if not prec > 0 or math.isinf(pi):
        raise DegenerateMessageError(f"belief precision {pb} does not exceed incoming {pi}")
    return GaussianMessage((pb * belief.mean - pi * incoming.mean) / prec, 1.0 / prec)


def _damp(new: GaussianMessage, old: GaussianMessage | None, alpha: float) -> GaussianMessage:
    if alpha == 0.0 or old is None or old.is_vacuous or new.is_vacuous:
        return new
    return GaussianMessage((1 - alpha) * new.mean + alpha * old.mean,
                           (1 - alpha) * new.variance + alpha * old.variance)


def run_parametric_bp(priors: Priors, measurements: MeasurementSet, n_iter: int = 40, *,
                      damping: float = 0.0, eps: float = DEFAULT_EPS, init_targets=None,
                      grid_points: int = 21) -> BPResult:
    """Run the Gaussian BP loop and return final beliefs with the estimate trace.

    Targets without a proper prior start their linearization at the best
    point of a ``grid_points x grid_points`` likelihood grid over the arena
    (receivers held at their prior means); ``init_targets`` overrides that.
    ``damping`` mixes each factor-to-variable message with its previous value.
    """
    if n_iter < 1:
        raise InvalidParameterError("n_iter must be at least 1")
    if not 0.0 <= damping < 1.0:
        raise InvalidParameterError("damping must lie in [0, 1)")
    R = measurements.ranges
    A, M = priors.n_targets, priors.n_receivers
    if R.shape != (A, M):
        raise InvalidParameterError(f"measurements have shape {R.shape}, expected {(A, M)}")
    s2 = priors.meas_var

    if priors.target_prior is not None:
        t_prior = [[GaussianMessage(float(mu[c]), priors.target_prior.var) for c in range(2)]
                   for mu in priors.target_prior.means]
    else:
        t_prior = [[VACUOUS, VACUOUS] for _ in range(A)]
    r_prior = [[GaussianMessage(float(mu[c]), float(v)) for c in range(2)]
               for mu, v in zip(priors.receiver_means, priors.receiver_var)]

    if init_targets is not None:
        est_t = np.array(init_targets, dtype=float).reshape(A, 2)
    elif priors.target_prior is not None:
        est_t = priors.target_prior.means.copy()
    else:
        est_t = coarse_target_search(priors, measurements, grid_points)
    est_r = priors.receiver_means.copy()

    # variable -> factor messages, indexed [i][m][coord]
    v2f_t = [[list(t_prior[i]) for _ in range(M)] for i in range(A)]
    v2f_r = [[list(r_prior[m]) for m in range(M)] for _ in range(A)]
    f2v_t = [[[None, None] for _ in range(M)] for _ in range(A)]
    f2v_r = [[[None, None] for _ in range(M)] for _ in range(A)]

    t_tr = np.empty((n_iter + 1, A, 2))
    t_vtr = np.empty((n_iter + 1, A, 2))
    r_tr = np.empty((n_iter + 1, M, 2))
    r_vtr = np.empty((n_iter + 1, M, 2))
    t_tr[0], r_tr[0] = est_t, est_r
    t_vtr[0] = [[p.variance for p in row] for row in t_prior]
    r_vtr[0] = [[p.variance for p in row] for row in r_prior]
    degenerate = 0

    for it in range(1, n_iter + 1):
        for i in range(A):
            for m in range(M):
                lin = linearize(est_t[i], est_r[m], eps)
                mx, my, ma, mb = factor_to_variable(
                    R[i, m], s2[i, m],
                    (v2f_t[i][m][0], v2f_t[i][m][1], v2f_r[i][m][0], v2f_r[i][m][1]), lin)
                old_t, old_r = f2v_t[i][m], f2v_r[i][m]
                f2v_t[i][m] = [_damp(mx, old_t[0], damping), _damp(my, old_t[1], damping)]
                f2v_r[i][m] = [_damp(ma, old_r[0], damping), _damp(mb, old_r[1], damping)]

        t_bel = [[fuse_beliefs(t_prior[i][c], [f2v_t[i][m][c] for m in range(M)]) for c in range(2)]
                 for i in range(A)]
        r_bel = [[fuse_beliefs(r_prior[m][c], [f2v_r[i][m][c] for i in range(A)]) for c in range(2)]
                 for m in range(M)]

        for i in range(A):
            for m in range(M):
                for c in range(2):
                    try:
                        v2f_t[i][m][c] = variable_to_factor(t_bel[i][c], f2v_t[i][m][c])
                    except DegenerateMessageError:
                        v2f_t[i][m][c] = VACUOUS
                        degenerate += 1
                    try:
                        v2f_r[i][m][c] = variable_to_factor(r_bel[m][c], f2v_r[i][m][c])
                    except DegenerateMessageError:
                        v2f_r[i][m][c] = VACUOUS
                        degenerate += 1

        est_t = np.array([[b.mean for b in row] for row in t_bel])
        est_r = np.array([[b.mean for b in row] for row in r_bel])
        t_tr[it], r_tr[it] = est_t, est_r
        t_vtr[it] = [[b.variance for b in row] for row in t_bel]
        r_vtr[it] = [[b.variance for b in row] for row in r_bel]

    return BPResult(
        target_mean=est_t, target_var=t_vtr[-1].copy(),
        receiver_mean=est_r, receiver_var=r_vtr[-1].copy(),
        target_trace=t_tr, target_var_trace=t_vtr,
        receiver_trace=r_tr, receiver_var_trace=r_vtr,
        info={"algorithm": "parametric", "n_iter": n_iter, "damping": damping,
              "degenerate_divisions": degenerate},
    )
