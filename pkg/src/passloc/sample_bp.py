"""Particle-based belief propagation with particle swarm refinement.

Each target and receiver belief is a weighted particle set.  Factor-to-variable
messages are Monte Carlo sums over the sender's particles, particle weights
are the product of incoming messages (times the prior for nodes that have
one), and variable-to-factor messages reuse the same particles with the
recipient's own message divided out.  Before messages are formed, particles
drawn from the previous belief can be pushed towards high-likelihood regions
with a few PSO steps, which lets far fewer particles do the same job.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ._kernels import pair_log_sums
from .exceptions import InvalidParameterError, WeightCollapseError
from .geometry import DEFAULT_ARENA, MeasurementSet, Priors, coarse_target_search, log_likelihood
from .trace import BPResult

log = logging.getLogger(__name__)

__all__ = [
    "Particle",
    "ParticleBelief",
    "PsoConfig",
    "draw_particles",
    "evaluate_message_at",
    "update_weights",
    "pso_refine",
    "resample",
    "systematic_indices",
    "run_sample_bp",
    "write_particle_csv",
    "PARTICLE_COLUMNS",
]

PARTICLE_COLUMNS = ("iter", "node_id", "particle_id", "x", "y", "weight")
MAX_REDRAWS = 3

# rng stream tags, combined with (seed, iteration, node)
_DRAW, _PSO, _REDRAW = 0, 1, 2


class Particle(NamedTuple):
    position: np.ndarray
    weight: float
    velocity: np.ndarray
    local_best: np.ndarray
    local_best_score: float


@dataclass(frozen=True)
class PsoConfig:
    """Acceleration constants, iteration count and inertia on the previous velocity.

    ``n_pso=0`` switches refinement off.
    """

    c1: float = 1.5
    c2: float = 1.5
    n_pso: int = 10
    inertia: float = 0.72

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise InvalidParameterError("PSO acceleration constants must be non-negative")
        if self.n_pso < 0:
            raise InvalidParameterError("n_pso must be non-negative")


@dataclass
class ParticleBelief:
    positions: np.ndarray
    weights: np.ndarray
    velocities: np.ndarray = None
    local_best: np.ndarray = None
    local_best_score: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        n = len(self.positions)
        self.weights = np.asarray(self.weights, dtype=float).reshape(n)
        if self.velocities is None:
            self.velocities = np.zeros((n, 2))
        if self.local_best is None:
            self.local_best = self.positions.copy()
        if self.local_best_score is None:
            self.local_best_score = np.full(n, -np.inf)

    def __len__(self):
        return len(self.positions)

    def particle(self, j: int) -> Particle:
        return Particle(self.positions[j], float(self.weights[j]), self.velocities[j],
                        self.local_best[j], float(self.local_best_score[j]))

    @property
    def global_best_index(self) -> int:
        return int(np.argmax(self.local_best_score))

    @property
    def global_best(self) -> np.ndarray:
        return self.local_best[self.global_best_index]

    @property
    def global_best_score(self) -> float:
        return float(np.max(self.local_best_score))

    def mean(self) -> np.ndarray:
        return self.weights @ self.positions

    def variance(self) -> np.ndarray:
        return self.weights @ (self.positions - self.mean()) ** 2


def systematic_indices(weights, rng) -> np.ndarray:
    """Systematic resampling: one uniform offset, ``L`` evenly spaced pointers."""
    w = np.asarray(weights, dtype=float)
    L = len(w)
    u = (rng.random() + np.arange(L)) / L
    c = np.cumsum(w)
    c /= c[-1]
    return np.minimum(np.searchsorted(c, u, side="right"), L - 1)


def resample(belief: ParticleBelief, rng) -> ParticleBelief:
    """Equal-weight copy of ``belief`` by systematic resampling; PSO state is reset."""
    idx = systematic_indices(belief.weights, rng)
    L = len(idx)
    return ParticleBelief(belief.positions[idx].copy(), np.full(L, 1.0 / L))


def draw_particles(source, count: int, rng, arena=DEFAULT_ARENA) -> ParticleBelief:
    """Equally weighted particles from a belief, a circular Gaussian or a flat prior.

    ``source`` is a :class:`ParticleBelief` (resampled), a ``(mean, var)``
    pair for a circular Gaussian with per-coordinate variance ``var``, or
    ``None`` for a uniform draw over ``arena``.
    """
    if count < 2:
        raise InvalidParameterError("need at least 2 particles")
    if isinstance(source, ParticleBelief):
        idx = systematic_indices(source.weights, rng) if len(source) == count else \
            rng.choice(len(source), size=count, p=source.weights / source.weights.sum())
        pos = source.positions[idx].copy()
    elif source is None:
        xmin, xmax, ymin, ymax = arena
        pos = np.column_stack([rng.uniform(xmin, xmax, count), rng.uniform(ymin, ymax, count)])
    else:
        mean, var = source
        pos = np.asarray(mean, dtype=float) + math.sqrt(var) * rng.standard_normal((count, 2))
    return ParticleBelief(pos, np.full(count, 1.0 / count))


def evaluate_message_at(sender_positions, sender_weights, R, meas_var, query_points, to="target"):
    """Particle estimate of a range-factor message at ``query_points``.

    ``to="target"`` means the senders are receiver particles and the queries
    are target positions; ``to="receiver"`` is the reverse.
    """
    q = np.asarray(query_points, dtype=float).reshape(-1, 2)
    s = np.asarray(sender_positions, dtype=float).reshape(-1, 2)
    w = np.asarray(sender_weights, dtype=float)
    if to == "target":
        rows, _ = pair_log_sums(q, s, np.ones(len(q)), w, float(R), float(meas_var), True, False)
        return np.exp(rows)
    if to == "receiver":
        _, cols = pair_log_sums(s, q, w, np.ones(len(q)), float(R), float(meas_var), False, True)
        return np.exp(cols)
    raise InvalidParameterError(f"to must be 'target' or 'receiver', got {to!r}")


def _normalized_log(logw):
    top = logw.max()
    if not np.isfinite(top):
        return None
    out = logw - top
    return out - math.log(np.exp(out).sum())


def update_weights(belief: ParticleBelief, log_messages, log_prior=None) -> ParticleBelief:
    """Weights proportional to the product of incoming messages (and prior), normalized.

    ``log_messages`` is an ``(L, n_links)`` array or a list of length-``L``
    arrays of log message values at the particles.
    """
    lm = np.column_stack(log_messages) if isinstance(log_messages, (list, tuple)) else \
        np.asarray(log_messages, dtype=float).reshape(len(belief), -1)
    logw = lm.sum(axis=1)
    if log_prior is not None:
        logw = logw + log_prior
    norm = _normalized_log(logw)
    if norm is None:
        raise WeightCollapseError("every particle weight is zero")
    return replace(belief, weights=np.exp(norm))


def pso_refine(belief: ParticleBelief, objective, cfg: PsoConfig, rng) -> ParticleBelief:
    """Move particles with the swarm update and return them at their local bests.

    ``objective`` maps an ``(L, 2)`` array to log-objective values.  Weights
    come back uniform because the moved particles no longer carry the old
    importance weights.
    """
    if cfg.n_pso == 0:
        return belief
    x = belief.positions.copy()
    v = belief.velocities.copy()
    p = belief.local_best.copy()
    ps = objective(p)
    g = p[np.argmax(ps)]
    for _ in range(cfg.n_pso):
        r1 = rng.random(x.shape)
        r2 = rng.random(x.shape)
        v = cfg.inertia * v + cfg.c1 * r1 * (p - x) + cfg.c2 * r2 * (g - x)
        x = x + v
        s = objective(x)
        better = s >= ps
        p[better] = x[better]
        ps[better] = s[better]
        g = p[np.argmax(ps)]
    L = len(x)
    return ParticleBelief(p.copy(), np.full(L, 1.0 / L), v, p, ps)


# ---------------------------------------------------------------------------
# full loop


def _identity(points):
    return points, np.arange(len(points))


def _unique(points):
    # complex keys sort lexicographically and are much faster than axis=0
    keys, inv = np.unique(points[:, 0] + 1j * points[:, 1], return_inverse=True)
    return np.column_stack([keys.real, keys.imag]), inv.ravel()


def _support(unique_pts, inverse, weights, prune=True):
    w = np.bincount(inverse, weights=weights, minlength=len(unique_pts))
    if prune and w.max() > 0:
        keep = w > w.max() * 1e-16
        return unique_pts[keep], w[keep]
    return unique_pts, w


def _gauss_logpdf2(pts, mean, var):
    d2 = ((pts - mean) ** 2).sum(axis=1)
    return -d2 / (2 * var) - math.log(2 * math.pi * var)


@dataclass
class _Node:
    prior_mean: np.ndarray | None
    prior_var: float            # inf for flat, 0 for exactly known
    X: np.ndarray = None        # current particle positions
    logw: np.ndarray = None     # normalized log belief weights
    V: np.ndarray = None        # variable->factor weights per link, columns sum to 1
    P: np.ndarray = None        # particle positions the V weights refer to
    PU: tuple = None            # unique(P)
    extra: dict = field(default_factory=dict)

    def log_prior(self, pts):
        if self.prior_var == 0.0 or math.isinf(self.prior_var):
            return np.zeros(len(pts))
        return _gauss_logpdf2(pts, self.prior_mean, self.prior_var)

    def draw_prior(self, count, rng, arena):
        if math.isinf(self.prior_var):
            return draw_particles(None, count, rng, arena).positions
        if self.prior_var == 0.0:
            return np.tile(self.prior_mean, (count, 1))
        return draw_particles((self.prior_mean, self.prior_var), count, rng).positions


def run_sample_bp(priors: Priors, measurements: MeasurementSet, n_iter: int = 40,
                  n_particles: int = 100, n_receiver_particles: int | None = None,
                  pso: PsoConfig | None = PsoConfig(), seed: int = 0, *,
                  record_particles: bool = False, dedupe: bool = True,
                  grid_points: int = 21) -> BPResult:
    """Particle BP with optional PSO; deterministic given ``seed``.

    Parameters
    ----------
    priors, measurements
        Estimator knowledge and the A x M range matrix.
    n_iter : int
        BP iterations.
    n_particles, n_receiver_particles : int
        Particles per target and per receiver (the latter defaults to the former).
    pso : PsoConfig or None
        ``None`` or ``n_pso=0`` disables swarm refinement.
    seed : int
        Root of the per-(iteration, node) random streams.
    record_particles : bool
        Keep a per-iteration particle dump in ``result.info["particles"]``.
    dedupe : bool
        Evaluate each distinct particle position once.  Resampled copies then
        cost nothing; switch off to time the plain all-pairs evaluation.
    """
    if n_iter < 1:
        raise InvalidParameterError("n_iter must be at least 1")
    L = int(n_particles)
    P_count = L if n_receiver_particles is None else int(n_receiver_particles)
    if L < 2 or P_count < 2:
        raise InvalidParameterError("need at least 2 particles per node")
    pso = pso or PsoConfig(n_pso=0)
    R = measurements.ranges
    A, M = priors.n_targets, priors.n_receivers
    if R.shape != (A, M):
        raise InvalidParameterError(f"measurements have shape {R.shape}, expected {(A, M)}")
    s2 = priors.meas_var
    arena = priors.arena
    uniq_fn = _unique if dedupe else _identity

    def rng_for(it, node, tag, extra=0):
        return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, it, node, tag, extra])

    tp = priors.target_prior
    targets = [_Node(None if tp is None else tp.means[i], math.inf if tp is None else tp.var)
               for i in range(A)]
    receivers = [_Node(priors.receiver_means[m], float(priors.receiver_var[m])) for m in range(M)]
    nodes = targets + receivers
    counts = [L] * A + [P_count] * M
    n_links = [M] * A + [A] * M

    for k, node in enumerate(nodes):
        node.X = node.draw_prior(counts[k], rng_for(0, k, _DRAW), arena)
        node.logw = np.full(counts[k], -math.log(counts[k]))
        node.V = np.full((counts[k], n_links[k]), 1.0 / counts[k])
        node.P = node.X
        node.PU = uniq_fn(node.P)

    est_t = tp.means.copy() if tp is not None else coarse_target_search(priors, measurements, grid_points)
    est_r = priors.receiver_means.copy()

    t_tr = np.empty((n_iter + 1, A, 2))
    t_vtr = np.empty((n_iter + 1, A, 2))
    r_tr = np.empty((n_iter + 1, M, 2))
    r_vtr = np.empty((n_iter + 1, M, 2))
    t_tr[0], r_tr[0] = est_t, est_r
    for k, node in enumerate(nodes):
        var0 = node.X.var(axis=0)
        (t_vtr[0, k] if k < A else r_vtr[0, k - A])[:] = var0
    dumps = []
    redraws = 0

    def target_objective(i):
        def J(pts):
            out = targets[i].log_prior(pts)
            for m in range(M):
                out = out + log_likelihood(R[i, m], pts, est_r[m], s2[i, m])
            return out
        return J

    def receiver_objective(m):
        def J(pts):
            out = receivers[m].log_prior(pts)
            for i in range(A):
                out = out + log_likelihood(R[i, m], est_t[i], pts, s2[i, m])
            return out
        return J

    def incoming_target(i, m, XU):
        # message g_im -> x_i at the unique target points XU
        snd = receivers[m]
        q, wq = _support(*snd.PU, snd.V[:, i], prune=dedupe)
        rows, _ = pair_log_sums(XU, q, np.ones(len(XU)), wq, R[i, m], s2[i, m], True, False)
        return rows

    def incoming_receiver(i, m, XU):
        snd = targets[i]
        t, wt = _support(*snd.PU, snd.V[:, m], prune=dedupe)
        _, cols = pair_log_sums(t, XU, wt, np.ones(len(XU)), R[i, m], s2[i, m], False, True)
        return cols

    for it in range(1, n_iter + 1):
        # draw from the previous belief, then refine
        for k, node in enumerate(nodes):
            rng = rng_for(it, k, _DRAW)
            bel = ParticleBelief(node.P, np.exp(node.logw))
            drawn = resample(bel, rng)
            skip_pso = pso.n_pso == 0 or node.prior_var == 0.0
            if not skip_pso:
                J = target_objective(k) if k < A else receiver_objective(k - A)
                drawn = pso_refine(drawn, J, pso, rng_for(it, k, _PSO))
            node.X = drawn.positions

        uniq = [uniq_fn(node.X) for node in nodes]
        logmsg = [np.zeros((len(uniq[k][0]), n_links[k])) for k in range(len(nodes))]
        for i in range(A):
            XU_t, _ = uniq[i]
            for m in range(M):
                XU_r, _ = uniq[A + m]
                tgt, rcv = targets[i], receivers[m]
                same = (np.array_equal(XU_t, tgt.PU[0]) and np.array_equal(XU_r, rcv.PU[0]))
                if same:
                    _, wt = _support(*tgt.PU, tgt.V[:, m], prune=False)
                    _, wq = _support(*rcv.PU, rcv.V[:, i], prune=False)
                    rows, cols = pair_log_sums(XU_t, XU_r, wt, wq, R[i, m], s2[i, m], True, True)
                else:
                    rows = incoming_target(i, m, XU_t)
                    cols = incoming_receiver(i, m, XU_r)
                logmsg[i][:, m] = rows
                logmsg[A + m][:, i] = cols

        for k, node in enumerate(nodes):
            XU, inv = uniq[k]
            lm = logmsg[k][inv]
            logw = node.log_prior(node.X) + lm.sum(axis=1)
            norm = _normalized_log(logw)
            attempt = 0
            while norm is None:
                if attempt == MAX_REDRAWS:
                    raise WeightCollapseError(
                        f"{'target' if k < A else 'receiver'} {k if k < A else k - A}: "
                        f"weights collapsed after {MAX_REDRAWS} re-draws at iteration {it}")
                attempt += 1
                redraws += 1
                log.warning("weight collapse at node %d iteration %d, re-drawing from prior", k, it)
                node.X = node.draw_prior(counts[k], rng_for(it, k, _REDRAW, attempt), arena)
                XU, inv = uniq_fn(node.X)
                cols = []
                for j in range(n_links[k]):
                    cols.append(incoming_target(k, j, XU) if k < A else incoming_receiver(j, k - A, XU))
                lm = np.column_stack(cols)[inv]
                logw = node.log_prior(node.X) + lm.sum(axis=1)
                norm = _normalized_log(logw)
            node.logw = norm
            # variable -> factor: belief with the recipient's own message divided out
            V = np.empty_like(lm)
            for j in range(n_links[k]):
                col = _normalized_log(norm - lm[:, j])
                V[:, j] = np.full(len(norm), 1.0 / len(norm)) if col is None else np.exp(col)
            node.V = V
            node.P = node.X
            node.PU = uniq_fn(node.P)

        for k, node in enumerate(nodes):
            w = np.exp(node.logw)
            if node.prior_var == 0.0:
                mean, var = node.prior_mean, np.zeros(2)
            else:
                mean = w @ node.X
                var = w @ (node.X - mean) ** 2
            if k < A:
                est_t[k], t_vtr[it, k] = mean, var
            else:
                est_r[k - A], r_vtr[it, k - A] = mean, var
            if record_particles:
                dumps.append((it, k, node.X.copy(), w))
        t_tr[it], r_tr[it] = est_t, est_r

    info = {"algorithm": "sample", "n_iter": n_iter, "n_particles": L,
            "n_receiver_particles": P_count, "pso": vars(pso), "seed": seed, "redraws": redraws,
            "dedupe": dedupe}
    if record_particles:
        info["particles"] = dumps
    return BPResult(
        target_mean=est_t.copy(), target_var=t_vtr[-1].copy(),
        receiver_mean=est_r.copy(), receiver_var=r_vtr[-1].copy(),
        target_trace=t_tr, target_var_trace=t_vtr, receiver_trace=r_tr, receiver_var_trace=r_vtr,
        info=info,
    )


def write_particle_csv(dumps, fh) -> None:
    """Write a particle dump; ``node_id`` counts targets first, then receivers."""
    writer = csv.writer(fh)
    writer.writerow(PARTICLE_COLUMNS)
    for it, node, pos, w in dumps:
        for j in range(len(pos)):
            writer.writerow((it, node, j, float(pos[j, 0]), float(pos[j, 1]), float(w[j])))
