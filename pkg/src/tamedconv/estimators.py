"""Monte Carlo reductions over coupled trajectories and rate fitting.

Two entry points exist for every statistic: a convenience function taking
a list of trajectories (fine at unit-test scale) and a streaming
collector that consumes the batched node iterator without storing whole
paths, which is what the experiment runner uses.  Collectors accumulate
plain sums, so partial results from path blocks merge exactly and the
final value only depends on the block order, which is fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .noise import NoiseOperator
from .scheme import CoupledTrajectory, TruncationPolicy, iter_coupled_batch
from .spectral import ProjectionIndex, SpectralOperator
from .timegrid import TimeGrid


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    replications: int
    seed: int

    def __post_init__(self):
        if self.replications >= 2 and self.std_error < 0:
            raise ValueError("std_error must be nonnegative")


@dataclass(frozen=True)
class RateFit:
    points: tuple
    slope: float
    intercept: float
    r_squared: float


def fit_rate(points: Sequence[tuple]) -> RateFit:
    """Least-squares slope of log(error) against log(scale)."""
    if len(points) < 3:
        raise ValueError("need at least 3 points for a rate fit")
    scales = np.array([float(s) for s, _ in points])
    errors = np.array([float(e) for _, e in points])
    if np.any(scales <= 0) or np.any(errors <= 0):
        raise ValueError("rate fits need strictly positive scales and errors")
    if not (np.all(np.diff(scales) > 0) or np.all(np.diff(scales) < 0)):
        raise ValueError("scales must be strictly monotone")
    x = np.log(scales)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(tuple((float(s), float(e)) for s, e in points),
                   float(slope), float(intercept), float(r2))


def _power_mean_estimate(samples_p: np.ndarray, p: float, replications: int,
                         seed: int) -> McEstimate:
    """(mean of e^p)^{1/p} with a delta-method standard error."""
    m = float(np.mean(samples_p))
    if m == 0.0:
        return McEstimate(0.0, 0.0, replications, seed)
    se_m = float(np.std(samples_p, ddof=1)) / math.sqrt(replications) \
        if replications >= 2 else 0.0
    value = m ** (1.0 / p)
    se = se_m * value / (p * m)
    return McEstimate(value, se, replications, seed)


class _NodeCollector:
    """Base class: consume (node_index, t, scheme, exact, ...) tuples."""

    def update(self, idx: int, t: float, scheme: np.ndarray, exact: np.ndarray):
        raise NotImplementedError

    def merge(self, other: "_NodeCollector"):
        raise NotImplementedError

    def result(self, seed: int) -> McEstimate:
        raise NotImplementedError


class LpErrorSupCollector(_NodeCollector):
    """Grid-node sup of the p-th-moment coupling error in the gamma norm."""

    def __init__(self, op: SpectralOperator, p: float, gamma: float):
        self.weights = op.fractional_weights(gamma)
        self.p = float(p)
        self.sums: dict = {}   # idx -> [sum e^p, sum e^{2p}, count]

    def _accumulate(self, idx: int, ep: np.ndarray):
        s = self.sums.setdefault(idx, [0.0, 0.0, 0])
        s[0] += float(np.sum(ep))
        s[1] += float(np.sum(ep * ep))
        s[2] += ep.size

    def _samples(self, scheme, exact):
        diff = (scheme - exact) * self.weights
        return np.sqrt(np.sum(diff * diff, axis=-1)) ** self.p

    def update(self, idx, t, scheme, exact):
        self._accumulate(idx, self._samples(scheme, exact))

    def merge(self, other):
        for idx, s in other.sums.items():
            mine = self.sums.setdefault(idx, [0.0, 0.0, 0])
            mine[0] += s[0]
            mine[1] += s[1]
            mine[2] += s[2]

    def result(self, seed: int) -> McEstimate:
        best = None
        for _idx, (s1, s2, cnt) in sorted(self.sums.items()):
            m = s1 / cnt
            if best is None or m > best[0]:
                best = (m, s2, cnt)
        m, s2, cnt = best
        if m == 0.0:
            return McEstimate(0.0, 0.0, cnt, seed)
        var = max(s2 / cnt - m * m, 0.0) * cnt / max(cnt - 1, 1)
        se_m = math.sqrt(var / cnt)
        value = m ** (1.0 / self.p)
        return McEstimate(value, se_m * value / (self.p * m), cnt, seed)


class MomentSupCollector(LpErrorSupCollector):
    """Grid-node sup of the scheme's own p-th moment in the gamma norm."""

    def _samples(self, scheme, exact):
        x = scheme * self.weights
        return np.sqrt(np.sum(x * x, axis=-1)) ** self.p


class ExpMomentSupCollector(_NodeCollector):
    """Grid-node sup of E[exp(eps |O|^2)] with log-domain accumulation."""

    def __init__(self, eps: float):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.eps = float(eps)
        self.log_args: dict = {}  # idx -> list of (paths,) arrays of eps|O|^2

    def update(self, idx, t, scheme, exact):
        a = self.eps * np.sum(scheme * scheme, axis=-1)
        self.log_args.setdefault(idx, []).append(a)

    def merge(self, other):
        for idx, chunks in other.log_args.items():
            self.log_args.setdefault(idx, []).extend(chunks)

    def result(self, seed: int) -> McEstimate:
        return self.result_with_flag(seed)[0]

    def result_with_flag(self, seed: int):
        """Estimate plus a heavy-tail warning flag at the sup node."""
        best = None
        for idx in sorted(self.log_args):
            a = np.concatenate(self.log_args[idx])
            shift = float(np.max(a))
            ex = np.exp(a - shift)  # in (0, 1]
            mean = float(np.mean(ex))
            log_mean = shift + math.log(mean)
            if best is None or log_mean > best[0]:
                best = (log_mean, ex, shift)
        log_mean, ex, shift = best
        cnt = ex.size
        value = math.exp(log_mean)
        se = math.exp(shift) * float(np.std(ex, ddof=1)) / math.sqrt(cnt) \
            if cnt >= 2 else 0.0
        top = max(1, int(round(0.001 * cnt)))
        tail_share = float(np.sum(np.sort(ex)[-top:])) / float(np.sum(ex))
        return McEstimate(value, se, cnt, seed), tail_share > 0.5


class HolderPairsCollector(_NodeCollector):
    """Max over node pairs of the p-th-moment increment quotient.

    Only the nodes named in the pairs are retained, and each earlier node
    is dropped once every pair using it has been consumed.
    """

    def __init__(self, op: SpectralOperator, p: float, gamma: float, rho: float,
                 pairs: Sequence[tuple], times: np.ndarray):
        for i, j in pairs:
            if not i < j:
                raise ValueError(f"pair ({i}, {j}) must satisfy s < t")
        self.weights = op.fractional_weights(gamma)
        self.p = float(p)
        self.rho = float(rho)
        self.pairs = tuple(tuple(pr) for pr in pairs)
        self.times = times
        self.pending: dict = {}
        self.sums: dict = {}  # pair -> [sum e^p, sum e^{2p}, count]

    def update(self, idx, t, scheme, exact):
        if any(idx == i for i, _ in self.pairs):
            self.pending[idx] = scheme.copy()
        for i, j in self.pairs:
            if j == idx:
                diff = (scheme - self.pending[i]) * self.weights
                ep = np.sqrt(np.sum(diff * diff, axis=-1)) ** self.p
                s = self.sums.setdefault((i, j), [0.0, 0.0, 0])
                s[0] += float(np.sum(ep))
                s[1] += float(np.sum(ep * ep))
                s[2] += ep.size
        still_needed = {i for i, j in self.pairs if j > idx}
        for i in list(self.pending):
            if i not in still_needed:
                del self.pending[i]

    def merge(self, other):
        for pair, s in other.sums.items():
            mine = self.sums.setdefault(pair, [0.0, 0.0, 0])
            mine[0] += s[0]
            mine[1] += s[1]
            mine[2] += s[2]

    def result(self, seed: int) -> McEstimate:
        best = None
        for (i, j) in self.pairs:
            s1, s2, cnt = self.sums[(i, j)]
            dt = float(self.times[j] - self.times[i])
            m = s1 / cnt
            q = m ** (1.0 / self.p) / dt ** self.rho if m > 0 else 0.0
            if best is None or q > best[0]:
                best = (q, m, s2, cnt, dt)
        q, m, s2, cnt, dt = best
        if m == 0.0:
            return McEstimate(0.0, 0.0, cnt, seed)
        var = max(s2 / cnt - m * m, 0.0) * cnt / max(cnt - 1, 1)
        se_m = math.sqrt(var / cnt)
        se = se_m * m ** (1.0 / self.p) / (self.p * m) / dt ** self.rho
        return McEstimate(q, se, cnt, seed)


def run_collectors(grid: TimeGrid, op: SpectralOperator, B: NoiseOperator,
                   I: ProjectionIndex, J: ProjectionIndex,
                   policy: TruncationPolicy, n_paths: int, seed: int,
                   collectors: Sequence[_NodeCollector],
                   block_size: int = 5000) -> None:
    """Feed all collectors from n_paths coupled paths, in fixed block order.

    Per-block generators are seeded by spawning from the root seed, so the
    result is independent of how blocks might later be distributed.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    seeds = np.random.SeedSequence(seed).spawn(-(-n_paths // block_size))
    done = 0
    for block_seed in seeds:
        rb = min(block_size, n_paths - done)
        rng = np.random.Generator(np.random.PCG64(block_seed))
        for idx, t, scheme, exact, _chi, _dw in iter_coupled_batch(
                grid, op, B, I, J, policy, rb, rng):
            for c in collectors:
                c.update(idx, t, scheme, exact)
        done += rb


def _stack(trajectories: Sequence[CoupledTrajectory]):
    if not trajectories:
        raise ValueError("empty trajectory batch")
    grid = trajectories[0].grid
    if any(tr.grid.nodes != grid.nodes for tr in trajectories):
        raise ValueError("trajectories must share one grid")
    scheme = np.stack([tr.scheme_path for tr in trajectories], axis=0)
    exact = np.stack([tr.exact_path for tr in trajectories], axis=0)
    return grid, scheme, exact


def _feed(collector: _NodeCollector, grid, scheme, exact):
    for idx in range(len(grid.nodes)):
        collector.update(idx, float(grid.nodes[idx]), scheme[:, idx], exact[:, idx])


def lp_error_sup(trajectories: Sequence[CoupledTrajectory], op: SpectralOperator,
                 p: float, gamma: float, seed: int = 0) -> McEstimate:
    """Grid-node sup of the empirical L^p coupling error in the gamma norm."""
    grid, scheme, exact = _stack(trajectories)
    c = LpErrorSupCollector(op, p, gamma)
    _feed(c, grid, scheme, exact)
    return c.result(seed)


def empirical_moment(trajectories: Sequence[CoupledTrajectory], op: SpectralOperator,
                     p: float, gamma: float, seed: int = 0) -> McEstimate:
    """Grid-node sup of the scheme's empirical p-th moment."""
    grid, scheme, exact = _stack(trajectories)
    c = MomentSupCollector(op, p, gamma)
    _feed(c, grid, scheme, exact)
    return c.result(seed)


def empirical_exp_moment(trajectories: Sequence[CoupledTrajectory], eps: float,
                         seed: int = 0) -> McEstimate:
    """Grid-node sup of the empirical exponential moment."""
    grid, scheme, exact = _stack(trajectories)
    c = ExpMomentSupCollector(eps)
    _feed(c, grid, scheme, exact)
    return c.result(seed)


def holder_quotient(trajectories: Sequence[CoupledTrajectory], op: SpectralOperator,
                    p: float, gamma: float, rho: float,
                    pairs: Sequence[tuple], seed: int = 0) -> McEstimate:
    """Max over node-index pairs of the empirical increment quotient."""
    grid, scheme, exact = _stack(trajectories)
    c = HolderPairsCollector(op, p, gamma, rho, pairs, grid.float_nodes)
    _feed(c, grid, scheme, exact)
    return c.result(seed)


def exact_spatial_error(op: SpectralOperator, B: NoiseOperator, n_kept: int,
                        T: float, gamma: float = 0.0) -> float:
    """Closed-form L2 norm of the dropped modes of the exact convolution.

    The per-mode variance of the convolution at time T is
    (B B^T)_{nn} (1 - e^{2 lambda_n T}) / (2 |lambda_n|); this sums it
    over modes beyond n_kept with gamma-norm weights.  Monotone in T, so
    T is also the sup over [0, T].
    """
    lam = op.eigenvalues
    var = np.diag(B.coeffs @ B.coeffs.T) * (1.0 - np.exp(2.0 * lam * T)) / (2.0 * np.abs(lam))
    w = op.fractional_weights(gamma)
    return float(np.sqrt(np.sum((w ** 2 * var)[n_kept:])))
