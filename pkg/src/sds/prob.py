"""Probability primitives shared by the sampler and the exact scorer.

Scalar draws use the stdlib Mersenne Twister (far cheaper per call than
numpy); scenario mixes are drawn in numpy batches. Both generators are
seeded from one numpy ``SeedSequence`` per stream, so child streams split
off a parent seed stay reproducible in parallel runs.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass
from itertools import accumulate
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

NEG_INF = float("-inf")


class DisjointSupportError(ValueError):
    """Raised when a product of experts has no outcome both experts allow."""


@dataclass(frozen=True)
class Categorical:
    outcomes: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.outcomes) != len(self.probs):
            raise ValueError("outcomes and probs differ in length")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ValueError("duplicate outcome labels")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_weights(cls, weights: Mapping[Hashable, float]) -> "Categorical":
        """Normalize nonnegative weights; outcome order follows the mapping."""
        total = math.fsum(weights.values())
        if total <= 0:
            raise ValueError("weights sum to zero")
        outcomes = tuple(weights)
        probs = [weights[o] / total for o in outcomes]
        # push rounding residue into the largest entry so the sum check holds
        resid = 1.0 - math.fsum(probs)
        if resid:
            i = max(range(len(probs)), key=probs.__getitem__)
            probs[i] += resid
        return cls(outcomes, tuple(probs))

    def prob(self, outcome) -> float:
        try:
            return self.probs[self.outcomes.index(outcome)]
        except ValueError:
            return 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.outcomes, self.probs))

    def support(self) -> tuple:
        return tuple(o for o, p in zip(self.outcomes, self.probs) if p > 0)

    def __len__(self):
        return len(self.outcomes)


class RandomSource:
    """Seeded, splittable stream of random draws.

    ``split(i)`` derives an independent child stream from (seed, path, i);
    the same seed always reproduces the same draws.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed)
        self._path = _path
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=_path)
        state = ss.generate_state(4, dtype=np.uint32)
        self._rng = random.Random(int.from_bytes(state.tobytes(), "little"))
        self.random = self._rng.random
        self._np = np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))
        self._theta_buf: list = []
        self._theta_par = None

    def split(self, index: int) -> "RandomSource":
        return RandomSource(self.seed, self._path + (int(index),))

    def gamma(self, shape: float) -> float:
        return self._rng.gammavariate(shape, 1.0)

    def log_gamma(self, shape: float) -> float:
        """log of a Gamma(shape, 1) draw; stable for shape well below 1.

        Uses the boost G(a) = G(a + 1) * U**(1/a), kept in log space so that
        tiny draws at small shapes do not underflow to zero.
        """
        if shape >= 1.0:
            return math.log(self._rng.gammavariate(shape, 1.0))
        u = 1.0 - self._rng.random()  # (0, 1]
        return math.log(self._rng.gammavariate(shape + 1.0, 1.0)) + math.log(u) / shape

    def dirichlet_cumulative(self, alpha: float, k: int, batch: int = 2048) -> list[float]:
        """Cumulative sums of one symmetric Dirichlet draw (last entry exactly 1).

        Draws are generated in numpy batches with the same log-space boost as
        ``log_gamma``; the per-story sampler calls this once per attempt.
        """
        if self._theta_par != (alpha, k) or not self._theta_buf:
            if alpha < 1.0:
                logs = (np.log(self._np.standard_gamma(alpha + 1.0, (batch, k)))
                        + np.log1p(-self._np.random((batch, k))) / alpha)
            else:
                logs = np.log(self._np.standard_gamma(alpha, (batch, k)))
            w = np.exp(logs - logs.max(axis=1, keepdims=True))
            cum = np.cumsum(w, axis=1)
            cum /= cum[:, -1:]
            cum[:, -1] = 1.0
            self._theta_buf = cum.tolist()
            self._theta_buf.reverse()
            self._theta_par = (alpha, k)
        return self._theta_buf.pop()


def cumulative(probs: Iterable[float]) -> list[float]:
    return list(accumulate(probs))


def draw_index(cum: Sequence[float], rng: RandomSource) -> int:
    """Index drawn from a cumulative weight list (need not be normalized)."""
    u = rng.random() * cum[-1]
    i = bisect.bisect_right(cum, u)
    # guard against u landing on the last boundary through rounding
    n = len(cum)
    while i >= n or (i > 0 and cum[i] == cum[i - 1]):
        i -= 1
    return i


def sample_categorical(c: Categorical, rng: RandomSource):
    return c.outcomes[draw_index(cumulative(c.probs), rng)]


def sample_bernoulli(p: float, rng: RandomSource) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Bernoulli parameter {p} outside [0, 1]")
    return rng.random() < p


def sample_symmetric_dirichlet(alpha: float, k: int, rng: RandomSource) -> list[float]:
    """Dirichlet(alpha, ..., alpha) over k categories via normalized Gammas."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        return [1.0]
    logs = [rng.log_gamma(alpha) for _ in range(k)]
    top = max(logs)
    ws = [math.exp(v - top) for v in logs]
    total = math.fsum(ws)
    return [w / total for w in ws]


def product_of_experts(a: Categorical, b: Categorical) -> Categorical:
    """Normalized elementwise product of two categoricals over the same labels."""
    if set(a.outcomes) != set(b.outcomes):
        raise ValueError("experts disagree on the outcome set")
    bd = b.as_dict()
    weights = {o: p * bd[o] for o, p in zip(a.outcomes, a.probs)}
    if math.fsum(weights.values()) <= 0:
        raise DisjointSupportError("experts share no outcome with nonzero probability")
    return Categorical.from_weights(weights)


def poe_weights(a: Mapping[str, float], b: Mapping[str, float]) -> dict[str, float]:
    """Normalized product of two sparse label->prob maps (missing = 0).

    Returns an empty dict when the supports are disjoint.
    """
    raw = {k: p * b[k] for k, p in a.items() if p > 0 and b.get(k, 0.0) > 0}
    total = math.fsum(raw.values())
    if total <= 0:
        return {}
    return {k: v / total for k, v in raw.items()}


def log_collapsed_seq_prob(counts: Mapping[Hashable, int] | Iterable[int],
                           alpha: float, num_scenarios: int) -> float:
    """log P(one ordered sequence of scenario draws) with theta integrated out.

    Dirichlet-multinomial: Gamma(S a) / Gamma(S a + K) * prod_s Gamma(a + n_s) / Gamma(a).
    """
    ns = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    if len(ns) > num_scenarios:
        raise ValueError("more scenario counts than scenarios")
    k = sum(ns)
    sa = num_scenarios * alpha
    out = math.lgamma(sa) - math.lgamma(sa + k)
    la = math.lgamma(alpha)
    for n in ns:
        if n:
            out += math.lgamma(alpha + n) - la
    return out


def collapsed_seq_prob(counts, alpha: float, num_scenarios: int) -> float:
    return math.exp(log_collapsed_seq_prob(counts, alpha, num_scenarios))


def safe_log(p: float) -> float:
    return math.log(p) if p > 0 else NEG_INF
