"""Numerical verification of the KL chain rule under coarsening maps.

A deterministic coarsening of a discrete distribution splits the KL
divergence into a coarse term plus a non-negative conditional term
(chain rule of relative entropy); coarsening can therefore never
increase KL (data-processing inequality), and walking a chain of
coarsenings telescopes the fine-scale divergence into per-level
non-negative improvements.  This module checks those identities on
finite distributions to near machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiscreteDist",
    "CoarseningMap",
    "kl",
    "pushforward",
    "chain_rule_residual",
    "TelescopingReport",
    "telescoping_check",
]


class DiscreteDist:
    """Finite probability vector (sums to 1 within 1e-12)."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("probability vector must be 1-D and nonempty")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("probabilities must be finite and non-negative")
        total = math.fsum(arr.tolist())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")
        arr = arr.copy()
        arr.setflags(write=False)
        self.probs = arr

    @property
    def size(self) -> int:
        return self.probs.size

    @classmethod
    def normalized(cls, weights) -> "DiscreteDist":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / math.fsum(w.tolist()))


@dataclass(frozen=True)
class CoarseningMap:
    """Deterministic many-to-one map of fine states onto coarse states."""

    assignment: tuple
    coarse_size: int

    def __post_init__(self):
        assign = tuple(int(a) for a in self.assignment)
        object.__setattr__(self, "assignment", assign)
        if not assign:
            raise ValueError("assignment must be nonempty")
        if any(not 0 <= a < self.coarse_size for a in assign):
            raise ValueError("assignment targets outside 0..coarse_size-1")
        if set(assign) != set(range(self.coarse_size)):
            raise ValueError("assignment must be surjective onto the coarse states")

    @property
    def fine_size(self) -> int:
        return len(self.assignment)

    @classmethod
    def identity(cls, n: int) -> "CoarseningMap":
        return cls(tuple(range(n)), n)


def kl(q: DiscreteDist, p: DiscreteDist) -> float:
    """KL(q || p) in nats; +inf when q puts mass where p has none."""
    if q.size != p.size:
        raise ValueError(f"support sizes differ: {q.size} vs {p.size}")
    qa, pa = q.probs, p.probs
    support = qa > 0
    if np.any(pa[support] == 0):
        return math.inf
    terms = qa[support] * np.log(qa[support] / pa[support])
    return math.fsum(terms.tolist())


def pushforward(d: DiscreteDist, m: CoarseningMap) -> DiscreteDist:
    """Coarse distribution: each coarse mass is the sum of its fine masses."""
    if d.size != m.fine_size:
        raise ValueError(f"distribution size {d.size} != map fine size {m.fine_size}")
    idx = np.asarray(m.assignment)
    coarse = np.bincount(idx, weights=d.probs, minlength=m.coarse_size)
    return DiscreteDist(coarse)


def chain_rule_residual(q: DiscreteDist, p: DiscreteDist, m: CoarseningMap) -> float:
    """KL(q||p) minus [coarse KL plus expected conditional KL].

    Zero (to numerical precision) for every valid instance; coarse cells
    with zero q-mass contribute nothing to the conditional term.
    """
    if q.size != m.fine_size or p.size != m.fine_size:
        raise ValueError("distribution sizes must match the map's fine size")
    fine_kl = kl(q, p)
    idx = np.asarray(m.assignment)
    cq = np.bincount(idx, weights=q.probs, minlength=m.coarse_size)
    cp = np.bincount(idx, weights=p.probs, minlength=m.coarse_size)
    support = cq > 0
    if np.any(cp[support] == 0):
        coarse_kl = math.inf
    else:
        terms = cq[support] * np.log(cq[support] / cp[support])
        coarse_kl = math.fsum(terms.tolist())
    cond_terms = []
    for y in range(m.coarse_size):
        if cq[y] == 0:
            continue
        cells = idx == y
        qy = q.probs[cells] / cq[y]
        py_mass = cp[y]
        if py_mass == 0:
            return math.nan  # both sides infinite; residual undefined
        py = p.probs[cells] / py_mass
        sup = qy > 0
        if np.any(py[sup] == 0):
            return math.nan
        inner = math.fsum((qy[sup] * np.log(qy[sup] / py[sup])).tolist())
        cond_terms.append(cq[y] * inner)
    cond = math.fsum(cond_terms)
    if math.isinf(fine_kl) or math.isinf(coarse_kl):
        return math.nan if math.isinf(fine_kl) and math.isinf(coarse_kl) else math.inf
    return fine_kl - (coarse_kl + cond)


@dataclass(frozen=True)
class TelescopingReport:
    """Per-level divergences of a coarsening chain.

    ``level_kls[t]`` is KL between the pushforwards at level t (level 0
    is the fine pair); ``summands[t-1] = level_kls[t-1] - level_kls[t]``
    is the improvement claimed by level t.  The residual checks that the
    fine KL equals the telescoped total plus the final coarse KL.
    """

    level_kls: tuple
    summands: tuple
    total: float
    final_kl: float
    residual: float

    @property
    def monotone(self) -> bool:
        return all(s >= -1e-12 for s in self.summands)


def telescoping_check(q0: DiscreteDist, p0: DiscreteDist, maps) -> TelescopingReport:
    """Walk a chain of coarsenings and report the KL telescoping identity."""
    maps = list(maps)
    if not maps:
        raise ValueError("need at least one coarsening map")
    size = q0.size
    for i, m in enumerate(maps):
        if m.fine_size != size:
            raise ValueError(f"map {i} expects fine size {m.fine_size}, chain carries {size}")
        size = m.coarse_size
    qs, ps = [q0], [p0]
    for m in maps:
        qs.append(pushforward(qs[-1], m))
        ps.append(pushforward(ps[-1], m))
    level_kls = tuple(kl(a, b) for a, b in zip(qs, ps))
    summands = tuple(a - b for a, b in zip(level_kls, level_kls[1:]))
    total = math.fsum(summands)
    residual = level_kls[0] - total - level_kls[-1]
    return TelescopingReport(level_kls, summands, total, level_kls[-1], residual)
