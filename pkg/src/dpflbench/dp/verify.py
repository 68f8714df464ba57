"""Brute-force (epsilon, delta)-DP check for mechanisms with finitely many outcomes.

For every ordered adjacent pair (D, D') and every outcome set S the check is
``P[M(D) in S] <= exp(eps) * P[M(D') in S] + delta``. The worst S for a pair
is ``{o : p_D(o) > exp(eps) p_D'(o)}``, which gives the violation directly;
the full subset sweep is kept as a cross-check for small outcome sets.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

from ..errors import ValidationError

MAX_OUTCOMES = 20
SWEEP_LIMIT = 12
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMechanism:
    datasets: tuple[Hashable, ...]
    adjacency: tuple[tuple[Hashable, Hashable], ...]
    outcome_dist: Mapping[Hashable, np.ndarray]

    def __post_init__(self):
        dists = {d: np.asarray(self.outcome_dist[d], dtype=np.float64) for d in self.datasets}
        sizes = {len(v) for v in dists.values()}
        if len(sizes) != 1:
            raise ValidationError("all outcome distributions must share one outcome set")
        for d, p in dists.items():
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValidationError(f"outcome distribution of {d!r} is not a probability vector")
        pairs = {tuple(p) for p in self.adjacency}
        for a, b in pairs:
            if a not in dists or b not in dists:
                raise ValidationError(f"adjacency names unknown dataset in {(a, b)!r}")
        # symmetric closure
        pairs |= {(b, a) for a, b in pairs}
        object.__setattr__(self, "adjacency", tuple(sorted(pairs, key=repr)))
        object.__setattr__(self, "outcome_dist", dists)

    @property
    def num_outcomes(self) -> int:
        return len(next(iter(self.outcome_dist.values())))


@dataclass(frozen=True)
class Witness:
    pair: tuple[Hashable, Hashable]
    outcomes: tuple[int, ...]
    violation: float  # P[M(D) in S] - e^eps P[M(D') in S]


@dataclass(frozen=True)
class VerifyResult:
    holds: bool
    witness: Witness


def _worst_set(p: np.ndarray, p_adj: np.ndarray, eps: float) -> tuple[tuple[int, ...], float]:
    scaled = math.exp(eps) * p_adj if math.isfinite(eps) else np.where(p_adj > 0, np.inf, 0.0)
    diff = p - scaled
    members = tuple(int(i) for i in np.flatnonzero(diff > 0))
    return members, float(diff[list(members)].sum()) if members else 0.0


def _sweep(p: np.ndarray, p_adj: np.ndarray, eps: float) -> float:
    factor = math.exp(eps)
    best = 0.0
    n = len(p)
    for r in range(1, n + 1):
        for s in itertools.combinations(range(n), r):
            idx = list(s)
            best = max(best, p[idx].sum() - factor * p_adj[idx].sum())
    return best


def verify_dp_enumeration(
    mech: DiscreteMechanism,
    epsilon: float,
    delta: float,
    tol: float = DEFAULT_TOL,
    cross_check: bool | None = None,
) -> VerifyResult:
    """Check the DP inequality over all adjacent pairs and outcome sets.

    ``tol`` absorbs floating-point rounding in cases where the inequality
    is tight (e.g. randomized response at its exact epsilon).
    """
    if mech.num_outcomes > MAX_OUTCOMES:
        raise ValidationError(f"{mech.num_outcomes} outcomes exceed the enumeration limit {MAX_OUTCOMES}")
    if epsilon < 0 or delta < 0:
        raise ValidationError("epsilon and delta must be non-negative")
    if cross_check is None:
        cross_check = mech.num_outcomes <= SWEEP_LIMIT
    if not mech.adjacency:
        raise ValidationError("mechanism has no adjacent pairs")

    worst: Witness | None = None
    for a, b in mech.adjacency:
        p, p_adj = mech.outcome_dist[a], mech.outcome_dist[b]
        members, violation = _worst_set(p, p_adj, epsilon)
        if cross_check:
            swept = _sweep(p, p_adj, epsilon)
            if abs(swept - violation) > 1e-9:
                raise AssertionError(f"subset sweep {swept} disagrees with closed form {violation}")
        if worst is None or violation > worst.violation:
            worst = Witness((a, b), members, violation)
    return VerifyResult(worst.violation <= delta + tol, worst)


def smallest_epsilon(
    mech: DiscreteMechanism, delta: float, hi: float = 50.0, resolution: float = 1e-6
) -> float:
    """Smallest epsilon (to ``resolution``) that the verifier accepts at ``delta``."""
    if verify_dp_enumeration(mech, 0.0, delta, cross_check=False).holds:
        return 0.0
    lo = 0.0
    if not verify_dp_enumeration(mech, hi, delta, cross_check=False).holds:
        return math.inf
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if verify_dp_enumeration(mech, mid, delta, cross_check=False).holds:
            hi = mid
        else:
            lo = mid
    return hi


def randomized_response(epsilon: float) -> DiscreteMechanism:
    """Binary randomized response: report the true bit with probability e^eps/(1+e^eps)."""
    keep = math.exp(epsilon) / (1 + math.exp(epsilon))
    return DiscreteMechanism(
        datasets=(0, 1),
        adjacency=((0, 1),),
        outcome_dist={0: np.array([keep, 1 - keep]), 1: np.array([1 - keep, keep])},
    )


def load_fixture(path: str | Path) -> tuple[DiscreteMechanism, float, float]:
    """Read a JSON fixture: ``{"datasets", "adjacency", "outcome_dist", "epsilon", "delta"}``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        datasets: Sequence = tuple(doc["datasets"])
        mech = DiscreteMechanism(
            datasets=datasets,
            adjacency=tuple(tuple(p) for p in doc["adjacency"]),
            outcome_dist={d: doc["outcome_dist"][str(d)] for d in datasets},
        )
        eps = float(doc.get("epsilon", 0.0))
        delta = float(doc.get("delta", 0.0))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed fixture ({exc})") from exc
    return mech, eps, delta
