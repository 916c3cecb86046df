"""Evaluation: pairwise AUC with tie handling, mean inconsistency rate of
top-1 picks, distance stratification, and the minimum-ETA baseline ranker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STRATA = ("short", "medium", "long")
STRATUM_EDGES_M = (10_000.0, 20_000.0)  # lower edges are inclusive


def auc(scores, labels) -> float | None:
    """Probability a positive outscores a negative, ties counting 0.5.

    Implemented with average ranks, which is exactly the normalized sum over
    all positive/negative pairs of 1 / 0.5 / 0. Returns None for single-class
    input (AUC undefined, reported as absent).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    pos = labels == 1
    P = int(pos.sum())
    N = len(labels) - P
    if P == 0 or N == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    s_sorted = scores[order]
    i = 0
    while i < len(s_sorted):
        j = i
        while j + 1 < len(s_sorted) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[pos].sum())
    return (pos_rank_sum - P * (P + 1) / 2.0) / (P * N)


def mean_ir(top1_irs) -> float:
    """Mean continuous inconsistency rate of each request's top-ranked route."""
    vals = list(float(v) for v in top1_irs)
    if not vals:
        raise ValueError("no requests to average")
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"ir out of [0,1]: {v}")
    return math.fsum(vals) / len(vals)


def stratum_of(distance_m: float) -> str:
    if distance_m < STRATUM_EDGES_M[0]:
        return "short"
    if distance_m < STRATUM_EDGES_M[1]:
        return "medium"
    return "long"


def stratify(distances_m) -> dict[str, np.ndarray]:
    """Partition request indices by driven-trajectory distance."""
    d = np.asarray(distances_m, dtype=np.float64)
    return {
        "short": np.flatnonzero(d < STRATUM_EDGES_M[0]),
        "medium": np.flatnonzero((d >= STRATUM_EDGES_M[0]) & (d < STRATUM_EDGES_M[1])),
        "long": np.flatnonzero(d >= STRATUM_EDGES_M[1]),
    }


def min_eta_order(etas, distances) -> np.ndarray:
    """Candidate order for the fastest-ETA baseline: ascending ETA, ties by
    ascending distance then original index."""
    etas = np.asarray(etas, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    if len(etas) == 0:
        raise ValueError("no candidates")
    idx = np.arange(len(etas))
    return np.lexsort((idx, distances, etas))


def score_order(scores, etas) -> np.ndarray:
    """Candidate order for a scored ranker: descending score, ties by
    ascending ETA then original index."""
    scores = np.asarray(scores, dtype=np.float64)
    etas = np.asarray(etas, dtype=np.float64)
    idx = np.arange(len(scores))
    return np.lexsort((idx, etas, -scores))


@dataclass
class StratumResult:
    n: int
    mean_ir: float | None


@dataclass
class MethodResult:
    name: str
    n: int
    auc: float | None
    mean_ir: float
    strata: dict[str, StratumResult] = field(default_factory=dict)


@dataclass
class EvalReport:
    n_requests: int
    methods: dict[str, MethodResult]

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "methods": {
                name: {
                    "n": m.n,
                    "auc": m.auc,
                    "mean_ir": m.mean_ir,
                    "strata": {s: {"n": r.n, "mean_ir": r.mean_ir}
                               for s, r in m.strata.items()},
                }
                for name, m in sorted(self.methods.items())
            },
        }


def evaluate_methods(request_ids, irs, etas, distances, labels,
                     driven_distance_by_request: dict[int, float],
                     method_scores: dict[str, np.ndarray | None]) -> EvalReport:
    """Score every method's top-1 pick per request and aggregate.

    Rows are (request, candidate) aligned arrays. A method mapping to None
    ranks by minimum ETA and reports no AUC; others rank by descending score.
    Strata partition requests by driven-trajectory distance.
    """
    request_ids = np.asarray(request_ids)
    irs = np.asarray(irs, dtype=np.float64)
    etas = np.asarray(etas, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)

    uniq, inverse = np.unique(request_ids, return_inverse=True)
    groups: list[np.ndarray] = [np.flatnonzero(inverse == g) for g in range(len(uniq))]
    strata_assign = [stratum_of(driven_distance_by_request[int(r)]) for r in uniq]

    methods: dict[str, MethodResult] = {}
    for name, scores in method_scores.items():
        top_irs = np.empty(len(uniq))
        for g, rows in enumerate(groups):
            if scores is None:
                order = min_eta_order(etas[rows], distances[rows])
            else:
                order = score_order(scores[rows], etas[rows])
            top_irs[g] = irs[rows[order[0]]]
        strata: dict[str, StratumResult] = {}
        for s in STRATA:
            members = [g for g, lab in enumerate(strata_assign) if lab == s]
            strata[s] = StratumResult(
                n=len(members),
                mean_ir=mean_ir(top_irs[members]) if members else None,
            )
        methods[name] = MethodResult(
            name=name,
            n=len(uniq),
            auc=None if scores is None else auc(scores, labels),
            mean_ir=mean_ir(top_irs),
            strata=strata,
        )
    return EvalReport(n_requests=len(uniq), methods=methods)
