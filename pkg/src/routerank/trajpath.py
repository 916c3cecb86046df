"""Trajectories, greedy map matching onto the road network, and
inconsistency-rate labeling.

A matched trajectory and a candidate route are both link-id sequences; the
inconsistency rate is 1 minus the fraction of the driven length covered by
links the two sequences share. The binary training label is 1 ("followed")
when that rate is at or below a small threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator

from .artifacts import read_jsonl, write_jsonl
from .roadnet import LinkPath, point_polyline_distance

if TYPE_CHECKING:
    from .roadnet import RoadNetwork

DEFAULT_TAU = 0.05
DEFAULT_MATCH_RADIUS = 50.0
DEFAULT_MAX_HOPS = 3


class UnmatchedPointError(ValueError):
    """No link within the search radius of a trajectory point."""

    def __init__(self, point_index: int):
        super().__init__(f"no link within search radius of point {point_index}")
        self.point_index = point_index


@dataclass(frozen=True)
class GpsPoint:
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class Trajectory:
    user_id: int
    trip_id: int
    departure_time: datetime
    points: tuple[GpsPoint, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("trajectory needs >= 2 points")
        for a, b in zip(self.points, self.points[1:]):
            if b.t <= a.t:
                raise ValueError("trajectory timestamps must be strictly increasing")


@dataclass(frozen=True)
class IrLabel:
    ir: float
    y: int


def inconsistency_rate(traj_path: LinkPath, candidate: LinkPath,
                       network: "RoadNetwork") -> float:
    """1 - shared_length / trajectory_length, in [0, 1].

    Shared length sums network lengths over the set intersection of link ids,
    so candidate link order is irrelevant.
    """
    if not traj_path.links or traj_path.total_length <= 0:
        raise ValueError("empty trajectory path")
    shared = set(traj_path.links) & set(candidate.links)
    dis_tc = math.fsum(network.links[l].length for l in sorted(shared))
    ir = 1.0 - dis_tc / traj_path.total_length
    return min(1.0, max(0.0, ir))


def binarize_label(ir: float, tau: float = DEFAULT_TAU) -> int:
    """1 when the driver followed the route (ir <= tau, boundary inclusive)."""
    if not 0.0 <= ir <= 1.0:
        raise ValueError(f"ir must be in [0, 1], got {ir}")
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must be in [0, 1), got {tau}")
    return 1 if ir <= tau else 0


def label_for(traj_path: LinkPath, candidate: LinkPath, network: "RoadNetwork",
              tau: float = DEFAULT_TAU) -> IrLabel:
    ir = inconsistency_rate(traj_path, candidate, network)
    return IrLabel(ir=ir, y=binarize_label(ir, tau))


# ---------------------------------------------------------------------------
# Map matching

def _successor_candidates(network: "RoadNetwork", current: int, max_hops: int,
                          budget_m: float):
    """(link id, hops, chain-to-append) reachable from `current` through
    topological successors. Immediate reversals (U-turns) are excluded, and
    the links a chain skips over must fit in `budget_m` meters (the distance
    the vehicle could have covered since the previous point)."""
    links = network.links
    cands: list[tuple[int, int, tuple[int, ...]]] = [(current, 0, ())]
    visited = {current}
    frontier: list[tuple[int, tuple[int, ...], float]] = [(current, (), 0.0)]
    for hop in range(1, max_hops + 1):
        nxt: list[tuple[int, tuple[int, ...], float]] = []
        for parent, chain, skipped in frontier:
            pl = links[parent]
            for out in network.out_links.get(pl.to_node, ()):
                if out in visited:
                    continue
                ol = links[out]
                if ol.to_node == pl.from_node:
                    continue
                visited.add(out)
                new_chain = chain + (out,)
                cands.append((out, hop, new_chain))
                new_skipped = skipped + ol.length
                if new_skipped <= budget_m:
                    nxt.append((out, new_chain, new_skipped))
        frontier = nxt
    return cands


def _initial_candidates(network: "RoadNetwork", p: GpsPoint, radius: float):
    index = network.spatial_index()
    cell = 250.0
    cx0 = math.floor((p.x - radius) / cell)
    cx1 = math.floor((p.x + radius) / cell)
    cy0 = math.floor((p.y - radius) / cell)
    cy1 = math.floor((p.y + radius) / cell)
    lids: set[int] = set()
    for cx in range(cx0, cx1 + 1):
        for cy in range(cy0, cy1 + 1):
            lids.update(index.get((cx, cy), ()))
    return sorted(lids)


def _pick_initial(network: "RoadNetwork", p: GpsPoint, p_next: GpsPoint,
                  radius: float, excluded: set[int]) -> int | None:
    """Starting link: scored on the first two points jointly (the link the
    vehicle is actually departing on stays close to both, while links that
    merely end at the origin do not), with an alignment penalty so the
    correct travel direction of a two-way road wins."""
    best = None
    for lid in _initial_candidates(network, p, radius):
        if lid in excluded:
            continue
        link = network.links[lid]
        d0 = point_polyline_distance(p.x, p.y, link.geometry)
        if d0 > radius:
            continue
        d1 = point_polyline_distance(p_next.x, p_next.y, link.geometry)
        gx = link.geometry[-1][0] - link.geometry[0][0]
        gy = link.geometry[-1][1] - link.geometry[0][1]
        misaligned = (gx * (p_next.x - p.x) + gy * (p_next.y - p.y)) < 0.0
        key = (d0 + d1 + (radius if misaligned else 0.0), lid)
        if best is None or key < best[0]:
            best = (key, lid)
    return None if best is None else best[1]


def map_match_assignments(trajectory: Trajectory, network: "RoadNetwork",
                          radius: float = DEFAULT_MATCH_RADIUS,
                          max_hops: int = DEFAULT_MAX_HOPS) -> tuple[LinkPath, list[int]]:
    """Greedy topological matching with a one-step backtrack repair.

    Each point is assigned the nearest link among the current link and its
    successors (up to `max_hops` hops) within `radius`. When no candidate is
    in range, the previous point's assignment is retracted once and
    re-evaluated with its original choice excluded; if the point still cannot
    be placed, UnmatchedPointError carries its index.

    Returns the connected link path and the per-point link assignment.
    """
    if not network.links:
        raise ValueError("empty network")
    points = trajectory.points
    links = network.links
    v_max = max(l.speed_limit for l in links.values())

    path: list[int] = []
    assigns: list[tuple[int, tuple[int, ...]]] = []
    excluded: dict[int, set[int]] = {}
    failed_at: int | None = None

    i = 0
    while i < len(points):
        p = points[i]
        if not assigns:
            choice = _pick_initial(network, p, points[1], radius, excluded.get(0, set()))
            if choice is None:
                raise UnmatchedPointError(failed_at if failed_at is not None else 0)
            path = [choice]
            assigns.append((choice, (choice,)))
            i += 1
            continue

        current = assigns[-1][0]
        skip = excluded.get(i, set())
        dt = points[i].t - points[i - 1].t
        budget = dt * v_max * 1.2 + 2.0 * radius
        # mild hysteresis: advancing a hop must beat staying by a margin; the
        # terminal sample has no successor evidence, so it only advances when
        # staying is impossible
        hop_pen = radius if i == len(points) - 1 else 5.0
        best: tuple[tuple[float, int, int], int, tuple[int, ...]] | None = None
        for lid, hops, chain in _successor_candidates(network, current, max_hops, budget):
            if lid in skip:
                continue
            d = point_polyline_distance(p.x, p.y, links[lid].geometry)
            if d > radius:
                continue
            key = (d + hop_pen * hops, hops, lid)
            if best is None or key < best[0]:
                best = (key, lid, chain)

        if best is not None:
            _, lid, chain = best
            path.extend(chain)
            assigns.append((lid, chain))
            i += 1
            continue

        # dead end: retract the previous assignment and retry it with its old
        # choice excluded; exclusions accumulate, so this terminates
        prev_idx = i - 1
        failed_at = i if failed_at is None else failed_at
        prev_lid, prev_chain = assigns.pop()
        if prev_chain:
            del path[len(path) - len(prev_chain):]
        excluded.setdefault(prev_idx, set()).add(prev_lid)
        i = prev_idx

    matched = network.make_path(path)
    return matched, [a[0] for a in assigns]


def map_match(trajectory: Trajectory, network: "RoadNetwork",
              radius: float = DEFAULT_MATCH_RADIUS,
              max_hops: int = DEFAULT_MAX_HOPS) -> LinkPath:
    matched, _ = map_match_assignments(trajectory, network, radius, max_hops)
    return matched


# ---------------------------------------------------------------------------
# Trajectory files (one trip per line; see docs/formats.md)

def save_trajectories(trips: Iterable[Trajectory], path: Path | str) -> None:
    def records():
        for t in trips:
            yield {
                "user_id": t.user_id, "trip_id": t.trip_id,
                "departure_time": t.departure_time.isoformat(),
                "points": [[p.t, p.x, p.y] for p in t.points],
            }

    write_jsonl(path, records())


def load_trajectories(path: Path | str) -> Iterator[Trajectory]:
    for rec in read_jsonl(path):
        yield Trajectory(
            user_id=int(rec["user_id"]), trip_id=int(rec["trip_id"]),
            departure_time=datetime.fromisoformat(rec["departure_time"]),
            points=tuple(GpsPoint(float(t), float(x), float(y)) for t, x, y in rec["points"]),
        )
