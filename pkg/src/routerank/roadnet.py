"""Directed road-network model, grid overlay with terrain/POI data, and
loop-free k-shortest-path candidate recall.

Coordinates are planar meters in a local frame. Networks and grids are
immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappush, heappop
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .artifacts import read_jsonl, write_jsonl

ROAD_CLASSES = ("highway", "arterial", "collector", "local")
POI_CATEGORIES = (
    "residential", "commercial", "office", "school",
    "hospital", "transit", "leisure", "industrial",
)
N_POI = len(POI_CATEGORIES)


class NetworkError(ValueError):
    """Invalid network construction input."""


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Link:
    id: int
    from_node: int
    to_node: int
    length: float
    lanes: int
    road_class: str
    speed_limit: float
    toll: float
    geometry: tuple[tuple[float, float], ...]
    light_at_end: bool = False


@dataclass(frozen=True)
class LinkPath:
    """A connected sequence of link ids with its total length in meters."""

    links: tuple[int, ...]
    total_length: float


def polyline_length(points) -> float:
    return math.fsum(
        math.hypot(points[i + 1][0] - points[i][0], points[i + 1][1] - points[i][1])
        for i in range(len(points) - 1)
    )


class RoadNetwork:
    """Validated node/link store with an outgoing-adjacency index."""

    def __init__(self, nodes: dict[int, Node], links: dict[int, Link],
                 out_links: dict[int, tuple[int, ...]]):
        self.nodes = nodes
        self.links = links
        self.out_links = out_links
        self._spatial: dict[float, dict[tuple[int, int], tuple[int, ...]]] = {}

    def __len__(self) -> int:
        return len(self.links)

    def path_length(self, link_ids: Iterable[int]) -> float:
        return math.fsum(self.links[lid].length for lid in link_ids)

    def make_path(self, link_ids: Iterable[int]) -> LinkPath:
        ids = tuple(int(l) for l in link_ids)
        if not ids:
            raise NetworkError("empty link path")
        for a, b in zip(ids, ids[1:]):
            if self.links[a].to_node != self.links[b].from_node:
                raise NetworkError(f"links {a} and {b} are not connected")
        return LinkPath(ids, self.path_length(ids))

    def path_nodes(self, path: LinkPath) -> list[int]:
        first = self.links[path.links[0]]
        return [first.from_node] + [self.links[l].to_node for l in path.links]

    def spatial_index(self, cell_size: float = 250.0) -> dict[tuple[int, int], tuple[int, ...]]:
        """Cell -> link ids whose geometry crosses that cell; memoized."""
        idx = self._spatial.get(cell_size)
        if idx is None:
            tmp: dict[tuple[int, int], list[int]] = {}
            for lid in sorted(self.links):
                for cell in polyline_cells(self.links[lid].geometry, cell_size):
                    tmp.setdefault(cell, []).append(lid)
            idx = {c: tuple(v) for c, v in tmp.items()}
            self._spatial[cell_size] = idx
        return idx


def build_network(nodes: Iterable[Node], links: Iterable[Link]) -> RoadNetwork:
    """Validate and index a directed road graph.

    Rejects duplicate node/link ids, links whose endpoints do not exist,
    non-positive lengths, degenerate geometry, and polylines whose measured
    length deviates from the declared link length by more than 1%.
    """
    node_map: dict[int, Node] = {}
    for n in nodes:
        if n.id in node_map:
            raise NetworkError(f"duplicate id: node {n.id}")
        node_map[n.id] = n

    link_map: dict[int, Link] = {}
    adjacency: dict[int, list[int]] = {nid: [] for nid in node_map}
    for l in links:
        if l.id in link_map:
            raise NetworkError(f"duplicate id: link {l.id}")
        if l.from_node not in node_map or l.to_node not in node_map:
            missing = l.from_node if l.from_node not in node_map else l.to_node
            raise NetworkError(f"dangling node reference {missing} in link {l.id}")
        if l.from_node == l.to_node:
            raise NetworkError(f"link {l.id} is a self-loop")
        if l.length <= 0:
            raise NetworkError(f"non-positive length on link {l.id}")
        if l.lanes < 1:
            raise NetworkError(f"link {l.id} must have >= 1 lane")
        if l.road_class not in ROAD_CLASSES:
            raise NetworkError(f"link {l.id}: unknown road class {l.road_class!r}")
        if l.speed_limit <= 0:
            raise NetworkError(f"link {l.id}: non-positive speed limit")
        if l.toll < 0:
            raise NetworkError(f"link {l.id}: negative toll")
        if len(l.geometry) < 2:
            raise NetworkError(f"link {l.id}: polyline needs >= 2 points")
        measured = polyline_length(l.geometry)
        if abs(measured - l.length) > 0.01 * l.length:
            raise NetworkError(
                f"link {l.id}: polyline length {measured:.2f} deviates >1% from {l.length:.2f}"
            )
        link_map[l.id] = l
        adjacency[l.from_node].append(l.id)

    out_links = {nid: tuple(sorted(lids)) for nid, lids in adjacency.items()}
    return RoadNetwork(node_map, link_map, out_links)


# ---------------------------------------------------------------------------
# Grid overlay

@dataclass(frozen=True)
class CellTerrain:
    water: bool = False
    green: bool = False
    poi_counts: tuple[int, ...] = (0,) * N_POI


@dataclass
class GridIndex:
    """Landscape grid: terrain per cell plus the cells each link crosses."""

    cell_size: float
    cells: dict[tuple[int, int], CellTerrain]
    link_cells: dict[int, tuple[tuple[int, int], ...]] = field(repr=False, default_factory=dict)

    def terrain(self, cell: tuple[int, int]) -> CellTerrain:
        return self.cells.get(cell, CellTerrain())


def _segment_cells(x0: float, y0: float, x1: float, y1: float, s: float):
    """Every grid cell (floor(p/s) semantics) containing a point of the segment,
    in traversal order. Cells clipped only at a corner are included, matching
    a dense point-sampling rasterization in the limit."""
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()

    def add(px: float, py: float) -> None:
        c = (math.floor(px / s), math.floor(py / s))
        if c not in seen:
            seen.add(c)
            out.append(c)

    add(x0, y0)
    dx, dy = x1 - x0, y1 - y0
    ts: list[float] = []
    for p0, d in ((x0, dx), (y0, dy)):
        if d == 0.0:
            continue
        lo, hi = (p0, p0 + d) if d > 0 else (p0 + d, p0)
        k0 = math.floor(lo / s) + 1
        k1 = math.floor(hi / s)
        for k in range(k0, k1 + 1):
            t = (k * s - p0) / d
            if 0.0 < t < 1.0:
                ts.append(t)
    ts = sorted(set(ts))
    prev = 0.0
    for t in ts + [1.0]:
        tm = 0.5 * (prev + t)
        add(x0 + dx * tm, y0 + dy * tm)
        add(x0 + dx * t, y0 + dy * t)
        prev = t
    return out


def polyline_cells(geometry, cell_size: float) -> tuple[tuple[int, int], ...]:
    """Supercover traversal of a polyline: ordered, deduplicated cells."""
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for (ax, ay), (bx, by) in zip(geometry, geometry[1:]):
        for c in _segment_cells(ax, ay, bx, by, cell_size):
            if c not in seen:
                seen.add(c)
                out.append(c)
    return tuple(out)


def grid_overlay(network: RoadNetwork, cell_size: float,
                 terrain_spec: Mapping[tuple[int, int], CellTerrain] | None = None) -> GridIndex:
    """Rasterize every link onto the grid and attach terrain records.

    Cells a link crosses but the terrain spec does not mention default to
    no-water/no-green with zero POI counts.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be > 0")
    if not network.links:
        raise NetworkError("empty network")
    terrain_spec = dict(terrain_spec or {})
    link_cells: dict[int, tuple[tuple[int, int], ...]] = {}
    cells: dict[tuple[int, int], CellTerrain] = {}
    for lid in sorted(network.links):
        traversed = polyline_cells(network.links[lid].geometry, cell_size)
        link_cells[lid] = traversed
        for c in traversed:
            if c not in cells:
                cells[c] = terrain_spec.get(c, CellTerrain())
    # keep spec'd cells that no link touches as well: harmless, and round-trips files
    for c, t in terrain_spec.items():
        cells.setdefault(c, t)
    return GridIndex(cell_size=cell_size, cells=cells, link_cells=link_cells)


# ---------------------------------------------------------------------------
# Shortest paths

WeightSpec = Mapping[int, float] | Callable[[Link], float]


def _resolve_weights(network: RoadNetwork, weight_per_link: WeightSpec) -> dict[int, float]:
    if callable(weight_per_link):
        w = {lid: float(weight_per_link(link)) for lid, link in network.links.items()}
    else:
        w = {lid: float(weight_per_link[lid]) for lid in network.links}
    for lid, v in w.items():
        if not (v > 0) or not math.isfinite(v):
            raise ValueError(f"link weight must be positive and finite (link {lid}: {v})")
    return w


def shortest_path(network: RoadNetwork, origin: int, dest: int, weights: dict[int, float],
                  banned_nodes: frozenset[int] = frozenset(),
                  banned_links: frozenset[int] = frozenset()):
    """Dijkstra returning (cost, link-id tuple) or None if unreachable.

    Heap entries carry the link sequence so equal-cost paths pop in
    lexicographic link-id order, making results deterministic.
    """
    links = network.links
    out_links = network.out_links
    heap: list[tuple[float, tuple[int, ...], int]] = [(0.0, (), origin)]
    done: set[int] = set()
    while heap:
        cost, seq, node = heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == dest:
            return cost, seq
        for lid in out_links.get(node, ()):
            if lid in banned_links:
                continue
            v = links[lid].to_node
            if v in done or v in banned_nodes:
                continue
            heappush(heap, (cost + weights[lid], seq + (lid,), v))
    return None


def k_shortest_paths(network: RoadNetwork, origin: int, dest: int, k: int,
                     weight_per_link: WeightSpec) -> list[LinkPath]:
    """Up to k loop-free paths in non-decreasing weight order (Yen's method
    with the Lawler spur-index restriction). Returns [] when dest is
    unreachable; ties break on the lexicographic link-id sequence."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if origin == dest:
        raise ValueError("origin and dest must differ")
    if origin not in network.nodes or dest not in network.nodes:
        raise NetworkError(f"unknown node in ({origin}, {dest})")
    weights = _resolve_weights(network, weight_per_link)

    first = shortest_path(network, origin, dest, weights)
    if first is None:
        return []
    accepted: list[tuple[float, tuple[int, ...]]] = [first]
    accepted_dev = [0]
    seen: set[tuple[int, ...]] = {first[1]}
    candidates: list[tuple[float, tuple[int, ...], int]] = []

    while len(accepted) < k:
        _, base = accepted[-1]
        base_nodes = [origin] + [network.links[l].to_node for l in base]
        prefix_cost = 0.0
        for i in range(len(base)):
            if i >= accepted_dev[-1]:
                spur_node = base_nodes[i]
                root = base[:i]
                banned_links = frozenset(
                    p[i] for _, p in accepted if len(p) > i and p[:i] == root
                )
                banned_nodes = frozenset(base_nodes[:i])
                spur = shortest_path(network, spur_node, dest, weights,
                                     banned_nodes, banned_links)
                if spur is not None:
                    total = root + spur[1]
                    if total not in seen:
                        seen.add(total)
                        heappush(candidates, (prefix_cost + spur[0], total, i))
            prefix_cost += weights[base[i]]
        if not candidates:
            break
        cost, path, dev = heappop(candidates)
        accepted.append((cost, path))
        accepted_dev.append(dev)

    return [network.make_path(p) for _, p in accepted]


# ---------------------------------------------------------------------------
# Geometry helpers shared by matching and feature code

def point_segment_distance(px: float, py: float, ax: float, ay: float,
                           bx: float, by: float) -> float:
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    vv = vx * vx + vy * vy
    if vv == 0.0:
        return math.hypot(wx, wy)
    t = (wx * vx + wy * vy) / vv
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def point_polyline_distance(px: float, py: float, geometry) -> float:
    best = math.inf
    for (ax, ay), (bx, by) in zip(geometry, geometry[1:]):
        d = point_segment_distance(px, py, ax, ay, bx, by)
        if d < best:
            best = d
    return best


def link_entry_heading(link: Link) -> float:
    (ax, ay), (bx, by) = link.geometry[0], link.geometry[1]
    return math.atan2(by - ay, bx - ax)


def link_exit_heading(link: Link) -> float:
    (ax, ay), (bx, by) = link.geometry[-2], link.geometry[-1]
    return math.atan2(by - ay, bx - ax)


# ---------------------------------------------------------------------------
# File formats (see docs/formats.md)

def save_network(network: RoadNetwork, path: Path | str) -> None:
    def records():
        for nid in sorted(network.nodes):
            n = network.nodes[nid]
            yield {"kind": "node", "id": n.id, "x": n.x, "y": n.y}
        for lid in sorted(network.links):
            l = network.links[lid]
            yield {
                "kind": "link", "id": l.id, "from_node": l.from_node,
                "to_node": l.to_node, "length_m": l.length, "lanes": l.lanes,
                "road_class": l.road_class, "speed_limit_mps": l.speed_limit,
                "toll": l.toll, "light_at_end": l.light_at_end,
                "geometry": [[x, y] for x, y in l.geometry],
            }

    write_jsonl(path, records())


def load_network(path: Path | str) -> RoadNetwork:
    nodes: list[Node] = []
    links: list[Link] = []
    for rec in read_jsonl(path):
        kind = rec.get("kind")
        if kind == "node":
            nodes.append(Node(int(rec["id"]), float(rec["x"]), float(rec["y"])))
        elif kind == "link":
            links.append(Link(
                id=int(rec["id"]), from_node=int(rec["from_node"]),
                to_node=int(rec["to_node"]), length=float(rec["length_m"]),
                lanes=int(rec["lanes"]), road_class=str(rec["road_class"]),
                speed_limit=float(rec["speed_limit_mps"]), toll=float(rec["toll"]),
                geometry=tuple((float(x), float(y)) for x, y in rec["geometry"]),
                light_at_end=bool(rec["light_at_end"]),
            ))
        else:
            raise NetworkError(f"unknown record kind {kind!r} in {path}")
    return build_network(nodes, links)


def save_terrain(cell_size: float, cells: Mapping[tuple[int, int], CellTerrain],
                 path: Path | str) -> None:
    def records():
        yield {"kind": "grid_meta", "cell_size_m": cell_size}
        for (cx, cy) in sorted(cells):
            t = cells[(cx, cy)]
            yield {"kind": "cell", "cx": cx, "cy": cy, "water": t.water,
                   "green": t.green, "poi_counts": list(t.poi_counts)}

    write_jsonl(path, records())


def load_terrain(path: Path | str) -> tuple[float, dict[tuple[int, int], CellTerrain]]:
    cell_size = None
    cells: dict[tuple[int, int], CellTerrain] = {}
    for rec in read_jsonl(path):
        if rec.get("kind") == "grid_meta":
            cell_size = float(rec["cell_size_m"])
        elif rec.get("kind") == "cell":
            cells[(int(rec["cx"]), int(rec["cy"]))] = CellTerrain(
                water=bool(rec["water"]), green=bool(rec["green"]),
                poi_counts=tuple(int(c) for c in rec["poi_counts"]),
            )
        else:
            raise NetworkError(f"unknown record kind in terrain file {path}")
    if cell_size is None:
        raise NetworkError(f"terrain file {path} lacks a grid_meta record")
    return cell_size, cells
