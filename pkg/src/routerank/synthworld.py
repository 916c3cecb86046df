"""Seeded synthetic navigation world: lattice road network with terrain,
users planted with one of six preference archetypes, hash-seeded traffic,
trip generation with candidate recall and utility-based route choice, and
noisy GPS synthesis.

Every output is a pure function of (config, seed); per-trip randomness uses
seeds derived by an integer mix, so generation order never matters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta

import numpy as np

from .featset import CONGESTION_SPEED_FACTORS, is_peak_hour
from .roadnet import (
    CellTerrain, GridIndex, Link, LinkPath, N_POI, Node, RoadNetwork,
    build_network, grid_overlay, k_shortest_paths, shortest_path,
)
from .trajpath import GpsPoint, Trajectory

_MASK = (1 << 64) - 1

# epoch for GpsPoint timestamps (naive local calendar, no timezone)
TIME_EPOCH = datetime(2024, 1, 1)


def _mix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def hash_ints(*vals: int) -> int:
    h = 0x243F6A8885A308D3
    for v in vals:
        h = _mix(h ^ (v & _MASK))
    return h


def hash_uniform(*vals: int) -> float:
    return hash_ints(*vals) / 2.0**64


ARCHETYPE_NAMES = (
    "toll_sensitive", "fastest", "road_quality",
    "highway", "scenic", "congestion_sensitive",
)

# utility terms, all z-scored within a request's candidate set:
#   eta, distance, toll, lanes, highway, scenic, congestion (congested+severe
#   length fraction), late_congestion (mean severity of the last 3 links minus
#   the route mean -- visible only through the link sequence order)
_BASE_WEIGHTS: dict[str, dict[str, float]] = {
    "toll_sensitive": {"toll": -6.0, "distance": -1.5, "eta": -0.3},
    "fastest": {"eta": -6.0},
    "road_quality": {"lanes": 8.0, "toll": -6.0, "eta": -0.3},
    "highway": {"highway": 6.0, "eta": -1.2},
    "scenic": {"scenic": 10.0, "eta": -0.6},
    "congestion_sensitive": {"congestion": -8.0, "eta": -0.6},
}
_UNIVERSAL_WEIGHTS = {"late_congestion": -0.5}
_LATE_CONG_EXTRA = {"congestion_sensitive": -2.0}
UTILITY_TERMS = ("eta", "distance", "toll", "lanes", "highway", "scenic",
                 "congestion", "late_congestion")

# fixed scales that bring each utility term to roughly unit range; weights act
# on absolute feature levels so a user's behavior is consistent across
# requests regardless of candidate-set composition
_TERM_SCALES = {
    "eta": 1.0 / 600.0,        # seconds -> 10-minute units
    "distance": 1.0 / 10_000.0,  # meters -> 10-km units
    "toll": 1.0 / 10.0,
    "lanes": 1.0 / 4.0,
    "highway": 1.0,
    "scenic": 1.0,
    "congestion": 1.0,
    "late_congestion": 1.0 / 3.0,
}


@dataclass(frozen=True)
class Archetype:
    name: str
    weights: dict[str, float]
    temperature: float


def builtin_archetypes(temperature: float) -> tuple[Archetype, ...]:
    out = []
    for name in ARCHETYPE_NAMES:
        w = dict.fromkeys(UTILITY_TERMS, 0.0)
        w.update(_UNIVERSAL_WEIGHTS)
        w.update(_BASE_WEIGHTS[name])
        w["late_congestion"] = w.get("late_congestion", 0.0) + _LATE_CONG_EXTRA.get(name, 0.0)
        out.append(Archetype(name=name, weights=w, temperature=temperature))
    return tuple(out)


@dataclass(frozen=True)
class UserSpec:
    user_id: int
    archetype: str
    weights: dict[str, float]
    temperature: float


@dataclass
class WorldConfig:
    nx: int = 20
    ny: int = 20
    spacing_m: float = 900.0
    diagonal_fraction: float = 0.25
    cell_size_m: float = 250.0
    highway_every: int = 6
    arterial_every: int = 3
    n_users: int = 120
    trips_per_user: int = 20
    k_candidates: int = 11
    gps_noise_m: float = 5.0
    sample_interval_s: float = 10.0
    p_detour: float = 0.15
    temperature: float = 0.5
    weight_jitter: float = 0.05
    od_pool_sizes: tuple[int, int, int] = (60, 25, 15)
    stratum_mix: tuple[float, float, float] = (0.60, 0.25, 0.15)
    month_start: str = "2024-03-04"   # a Monday
    n_days: int = 28
    seed: int = 0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("lattice must be at least 2x2")
        for name in ("n_users", "trips_per_user", "k_candidates"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.gps_noise_m < 0 or self.sample_interval_s <= 0:
            raise ValueError("invalid GPS synthesis parameters")


def lattice_link_count(nx: int, ny: int, diagonal_fraction: float) -> int:
    """Directed link count: both directions of every rook edge, plus one
    two-way diagonal in each unit cell selected by diagonal_fraction (exact
    only for fraction 0 or 1)."""
    rook = 2 * (ny * (nx - 1) + nx * (ny - 1))
    if diagonal_fraction == 0.0:
        return rook
    if diagonal_fraction == 1.0:
        return rook + 2 * (nx - 1) * (ny - 1)
    raise ValueError("link count is only closed-form for fraction 0 or 1")


class TrafficField:
    """Per-(link, hour) congestion level, hash-seeded and class-dependent;
    peak hours shift probability mass toward congested states."""

    # cumulative probabilities over (free, slow, congested, severe)
    _OFFPEAK = {
        "highway": (0.78, 0.95, 0.99, 1.0),
        "arterial": (0.60, 0.85, 0.96, 1.0),
        "collector": (0.55, 0.82, 0.95, 1.0),
        "local": (0.42, 0.70, 0.90, 1.0),
    }
    _PEAK = {
        "highway": (0.55, 0.82, 0.95, 1.0),
        "arterial": (0.30, 0.60, 0.86, 1.0),
        "collector": (0.28, 0.58, 0.85, 1.0),
        "local": (0.18, 0.45, 0.78, 1.0),
    }

    def __init__(self, seed: int, network: RoadNetwork):
        self.seed = seed
        self._classes = {lid: l.road_class for lid, l in network.links.items()}

    def level(self, link_id: int, hour: int) -> int:
        table = self._PEAK if is_peak_hour(hour) else self._OFFPEAK
        cum = table[self._classes[link_id]]
        u = hash_uniform(self.seed, 0x7172, link_id, hour)
        for lvl, c in enumerate(cum):
            if u < c:
                return lvl
        return len(cum) - 1


@dataclass
class World:
    config: WorldConfig
    network: RoadNetwork
    grid: GridIndex
    terrain: dict[tuple[int, int], CellTerrain]
    users: tuple[UserSpec, ...]
    traffic: TrafficField


@dataclass
class TripRecord:
    request_id: int
    user_id: int
    trip_id: int
    departure_time: datetime
    origin: int
    dest: int
    candidates: tuple[LinkPath, ...]
    chosen_index: int
    driven: LinkPath
    trajectory: Trajectory


@dataclass
class SynthDataset:
    world: World
    trips: list[TripRecord] = field(default_factory=list)


# ---------------------------------------------------------------------------
# World construction

_CLASS_SPEED = {"highway": 22.2, "arterial": 16.7, "collector": 13.9, "local": 11.1}
_CLASS_LANES = {"highway": 4, "arterial": 3, "collector": 2, "local": 1}
_CLASS_LIGHT_P = {"highway": 0.02, "arterial": 0.50, "collector": 0.35, "local": 0.25}
_TOLL_PER_M = 1e-3  # highways only
_SPEED_JITTER = 0.06  # lognormal sigma per link pair; breaks exact path-cost ties


def _gridline_class(index: int, cfg: WorldConfig, salt: int) -> str:
    if index % cfg.highway_every == 0:
        return "highway"
    if index % cfg.arterial_every == 0:
        return "arterial"
    return "collector" if hash_uniform(cfg.seed, salt, index) < 0.5 else "local"


def generate_world(config: WorldConfig) -> World:
    """Lattice-with-diagonals road graph with seeded link attributes, a river
    corridor plus parks painted onto the grid, and archetype users assigned
    round-robin with per-user weight jitter."""
    cfg = config
    nx, ny, s = cfg.nx, cfg.ny, cfg.spacing_m

    def node_id(ix: int, iy: int) -> int:
        return iy * nx + ix

    nodes = [Node(node_id(ix, iy), ix * s, iy * s) for iy in range(ny) for ix in range(nx)]

    col_class = {ix: _gridline_class(ix, cfg, 0xC01) for ix in range(nx)}
    row_class = {iy: _gridline_class(iy, cfg, 0x401) for iy in range(ny)}

    links: list[Link] = []
    lid = 0

    def add_two_way(a: int, b: int, cls: str, length: float, geom):
        nonlocal lid
        # same speed both directions so reverse links stay symmetric
        jitter_rng = np.random.default_rng(hash_ints(cfg.seed, 0x5BEE, min(a, b), max(a, b)))
        speed = _CLASS_SPEED[cls] * float(jitter_rng.lognormal(0.0, _SPEED_JITTER))
        for u, v, g in ((a, b, geom), (b, a, tuple(reversed(geom)))):
            lanes = _CLASS_LANES[cls]
            if cls == "local" and hash_uniform(cfg.seed, 0x1A9E5, u, v) < 0.4:
                lanes = 2
            links.append(Link(
                id=lid, from_node=u, to_node=v, length=length, lanes=lanes,
                road_class=cls, speed_limit=speed,
                toll=_TOLL_PER_M * length if cls == "highway" else 0.0,
                geometry=g,
                light_at_end=hash_uniform(cfg.seed, 0x119, u, v) < _CLASS_LIGHT_P[cls],
            ))
            lid += 1

    for iy in range(ny):
        for ix in range(nx - 1):
            a, b = node_id(ix, iy), node_id(ix + 1, iy)
            add_two_way(a, b, row_class[iy], s, ((ix * s, iy * s), ((ix + 1) * s, iy * s)))
    for ix in range(nx):
        for iy in range(ny - 1):
            a, b = node_id(ix, iy), node_id(ix, iy + 1)
            add_two_way(a, b, col_class[ix], s, ((ix * s, iy * s), (ix * s, (iy + 1) * s)))
    diag_len = s * math.sqrt(2.0)
    for ix in range(nx - 1):
        for iy in range(ny - 1):
            if hash_uniform(cfg.seed, 0xD1A6, ix, iy) >= cfg.diagonal_fraction:
                continue
            if hash_uniform(cfg.seed, 0xD1A7, ix, iy) < 0.5:
                a, b = node_id(ix, iy), node_id(ix + 1, iy + 1)
                geom = ((ix * s, iy * s), ((ix + 1) * s, (iy + 1) * s))
            else:
                a, b = node_id(ix + 1, iy), node_id(ix, iy + 1)
                geom = (((ix + 1) * s, iy * s), (ix * s, (iy + 1) * s))
            add_two_way(a, b, "collector", diag_len, geom)

    network = build_network(nodes, links)

    terrain = _paint_terrain(cfg)
    grid = grid_overlay(network, cfg.cell_size_m, terrain)

    archetypes = builtin_archetypes(cfg.temperature)
    users = []
    for uid in range(cfg.n_users):
        arch = archetypes[uid % len(archetypes)]
        rng = np.random.default_rng(hash_ints(cfg.seed, 0x05E8, uid))
        weights = {
            k: float(v * rng.lognormal(0.0, cfg.weight_jitter)) if v != 0.0 else 0.0
            for k, v in arch.weights.items()
        }
        users.append(UserSpec(user_id=uid, archetype=arch.name, weights=weights,
                              temperature=arch.temperature))

    return World(config=cfg, network=network, grid=grid, terrain=terrain,
                 users=tuple(users), traffic=TrafficField(cfg.seed, network))


def _paint_terrain(cfg: WorldConfig) -> dict[tuple[int, int], CellTerrain]:
    """River stripe with green banks, a few seeded parks, and POI counts that
    decay with distance from the town center."""
    s = cfg.cell_size_m
    max_x = (cfg.nx - 1) * cfg.spacing_m
    max_y = (cfg.ny - 1) * cfg.spacing_m
    n_cx = int(max_x // s) + 1
    n_cy = int(max_y // s) + 1
    river_cx = int((cfg.nx // 3) * cfg.spacing_m // s)
    center = (n_cx / 2.0, n_cy / 2.0)

    parks = []
    for p in range(3):
        px = int(hash_uniform(cfg.seed, 0x9A86, p) * (n_cx - 4)) + 1
        py = int(hash_uniform(cfg.seed, 0x9A87, p) * (n_cy - 4)) + 1
        w = 2 + int(hash_uniform(cfg.seed, 0x9A88, p) * 3)
        h = 2 + int(hash_uniform(cfg.seed, 0x9A89, p) * 3)
        parks.append((px, py, w, h))

    cells: dict[tuple[int, int], CellTerrain] = {}
    for cx in range(-1, n_cx + 1):
        for cy in range(-1, n_cy + 1):
            water = abs(cx - river_cx) <= 1
            green = (not water) and (abs(cx - river_cx) <= 3
                                     or any(px <= cx < px + w and py <= cy < py + h
                                            for px, py, w, h in parks))
            dist_c = math.hypot(cx - center[0], cy - center[1]) / max(n_cx, n_cy)
            poi = [0] * N_POI
            for cat in range(N_POI):
                u = hash_uniform(cfg.seed, 0x90170 + cat, cx, cy)
                if cat in (1, 2):        # commercial, office concentrate downtown
                    lam = 3.0 * max(0.0, 1.0 - 2.0 * dist_c)
                elif cat == 0:           # residential grows outward
                    lam = 1.0 + 2.0 * dist_c
                else:
                    lam = 0.5
                poi[cat] = int(u * lam * 2.0)
            cells[(cx, cy)] = CellTerrain(water=water, green=green, poi_counts=tuple(poi))
    return cells


# ---------------------------------------------------------------------------
# Trips

def _free_flow_weights(network: RoadNetwork) -> dict[int, float]:
    return {lid: l.length / l.speed_limit for lid, l in network.links.items()}


def _length_weights(network: RoadNetwork) -> dict[int, float]:
    return {lid: l.length for lid, l in network.links.items()}


STRATUM_BOUNDS_M = ((2000.0, 10000.0), (10000.0, 20000.0), (20000.0, math.inf))


def _build_od_pools(world: World, rng: np.random.Generator):
    """Per-stratum origin/destination pools (stratum = shortest-path length)
    with k-shortest-path candidates computed once per pool entry."""
    cfg = world.config
    net = world.network
    lengths = _length_weights(net)
    ff = _free_flow_weights(net)
    node_ids = sorted(net.nodes)
    pools: list[list[dict]] = [[], [], []]
    targets = list(cfg.od_pool_sizes)
    attempts = 0
    max_attempts = 400 * sum(targets)
    while any(len(p) < t for p, t in zip(pools, targets)) and attempts < max_attempts:
        attempts += 1
        o, d = rng.choice(node_ids, size=2, replace=False)
        o, d = int(o), int(d)
        no, nd = net.nodes[o], net.nodes[d]
        euclid = math.hypot(no.x - nd.x, no.y - nd.y)
        manhattan = abs(no.x - nd.x) + abs(no.y - nd.y)
        # true path length lies in [euclid, ~manhattan]; skip samples that
        # cannot land in any still-unfilled stratum before running Dijkstra
        feasible = any(
            len(pools[i]) < targets[i] and euclid < hi and manhattan * 1.2 >= lo
            for i, (lo, hi) in enumerate(STRATUM_BOUNDS_M)
        )
        if not feasible:
            continue
        sp = shortest_path(net, o, d, lengths)
        if sp is None:
            continue
        dist = sp[0]
        stratum = next((i for i, (lo, hi) in enumerate(STRATUM_BOUNDS_M) if lo <= dist < hi), None)
        if stratum is None or len(pools[stratum]) >= targets[stratum]:
            continue
        cands = k_shortest_paths(net, o, d, cfg.k_candidates, ff)
        if not cands:
            continue
        pools[stratum].append({"origin": o, "dest": d, "candidates": tuple(cands)})
    if not any(pools):
        raise RuntimeError("could not populate any OD pool; enlarge the lattice")
    for i, (p, t) in enumerate(zip(pools, targets)):
        if len(p) < t:
            warnings.warn(f"OD pool for stratum {i} has {len(p)}/{t} entries; "
                          f"trips fall back to populated strata")
    return pools


def _candidate_utilities(world: World, user: UserSpec, cands, departure: datetime,
                         computer) -> np.ndarray:
    """Utility of each candidate under the user's archetype weights, on fixed
    absolute feature scales (see _TERM_SCALES)."""
    rows = []
    for path in cands:
        f = computer.route_features(path, departure)
        levels = computer.congestion_levels(path, departure)
        tail = levels[-3:] if len(levels) >= 3 else levels
        late = float(np.mean(tail)) - float(np.mean(levels))
        rows.append([f.eta_s, f.distance_m, f.toll, f.avg_lanes, f.highway_frac,
                     (f.water_frac + f.green_frac) / 2.0,
                     f.congestion_frac[2] + f.congestion_frac[3], late])
    M = np.asarray(rows, dtype=np.float64)
    scale = np.array([_TERM_SCALES[t] for t in UTILITY_TERMS])
    w = np.array([user.weights[t] for t in UTILITY_TERMS])
    return (M * scale) @ w


def _choose(utilities: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    if temperature <= 0.0:
        return int(np.argmax(utilities))
    g = rng.gumbel(size=len(utilities))
    return int(np.argmax(utilities / temperature + g))


def _is_reverse(net: RoadNetwork, a: int, b: int) -> bool:
    la, lb = net.links[a], net.links[b]
    return la.from_node == lb.to_node and la.to_node == lb.from_node


def _perturb_path(world: World, path: LinkPath, rng: np.random.Generator) -> LinkPath:
    """Local detour: replace a short sub-path with the best alternative that
    avoids its links (and their reverses, so the driven route never contains
    a U-turn). Falls back to the original path when no alternative exists."""
    net = world.network
    nodes = net.path_nodes(path)
    m = len(path.links)
    if m < 3:
        return path
    i = int(rng.integers(0, m - 2))
    span = int(rng.integers(2, 5))
    j = min(i + span, m)
    banned = set(path.links[i:j])
    for lid in path.links[i:j]:
        l = net.links[lid]
        for out in net.out_links.get(l.to_node, ()):
            if _is_reverse(net, lid, out):
                banned.add(out)
    alt = shortest_path(net, nodes[i], nodes[j], _length_weights(net),
                        banned_links=frozenset(banned))
    if alt is None:
        return path
    new_links = path.links[:i] + alt[1] + path.links[j:]
    for a, b in zip(new_links, new_links[1:]):
        if _is_reverse(net, a, b):
            return path
    return net.make_path(new_links)


def _sample_departure(cfg: WorldConfig, rng: np.random.Generator,
                      avoids_peak: bool) -> datetime:
    """Weekday hours peak at 7-9 and 17-19; congestion-averse users shift
    their travel off-peak instead."""
    start = datetime.fromisoformat(cfg.month_start)
    day = int(rng.integers(0, cfg.n_days))
    date = start + timedelta(days=day)
    if date.weekday() < 5:
        hour_weights = np.array([0.2, 0.1, 0.1, 0.1, 0.3, 0.8, 1.5, 3.0, 3.0, 1.5,
                                 1.0, 1.0, 1.2, 1.0, 1.0, 1.2, 1.5, 3.0, 3.0, 1.5,
                                 1.0, 0.8, 0.5, 0.3])
        if avoids_peak:
            hour_weights = hour_weights.copy()
            for lo, hi in ((7, 9), (17, 19)):
                hour_weights[lo:hi] = 0.2
    else:
        hour_weights = np.array([0.3, 0.2, 0.1, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 1.8,
                                 2.0, 2.0, 2.0, 1.8, 1.8, 1.8, 1.5, 1.2, 1.0, 1.0,
                                 0.8, 0.6, 0.5, 0.4])
    hour = int(rng.choice(24, p=hour_weights / hour_weights.sum()))
    minute = int(rng.integers(0, 60))
    second = int(rng.integers(0, 60))
    return date + timedelta(hours=hour, minutes=minute, seconds=second)


def synthesize_gps(path: LinkPath, network: RoadNetwork, sigma: float, interval: float,
                   seed: int, link_speed=None, *, user_id: int = 0, trip_id: int = 0,
                   departure_time: datetime = TIME_EPOCH) -> Trajectory:
    """Place points along the path geometry at a constant synthetic speed per
    link, timestamps spaced by `interval`, with isotropic Gaussian noise.
    Both endpoints are always included."""
    if not path.links:
        raise ValueError("empty path")
    if sigma < 0 or interval <= 0:
        raise ValueError("sigma must be >= 0 and interval > 0")
    if link_speed is None:
        link_speed = lambda lid: network.links[lid].speed_limit

    # piecewise-linear (time -> position) over the concatenated geometry
    segs = []  # (t0, t1, ax, ay, bx, by)
    t = 0.0
    for lid in path.links:
        link = network.links[lid]
        v = float(link_speed(lid))
        if v <= 0:
            raise ValueError(f"non-positive speed on link {lid}")
        geom = link.geometry
        for (ax, ay), (bx, by) in zip(geom, geom[1:]):
            seg_len = math.hypot(bx - ax, by - ay)
            dt = seg_len / v
            segs.append((t, t + dt, ax, ay, bx, by))
            t += dt
    total_t = t

    times = [i * interval for i in range(int(total_t / interval) + 1)]
    if times[-1] < total_t - 1e-9:
        times.append(total_t)

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=(len(times), 2)) if sigma > 0 else np.zeros((len(times), 2))

    base = (departure_time - TIME_EPOCH).total_seconds()
    pts = []
    si = 0
    for i, tt in enumerate(times):
        while si < len(segs) - 1 and tt > segs[si][1]:
            si += 1
        t0, t1, ax, ay, bx, by = segs[si]
        frac = 0.0 if t1 == t0 else min(max((tt - t0) / (t1 - t0), 0.0), 1.0)
        x = ax + (bx - ax) * frac + noise[i, 0]
        y = ay + (by - ay) * frac + noise[i, 1]
        pts.append(GpsPoint(t=base + tt, x=x, y=y))
    return Trajectory(user_id=user_id, trip_id=trip_id,
                      departure_time=departure_time, points=tuple(pts))


def generate_trips(world: World, computer=None) -> SynthDataset:
    """Sample every user's trips: stratified OD choice, calendar departure
    with weekday/peak structure, utility-based route choice with Gumbel
    noise, occasional local detours, and noisy GPS synthesis."""
    from .featset import RouteFeatureComputer

    cfg = world.config
    if computer is None:
        computer = RouteFeatureComputer(world.network, world.grid, world.traffic.level)
    pool_rng = np.random.default_rng(hash_ints(cfg.seed, 0x0D90))
    pools = _build_od_pools(world, pool_rng)
    mix = np.asarray(cfg.stratum_mix, dtype=np.float64)
    mix = mix / mix.sum()

    dataset = SynthDataset(world=world)
    request_id = 0
    for user in world.users:
        for trip_id in range(cfg.trips_per_user):
            rng = np.random.default_rng(hash_ints(cfg.seed, 0x7819, user.user_id, trip_id))
            stratum = int(rng.choice(3, p=mix))
            pool = pools[stratum] if pools[stratum] else next(p for p in pools if p)
            entry = pool[int(rng.integers(0, len(pool)))]
            departure = _sample_departure(cfg, rng,
                                          avoids_peak=user.archetype == "congestion_sensitive")
            cands = entry["candidates"]
            utilities = _candidate_utilities(world, user, cands, departure, computer)
            chosen = _choose(utilities, user.temperature, rng)
            driven = cands[chosen]
            if cfg.p_detour > 0 and rng.uniform() < cfg.p_detour:
                driven = _perturb_path(world, driven, rng)
            hour = departure.hour
            speed = lambda lid, h=hour: (world.network.links[lid].speed_limit
                                         * CONGESTION_SPEED_FACTORS[world.traffic.level(lid, h)])
            traj = synthesize_gps(
                driven, world.network, cfg.gps_noise_m, cfg.sample_interval_s,
                seed=hash_ints(cfg.seed, 0x69B5, user.user_id, trip_id),
                link_speed=speed, user_id=user.user_id, trip_id=trip_id,
                departure_time=departure,
            )
            dataset.trips.append(TripRecord(
                request_id=request_id, user_id=user.user_id, trip_id=trip_id,
                departure_time=departure, origin=entry["origin"], dest=entry["dest"],
                candidates=cands, chosen_index=chosen, driven=driven, trajectory=traj,
            ))
            request_id += 1
    return dataset


def config_to_dict(cfg: WorldConfig) -> dict:
    d = asdict(cfg)
    d["od_pool_sizes"] = list(cfg.od_pool_sizes)
    d["stratum_mix"] = list(cfg.stratum_mix)
    return d


def config_from_dict(d: dict) -> WorldConfig:
    kwargs = dict(d)
    if "od_pool_sizes" in kwargs:
        kwargs["od_pool_sizes"] = tuple(kwargs["od_pool_sizes"])
    if "stratum_mix" in kwargs:
        kwargs["stratum_mix"] = tuple(kwargs["stratum_mix"])
    known = WorldConfig.__dataclass_fields__.keys()
    unknown = set(kwargs) - set(known)
    if unknown:
        raise ValueError(f"unknown world config keys: {sorted(unknown)}")
    return WorldConfig(**kwargs)
