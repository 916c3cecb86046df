"""Route feature vectors, per-link sequence features, and user profiles.

The dense route vector covers four families: spatial (distance, lights,
tolls, turns, lane/road-class mix), temporal (peak/weekend/day/hour),
traffic (length-weighted congestion-level fractions at departure), and
landscape (water/green/POI statistics over the grid cells the route
crosses). All operations are pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .roadnet import (
    GridIndex, LinkPath, N_POI, RoadNetwork,
    link_entry_heading, link_exit_heading,
)

CONGESTION_LEVELS = ("free", "slow", "congested", "severe")
CONGESTION_SPEED_FACTORS = (1.0, 0.7, 0.45, 0.25)
TURN_THRESHOLD_DEG = 45.0
PEAK_WINDOWS = ((7, 9), (17, 19))
DEFAULT_MAX_SEQ_LEN = 64

# order of RouteFeatures.dense_vector()
DENSE_FEATURES = (
    "distance_m", "eta_s", "toll", "n_lights", "n_turns",
    "cong_free", "cong_slow", "cong_congested", "cong_severe",
    "highway_frac", "avg_lanes", "water_frac", "green_frac",
    "poi_0", "poi_1", "poi_2", "poi_3", "poi_4", "poi_5", "poi_6", "poi_7",
    "is_peak", "is_weekend",
)

PROFILE_FEATURES = (
    "hist_mean_ir", "fastest_rate", "toll_avoid_rate", "highway_rate",
    "scenic_rate", "congestion_avoid_rate", "mean_trip_km", "peak_ratio",
)

ROAD_CLASS_INDEX = {"highway": 0, "arterial": 1, "collector": 2, "local": 3}

# level index for each link at departure time
TrafficAtDeparture = Callable[[int], int]


def is_peak_hour(hour: int) -> bool:
    return any(lo <= hour < hi for lo, hi in PEAK_WINDOWS)


@dataclass(frozen=True)
class RouteFeatures:
    distance_m: float
    eta_s: float
    toll: float
    n_lights: int
    n_turns: int
    congestion_frac: tuple[float, float, float, float]
    highway_frac: float
    avg_lanes: float
    water_frac: float
    green_frac: float
    poi_vec: tuple[float, ...]
    is_peak: int
    is_weekend: int
    day_of_week: int
    hour_of_day: int

    def dense_vector(self) -> np.ndarray:
        return np.array(
            [self.distance_m, self.eta_s, self.toll, float(self.n_lights),
             float(self.n_turns), *self.congestion_frac, self.highway_frac,
             self.avg_lanes, self.water_frac, self.green_frac, *self.poi_vec,
             float(self.is_peak), float(self.is_weekend)],
            dtype=np.float64,
        )

    @classmethod
    def from_dense(cls, dense, day_of_week: int, hour_of_day: int) -> "RouteFeatures":
        d = np.asarray(dense, dtype=np.float64)
        if d.shape != (len(DENSE_FEATURES),):
            raise ValueError(f"dense vector must have {len(DENSE_FEATURES)} entries")
        return cls(
            distance_m=float(d[0]), eta_s=float(d[1]), toll=float(d[2]),
            n_lights=int(d[3]), n_turns=int(d[4]),
            congestion_frac=tuple(float(v) for v in d[5:9]),
            highway_frac=float(d[9]), avg_lanes=float(d[10]),
            water_frac=float(d[11]), green_frac=float(d[12]),
            poi_vec=tuple(float(v) for v in d[13:21]),
            is_peak=int(d[21]), is_weekend=int(d[22]),
            day_of_week=int(day_of_week), hour_of_day=int(hour_of_day),
        )


@dataclass
class LinkSeqFeatures:
    """Per-step sequence tensor, truncated/zero-padded to max_seq_len.

    numeric column order: length_m, lanes, road-class one-hot (4),
    congestion-level one-hot (4).
    """

    link_ids: np.ndarray      # int64 [max_seq_len], -1 on padded steps
    numeric: np.ndarray       # float64 [max_seq_len, 10]
    mask: np.ndarray          # bool [max_seq_len]

    @property
    def n_steps(self) -> int:
        return int(self.mask.sum())


STEP_NUMERIC_DIM = 2 + 4 + len(CONGESTION_LEVELS)


@dataclass
class UserProfile:
    hist_mean_ir: float
    fastest_rate: float
    toll_avoid_rate: float
    highway_rate: float
    scenic_rate: float
    congestion_avoid_rate: float
    mean_trip_km: float
    peak_ratio: float
    cluster_id: int = -1

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in PROFILE_FEATURES], dtype=np.float64)


class TripOutcome(NamedTuple):
    """One historical trip: driven-route features, every candidate's features,
    and the trip's inconsistency rate (vs the closest candidate)."""

    driven: RouteFeatures
    candidates: tuple[RouteFeatures, ...]
    ir: float


# ---------------------------------------------------------------------------
# Route features

def _heading_delta_deg(h_out: float, h_in: float) -> float:
    d = math.degrees(abs(h_in - h_out)) % 360.0
    return min(d, 360.0 - d)


def per_link_congestion(path: LinkPath, traffic: TrafficAtDeparture) -> list[int]:
    levels = []
    for lid in path.links:
        lvl = int(traffic(lid))
        if not 0 <= lvl < len(CONGESTION_LEVELS):
            raise ValueError(f"congestion level {lvl} out of range for link {lid}")
        levels.append(lvl)
    return levels


def _static_parts(path: LinkPath, network: RoadNetwork, grid: GridIndex) -> dict:
    links = [network.links[lid] for lid in path.links]
    total = path.total_length
    # lights at intermediate link ends only; the destination light is not crossed
    n_lights = sum(1 for l in links[:-1] if l.light_at_end)
    n_turns = 0
    for a, b in zip(links, links[1:]):
        if _heading_delta_deg(link_exit_heading(a), link_entry_heading(b)) >= TURN_THRESHOLD_DEG:
            n_turns += 1
    toll = math.fsum(l.toll for l in links)
    hw_len = math.fsum(l.length for l in links if l.road_class == "highway")
    lane_len = math.fsum(l.length * l.lanes for l in links)

    cells: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for lid in path.links:
        for c in grid.link_cells.get(lid, ()):
            if c not in seen:
                seen.add(c)
                cells.append(c)
    if not cells:
        raise ValueError(f"path references link {path.links[0]} unknown to the grid")
    n_water = sum(1 for c in cells if grid.terrain(c).water)
    n_green = sum(1 for c in cells if grid.terrain(c).green)
    poi = np.zeros(N_POI, dtype=np.float64)
    for c in cells:
        poi += np.asarray(grid.terrain(c).poi_counts, dtype=np.float64)
    total_poi = poi.sum()
    if total_poi > 0:
        poi /= total_poi

    return {
        "distance_m": total,
        "toll": toll,
        "n_lights": n_lights,
        "n_turns": n_turns,
        "highway_frac": hw_len / total,
        "avg_lanes": lane_len / total,
        "water_frac": n_water / len(cells),
        "green_frac": n_green / len(cells),
        "poi_vec": tuple(poi.tolist()),
    }


def _dynamic_parts(path: LinkPath, network: RoadNetwork,
                   levels: Sequence[int]) -> tuple[float, tuple[float, ...]]:
    eta = 0.0
    level_len = [0.0, 0.0, 0.0, 0.0]
    for lid, lvl in zip(path.links, levels):
        link = network.links[lid]
        eta += link.length / (link.speed_limit * CONGESTION_SPEED_FACTORS[lvl])
        level_len[lvl] += link.length
    frac = tuple(v / path.total_length for v in level_len)
    return eta, frac


def extract_route_features(path: LinkPath, network: RoadNetwork, grid: GridIndex,
                           traffic_at_departure: TrafficAtDeparture,
                           departure_time: datetime) -> RouteFeatures:
    """Populate the dense + sparse route record for one candidate route."""
    for lid in path.links:
        if lid not in network.links:
            raise ValueError(f"path references unknown link {lid}")
    static = _static_parts(path, network, grid)
    levels = per_link_congestion(path, traffic_at_departure)
    eta, cong = _dynamic_parts(path, network, levels)
    hour = departure_time.hour
    dow = departure_time.weekday()
    return RouteFeatures(
        distance_m=static["distance_m"], eta_s=eta, toll=static["toll"],
        n_lights=static["n_lights"], n_turns=static["n_turns"],
        congestion_frac=cong, highway_frac=static["highway_frac"],
        avg_lanes=static["avg_lanes"], water_frac=static["water_frac"],
        green_frac=static["green_frac"], poi_vec=static["poi_vec"],
        is_peak=int(is_peak_hour(hour)), is_weekend=int(dow >= 5),
        day_of_week=dow, hour_of_day=hour,
    )


def link_sequence_features(path: LinkPath, network: RoadNetwork,
                           traffic_at_departure: TrafficAtDeparture,
                           max_seq_len: int = DEFAULT_MAX_SEQ_LEN) -> LinkSeqFeatures:
    """One step per link in route order; longer routes keep the first
    max_seq_len links, shorter ones are zero-padded with mask 0."""
    from .roadnet import ROAD_CLASSES

    n = min(len(path.links), max_seq_len)
    link_ids = np.full(max_seq_len, -1, dtype=np.int64)
    numeric = np.zeros((max_seq_len, STEP_NUMERIC_DIM), dtype=np.float64)
    mask = np.zeros(max_seq_len, dtype=bool)
    for i in range(n):
        lid = path.links[i]
        link = network.links[lid]
        lvl = int(traffic_at_departure(lid))
        link_ids[i] = lid
        numeric[i, 0] = link.length
        numeric[i, 1] = link.lanes
        numeric[i, 2 + ROAD_CLASSES.index(link.road_class)] = 1.0
        numeric[i, 6 + lvl] = 1.0
        mask[i] = True
    return LinkSeqFeatures(link_ids=link_ids, numeric=numeric, mask=mask)


# ---------------------------------------------------------------------------
# User profiles

def build_user_profile(history: Sequence[TripOutcome]) -> UserProfile:
    """Aggregate stable behavioral statistics from a user's trip history.

    Rates compare the driven route against the trip's candidate set:
    "fastest" means the driven ETA matched the minimum candidate ETA,
    toll/congestion avoidance mean the driven value fell strictly below the
    candidate median.
    """
    if not history:
        raise ValueError("empty history")
    n = len(history)
    fastest = 0
    toll_avoid = 0
    cong_avoid = 0
    for driven, cands, _ in history:
        if not cands:
            raise ValueError("trip without candidates")
        etas = [c.eta_s for c in cands]
        if driven.eta_s <= min(etas) + 1e-9:
            fastest += 1
        if driven.toll < float(np.median([c.toll for c in cands])):
            toll_avoid += 1
        driven_cong = driven.congestion_frac[2] + driven.congestion_frac[3]
        med_cong = float(np.median([c.congestion_frac[2] + c.congestion_frac[3] for c in cands]))
        if driven_cong < med_cong:
            cong_avoid += 1
    return UserProfile(
        hist_mean_ir=float(np.mean([t.ir for t in history])),
        fastest_rate=fastest / n,
        toll_avoid_rate=toll_avoid / n,
        highway_rate=float(np.mean([t.driven.highway_frac for t in history])),
        scenic_rate=float(np.mean([(t.driven.water_frac + t.driven.green_frac) / 2.0
                                   for t in history])),
        congestion_avoid_rate=cong_avoid / n,
        mean_trip_km=float(np.mean([t.driven.distance_m for t in history])) / 1000.0,
        peak_ratio=float(np.mean([t.driven.is_peak for t in history])),
    )


# ---------------------------------------------------------------------------
# Cached computation over many (path, departure) pairs

class RouteFeatureComputer:
    """Feature computation with caching for repeated candidate paths.

    Static route statistics depend only on the link sequence; ETA and
    congestion depend on (link sequence, departure hour); temporal flags on
    the departure timestamp. The caches exploit that split.
    """

    def __init__(self, network: RoadNetwork, grid: GridIndex,
                 traffic_level: Callable[[int, int], int],
                 max_seq_len: int = DEFAULT_MAX_SEQ_LEN):
        self.network = network
        self.grid = grid
        self.traffic_level = traffic_level
        self.max_seq_len = max_seq_len
        self._static: dict[tuple[int, ...], dict] = {}
        self._dynamic: dict[tuple[tuple[int, ...], int], tuple] = {}
        self._seq: dict[tuple[tuple[int, ...], int], LinkSeqFeatures] = {}

    def _levels(self, path: LinkPath, hour: int) -> list[int]:
        return [self.traffic_level(lid, hour) for lid in path.links]

    def route_features(self, path: LinkPath, departure: datetime) -> RouteFeatures:
        key = path.links
        static = self._static.get(key)
        if static is None:
            static = _static_parts(path, self.network, self.grid)
            self._static[key] = static
        hour = departure.hour
        dyn = self._dynamic.get((key, hour))
        if dyn is None:
            dyn = _dynamic_parts(path, self.network, self._levels(path, hour))
            self._dynamic[(key, hour)] = dyn
        eta, cong = dyn
        dow = departure.weekday()
        return RouteFeatures(
            distance_m=static["distance_m"], eta_s=eta, toll=static["toll"],
            n_lights=static["n_lights"], n_turns=static["n_turns"],
            congestion_frac=cong, highway_frac=static["highway_frac"],
            avg_lanes=static["avg_lanes"], water_frac=static["water_frac"],
            green_frac=static["green_frac"], poi_vec=static["poi_vec"],
            is_peak=int(is_peak_hour(hour)), is_weekend=int(dow >= 5),
            day_of_week=dow, hour_of_day=hour,
        )

    def seq_features(self, path: LinkPath, departure: datetime) -> LinkSeqFeatures:
        key = (path.links, departure.hour)
        seq = self._seq.get(key)
        if seq is None:
            hour = departure.hour
            seq = link_sequence_features(
                path, self.network, lambda lid: self.traffic_level(lid, hour),
                self.max_seq_len,
            )
            self._seq[key] = seq
        return seq

    def congestion_levels(self, path: LinkPath, departure: datetime) -> list[int]:
        return self._levels(path, departure.hour)
