"""Stage logic behind the CLI commands: generation output, feature
extraction with labeling, profile building + clustering, dataset assembly
for training, and evaluation glue. File formats are in docs/formats.md.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .artifacts import read_json, read_jsonl, write_json, write_jsonl
from .dcrmodel import FeatureDataset, split_requests
from .featset import (ROAD_CLASS_INDEX, DENSE_FEATURES, PROFILE_FEATURES,
                      RouteFeatureComputer, RouteFeatures, TripOutcome,
                      build_user_profile)
from .roadnet import GridIndex, RoadNetwork, grid_overlay, load_network, load_terrain
from .synthworld import (SynthDataset, TrafficField, World, WorldConfig,
                         config_from_dict, config_to_dict)
from .trajpath import (Trajectory, UnmatchedPointError, inconsistency_rate,
                       load_trajectories, map_match)
from .userclust import KMeans, TSNE, ClusterReport, cluster_report

DENSE_DIM = len(DENSE_FEATURES)


# ---------------------------------------------------------------------------
# gen outputs

def write_world(world: World, dataset: SynthDataset, out: Path) -> list[str]:
    from .roadnet import save_network, save_terrain
    from .trajpath import save_trajectories

    save_network(world.network, out / "network.jsonl")
    save_terrain(world.config.cell_size_m, world.terrain, out / "grid.jsonl")
    write_jsonl(out / "users.jsonl", (
        {"user_id": u.user_id, "archetype": u.archetype, "temperature": u.temperature,
         "weights": u.weights}
        for u in world.users
    ))
    save_trajectories((t.trajectory for t in dataset.trips), out / "trips.jsonl")
    write_jsonl(out / "requests.jsonl", (
        {
            "request_id": t.request_id, "user_id": t.user_id, "trip_id": t.trip_id,
            "departure_time": t.departure_time.isoformat(),
            "origin": t.origin, "dest": t.dest,
            "candidates": [list(c.links) for c in t.candidates],
            "chosen_index": t.chosen_index,
            "driven_links": list(t.driven.links),
        }
        for t in dataset.trips
    ))
    write_json(out / "world.meta.json",
               {"traffic_seed": world.config.seed, "world_config": config_to_dict(world.config)})
    return ["network.jsonl", "grid.jsonl", "users.jsonl", "trips.jsonl",
            "requests.jsonl", "world.meta.json"]


def load_world_files(data: Path) -> tuple[RoadNetwork, GridIndex, TrafficField, WorldConfig]:
    network = load_network(data / "network.jsonl")
    cell_size, terrain = load_terrain(data / "grid.jsonl")
    grid = grid_overlay(network, cell_size, terrain)
    meta = read_json(data / "world.meta.json")
    cfg = config_from_dict(meta["world_config"])
    traffic = TrafficField(int(meta["traffic_seed"]), network)
    return network, grid, traffic, cfg


# ---------------------------------------------------------------------------
# extract: map-match, label, featurize

def extract_features(network: RoadNetwork, grid: GridIndex, traffic: TrafficField,
                     trajectories: dict[tuple[int, int], Trajectory],
                     requests: list[dict], *, tau: float, max_seq_len: int,
                     match_radius: float, quiet: bool = False):
    """Per request: map-match the driven trajectory, compute every
    candidate's inconsistency rate + label, and featurize. Requests whose
    trajectory cannot be matched are skipped (counted)."""
    computer = RouteFeatureComputer(network, grid, traffic.level, max_seq_len)
    feature_rows: list[dict] = []
    driven_rows: list[dict] = []
    skipped = 0
    for req in requests:
        key = (int(req["user_id"]), int(req["trip_id"]))
        traj = trajectories[key]
        try:
            matched = map_match(traj, network, radius=match_radius)
        except UnmatchedPointError:
            skipped += 1
            continue
        departure = datetime.fromisoformat(req["departure_time"])
        cand_paths = [network.make_path(c) for c in req["candidates"]]
        irs = [inconsistency_rate(matched, c, network) for c in cand_paths]
        trip_ir = min(irs)
        for ci, (path, ir) in enumerate(zip(cand_paths, irs)):
            f = computer.route_features(path, departure)
            levels = computer.congestion_levels(path, departure)
            n = min(len(path.links), max_seq_len)
            feature_rows.append({
                "request_id": int(req["request_id"]), "user_id": key[0],
                "trip_id": key[1], "cand_index": ci,
                "y": 1 if ir <= tau else 0, "ir": ir,
                "dense": [float(v) for v in f.dense_vector()],
                "sparse": {"day_of_week": f.day_of_week, "hour_of_day": f.hour_of_day},
                "seq": {
                    "link_ids": list(path.links[:n]),
                    "length_m": [network.links[l].length for l in path.links[:n]],
                    "lanes": [network.links[l].lanes for l in path.links[:n]],
                    "road_class": [ROAD_CLASS_INDEX[network.links[l].road_class]
                                   for l in path.links[:n]],
                    "congestion": levels[:n],
                },
            })
        fd = computer.route_features(matched, departure)
        driven_rows.append({
            "request_id": int(req["request_id"]), "user_id": key[0], "trip_id": key[1],
            "dense": [float(v) for v in fd.dense_vector()],
            "sparse": {"day_of_week": fd.day_of_week, "hour_of_day": fd.hour_of_day},
            "trip_ir": trip_ir,
            "distance_m": matched.total_length,
        })
    if skipped and not quiet:
        print(f"extract: skipped {skipped} unmatchable trips", file=sys.stderr)
    return feature_rows, driven_rows, skipped


# ---------------------------------------------------------------------------
# profiles + clustering

@dataclass
class ProfileTable:
    user_ids: np.ndarray          # [U]
    vectors: np.ndarray           # [U, 8]
    cluster_ids: np.ndarray       # [U]

    def by_user(self) -> dict[int, tuple[np.ndarray, int]]:
        return {int(u): (self.vectors[i], int(self.cluster_ids[i]))
                for i, u in enumerate(self.user_ids)}


def build_profiles(feature_rows: list[dict], driven_rows: list[dict],
                   train_requests: set[int]) -> tuple[np.ndarray, np.ndarray]:
    """Per-user profile vectors from training-split trips only. Users without
    any train trip receive the mean profile (rare; random splits)."""
    cands_by_req: dict[int, list[dict]] = {}
    for row in feature_rows:
        if row["request_id"] in train_requests:
            cands_by_req.setdefault(row["request_id"], []).append(row)
    history: dict[int, list[TripOutcome]] = {}
    for drow in driven_rows:
        rid = drow["request_id"]
        if rid not in train_requests or rid not in cands_by_req:
            continue
        rows = sorted(cands_by_req[rid], key=lambda r: r["cand_index"])
        driven = RouteFeatures.from_dense(drow["dense"], drow["sparse"]["day_of_week"],
                                          drow["sparse"]["hour_of_day"])
        cands = tuple(RouteFeatures.from_dense(r["dense"], r["sparse"]["day_of_week"],
                                               r["sparse"]["hour_of_day"]) for r in rows)
        history.setdefault(int(drow["user_id"]), []).append(
            TripOutcome(driven=driven, candidates=cands, ir=float(drow["trip_ir"])))

    all_users = sorted({int(r["user_id"]) for r in driven_rows})
    vectors = np.zeros((len(all_users), len(PROFILE_FEATURES)))
    have = []
    for i, uid in enumerate(all_users):
        if uid in history:
            vectors[i] = build_user_profile(history[uid]).vector()
            have.append(i)
    if not have:
        raise ValueError("no users with training history")
    if len(have) < len(all_users):
        mean_vec = vectors[have].mean(axis=0)
        for i in range(len(all_users)):
            if i not in have:
                vectors[i] = mean_vec
        warnings.warn(f"{len(all_users) - len(have)} users had no train trips; "
                      f"assigned the mean profile")
    return np.asarray(all_users, dtype=np.int64), vectors


def cluster_users(user_ids: np.ndarray, vectors: np.ndarray, *, k: int, seed: int,
                  run_tsne: bool, tsne_perplexity: float, tsne_iters: int):
    km = KMeans(n_clusters=k, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labels = km.fit_predict(vectors)
    report = cluster_report(km, vectors)
    embedding = None
    tsne = None
    if run_tsne:
        tsne = TSNE(perplexity=tsne_perplexity, n_iter=tsne_iters, random_state=seed)
        embedding = tsne.fit_transform(vectors)
    table = ProfileTable(user_ids=user_ids, vectors=vectors,
                         cluster_ids=labels.astype(np.int64))
    return km, table, report, embedding, tsne


def write_profiles(table: ProfileTable, path: Path) -> None:
    write_jsonl(path, (
        {"user_id": int(u),
         **{name: float(v) for name, v in zip(PROFILE_FEATURES, table.vectors[i])},
         "cluster_id": int(table.cluster_ids[i])}
        for i, u in enumerate(table.user_ids)
    ))


def load_profiles(path: Path) -> ProfileTable:
    users, vecs, clusters = [], [], []
    for rec in read_jsonl(path):
        users.append(int(rec["user_id"]))
        vecs.append([float(rec[name]) for name in PROFILE_FEATURES])
        clusters.append(int(rec["cluster_id"]))
    return ProfileTable(user_ids=np.asarray(users, dtype=np.int64),
                        vectors=np.asarray(vecs, dtype=np.float64),
                        cluster_ids=np.asarray(clusters, dtype=np.int64))


# ---------------------------------------------------------------------------
# dataset assembly

def build_dataset(feature_rows: list[dict], profiles: ProfileTable,
                  max_seq_len: int) -> FeatureDataset:
    n = len(feature_rows)
    by_user = profiles.by_user()
    request_id = np.empty(n, dtype=np.int64)
    cand_index = np.empty(n, dtype=np.int64)
    user_id = np.empty(n, dtype=np.int64)
    dense = np.empty((n, DENSE_DIM))
    profile = np.empty((n, len(PROFILE_FEATURES)))
    dow = np.empty(n, dtype=np.int64)
    hour = np.empty(n, dtype=np.int64)
    cluster = np.empty(n, dtype=np.int64)
    y = np.empty(n)
    ir = np.empty(n)
    lens = np.empty(n, dtype=np.int64)

    seq_ids_parts: list[list[int]] = []
    seq_cols_parts: list[np.ndarray] = []
    for i, row in enumerate(feature_rows):
        request_id[i] = row["request_id"]
        cand_index[i] = row["cand_index"]
        uid = int(row["user_id"])
        user_id[i] = uid
        dense[i] = row["dense"]
        vec, cid = by_user[uid]
        profile[i] = vec
        cluster[i] = cid
        dow[i] = row["sparse"]["day_of_week"]
        hour[i] = row["sparse"]["hour_of_day"]
        y[i] = row["y"]
        ir[i] = row["ir"]
        seq = row["seq"]
        L = min(len(seq["link_ids"]), max_seq_len)
        lens[i] = L
        seq_ids_parts.append(seq["link_ids"][:L])
        cols = np.empty((L, 4))
        cols[:, 0] = seq["length_m"][:L]
        cols[:, 1] = seq["lanes"][:L]
        cols[:, 2] = seq["road_class"][:L]
        cols[:, 3] = seq["congestion"][:L]
        seq_cols_parts.append(cols)

    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    return FeatureDataset(
        request_id=request_id, cand_index=cand_index, user_id=user_id,
        dense=dense, profile=profile, dow=dow, hour=hour, cluster=cluster,
        y=y, ir=ir, eta=dense[:, 1].copy(), distance=dense[:, 0].copy(),
        seq_ids=np.asarray([v for part in seq_ids_parts for v in part], dtype=np.int64),
        seq_cols=(np.concatenate(seq_cols_parts) if seq_cols_parts
                  else np.empty((0, 4))),
        seq_offsets=offsets,
    )


def load_feature_rows(path: Path) -> list[dict]:
    return list(read_jsonl(path))


def load_driven_rows(path: Path) -> list[dict]:
    return list(read_jsonl(path))


def split_sets(ds: FeatureDataset, assignment: dict[int, str]):
    parts = {"train": [], "val": [], "test": []}
    for i, rid in enumerate(ds.request_id):
        parts[assignment[int(rid)]].append(i)
    return {name: ds.subset(np.asarray(rows, dtype=np.int64))
            for name, rows in parts.items() if rows}


def write_splits(path: Path, assignment: dict[int, str], seed: int, ratios) -> None:
    write_json(path, {"seed": seed, "ratios": list(ratios),
                      "assignment": {str(k): v for k, v in sorted(assignment.items())}})


def load_splits(path: Path) -> dict[int, str]:
    data = read_json(path)
    return {int(k): v for k, v in data["assignment"].items()}
