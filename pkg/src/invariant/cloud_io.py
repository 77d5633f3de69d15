"""NUPC1 binary cloud files, JSON sidecar and CSV export.

Layout (little-endian):
    b"NUPC1" | uint32 d | uint64 n | f64 weights[n] | f64 coords[n*d]
    | b"IDS1" | uint64 n_clusters | int64 cluster_ids[n]
Readers that only know the first part can stop after the coordinates.
"""

import json
import logging
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from src.invariant.measure import CloudMeta, PointCloudMeasure
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

MAGIC = b"NUPC1"
IDS_MAGIC = b"IDS1"
_HEADER = struct.Struct("<IQ")
_COUNT = struct.Struct("<Q")


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def write_cloud(path: Path, cloud: PointCloudMeasure) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(cloud.dim, cloud.n_points))
        f.write(cloud.weights.astype("<f8").tobytes())
        f.write(np.ascontiguousarray(cloud.points).astype("<f8").tobytes())
        f.write(IDS_MAGIC)
        f.write(_COUNT.pack(cloud.n_clusters))
        f.write(cloud.cluster_ids.astype("<i8").tobytes())

    sidecar = {
        "format": MAGIC.decode(),
        "normalization": cloud.normalization,
        "dim": cloud.dim,
        "n_points": cloud.n_points,
        "n_clusters": cloud.n_clusters,
        "meta": cloud.meta.model_dump(),
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    logger.info(f"wrote {cloud.n_points} points to {path}")
    return path


def read_cloud(path: Path) -> PointCloudMeasure:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"cloud file {path} does not exist")
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise ConfigError(f"{path} is not a NUPC1 cloud file")

    offset = len(MAGIC)
    dim, n = _HEADER.unpack_from(raw, offset)
    offset += _HEADER.size
    weights = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).astype(float)
    offset += 8 * n
    points = np.frombuffer(raw, dtype="<f8", count=n * dim, offset=offset).astype(float)
    points = points.reshape(n, dim)
    offset += 8 * n * dim

    if raw[offset : offset + len(IDS_MAGIC)] == IDS_MAGIC:
        offset += len(IDS_MAGIC)
        (n_clusters,) = _COUNT.unpack_from(raw, offset)
        offset += _COUNT.size
        ids = np.frombuffer(raw, dtype="<i8", count=n, offset=offset).astype(np.int64)
    else:
        # without cluster ids every point is its own cluster
        n_clusters = n
        ids = np.arange(n, dtype=np.int64)

    meta = CloudMeta()
    normalization = "nuL_probability"
    side = sidecar_path(path)
    if side.exists():
        doc = json.loads(side.read_text())
        meta = CloudMeta(**doc.get("meta", {}))
        normalization = doc.get("normalization", normalization)
    else:
        logger.warning(f"no sidecar next to {path}; cloud metadata left empty")

    return PointCloudMeasure(
        points=points,
        weights=weights,
        cluster_ids=ids,
        n_clusters=int(n_clusters),
        meta=meta,
        normalization=normalization,
    )


def cloud_to_frame(cloud: PointCloudMeasure) -> pd.DataFrame:
    frame = pd.DataFrame({"excursion_id": cloud.cluster_ids, "weight": cloud.weights})
    for i in range(cloud.dim):
        frame[f"x_{i + 1}"] = cloud.points[:, i]
    return frame


def export_csv(cloud: PointCloudMeasure, path: Path) -> Path:
    path = Path(path)
    cloud_to_frame(cloud).to_csv(path, index=False)
    return path
