"""Grasp-quality evaluation: the pluggable evaluator interface, the
noise-replication batch procedure (k noisy copies per candidate, one flat
batch, mean and spread per candidate), a cloud-only heuristic evaluator, and
a remote evaluator speaking a length-prefixed binary protocol."""

from __future__ import annotations

import math
import socket
import struct
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .cloud import CropBox, PointCloud, gripper_cloud
from .gripper import GripperModel
from .se3 import Pose


class EvaluationError(RuntimeError):
    """Evaluation failed for the whole batch (e.g. remote transport error)."""


@dataclass(frozen=True)
class EvaluationResult:
    """Per-candidate quality summary over k noise replicas."""

    q_values: np.ndarray
    q_mean: float
    q_spread: float

    @classmethod
    def from_values(cls, values: np.ndarray) -> "EvaluationResult":
        values = np.asarray(values, dtype=np.float64)
        return cls(
            q_values=values,
            q_mean=float(values.mean()),
            q_spread=float(values.max() - values.min()),
        )


@dataclass(frozen=True)
class EvaluatorConfig:
    k: int = 5
    noise_sigma: float = 0.002

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


class Evaluator(ABC):
    """Scores labeled grasp-frame clouds in [0, 1], one score per cloud.

    `poses` optionally carries the candidate grasp pose for each cloud;
    cloud-only evaluators ignore it, the simulation oracle requires it.
    """

    @abstractmethod
    def quality(
        self, batch: Sequence[PointCloud], poses: Sequence[Pose] | None = None
    ) -> np.ndarray:
        raise NotImplementedError


@lru_cache(maxsize=4)
def _cached_gripper_cloud(points_per_link: int, model: GripperModel) -> PointCloud:
    return gripper_cloud(points_per_link, model)


def evaluate_candidates(
    candidates: Sequence[Pose],
    scene: PointCloud,
    ev: Evaluator,
    cfg: EvaluatorConfig,
    rng_seed: int,
    box: CropBox | None = None,
    gripper: GripperModel | None = None,
    points_per_link: int = 16,
) -> list[EvaluationResult]:
    """Crop the scene in every candidate's frame, merge the gripper cloud,
    replicate each input k times with fresh Gaussian noise, evaluate the whole
    N*k batch in a single call, and reduce to one result per candidate.

    Per-candidate noise streams are split from rng_seed, so the output is
    deterministic regardless of any internal parallelism.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    box = box or CropBox()
    grip = _cached_gripper_cloud(points_per_link, gripper or GripperModel())
    n = len(candidates)
    k = cfg.k

    # Scene points/normals expressed in all candidate frames at once
    # (batched matmul: local = (p - t) @ R per candidate).
    rot = np.stack([c.rotation for c in candidates])  # (n, 3, 3)
    trans = np.stack([c.translation for c in candidates])  # (n, 3)
    diff = scene.points[None, :, :] - trans[:, None, :]
    local_pts = diff @ rot
    local_nrm = None
    if scene.normals is not None:
        local_nrm = scene.normals @ rot
    inside = (
        (np.abs(local_pts[:, :, 0]) <= box.x_half)
        & (np.abs(local_pts[:, :, 1]) <= box.y_half)
        & (local_pts[:, :, 2] >= box.z_min)
        & (local_pts[:, :, 2] <= box.z_max)
    )

    scene_labels = (
        scene.labels if scene.labels is not None else np.zeros(len(scene), dtype=np.uint8)
    )
    seeds = np.random.SeedSequence(rng_seed).spawn(n)
    fast = hasattr(ev, "quality_flat")

    pts_blocks: list[np.ndarray] = []
    nrm_blocks: list[np.ndarray] = []
    lab_blocks: list[np.ndarray] = []
    lengths: list[int] = []
    batch: list[PointCloud] = []
    flat_poses: list[Pose] = []
    for i in range(n):
        mask = inside[i]
        pts = np.concatenate([local_pts[i][mask], grip.points])
        labels = np.concatenate([scene_labels[mask], grip.labels])
        if local_nrm is not None:
            normals = np.concatenate([local_nrm[i][mask], grip.normals])
        else:
            normals = np.zeros_like(pts)
        if cfg.noise_sigma > 0.0 and len(pts):
            replicas = pts[None, :, :] + np.random.default_rng(seeds[i]).normal(
                scale=cfg.noise_sigma, size=(k, len(pts), 3)
            )
        else:
            replicas = np.broadcast_to(pts, (k, len(pts), 3))
        if fast:
            pts_blocks.append(replicas.reshape(-1, 3))
            nrm_blocks.append(np.tile(normals, (k, 1)))
            lab_blocks.append(np.tile(labels, k))
            lengths.extend([len(pts)] * k)
        else:
            for j in range(k):
                batch.append(
                    PointCloud(
                        replicas[j],
                        normals=normals if local_nrm is not None else None,
                        labels=labels,
                    )
                )
                flat_poses.append(candidates[i])

    if fast:
        seg = np.repeat(np.arange(n * k, dtype=np.int64), lengths)
        scores = np.asarray(
            ev.quality_flat(
                np.concatenate(pts_blocks),
                np.concatenate(nrm_blocks),
                np.concatenate(lab_blocks),
                seg,
                n * k,
            ),
            dtype=np.float64,
        )
    else:
        scores = np.asarray(ev.quality(batch, flat_poses), dtype=np.float64)
    if scores.shape != (n * k,):
        raise EvaluationError(f"evaluator returned {scores.shape}, expected ({n * k},)")
    return [EvaluationResult.from_values(scores[i * k : (i + 1) * k]) for i in range(n)]


class HeuristicCloudEvaluator(Evaluator):
    """Cloud-only quality heuristic, the default closed-loop evaluator.

    Combines (a) occupancy of the finger closing region by scene points,
    (b) absence of scene points inside the gripper body volumes,
    (c) centering of the contact pair between the jaws, and (d) a permissive
    antipodality gate counting points whose normals face each finger.
    Intentionally imperfect relative to the simulation oracle: it sees only
    the (noisy, possibly dropout-thinned) cloud.

    All factors reduce to segmented counts and percentiles, so a whole batch
    is scored with flat array passes (`quality_flat`); `quality` is the
    list-of-clouds wrapper over the same arithmetic.
    """

    def __init__(
        self,
        model: GripperModel | None = None,
        contact_band: float = 0.004,
        antipodal_cos: float = math.cos(math.radians(50.0)),
        occupancy_saturation: int = 20,
        collision_saturation: int = 2,
        collision_margin: float = 0.0,
        centering_weight: float = 0.5,
    ):
        self.model = model or GripperModel()
        self.contact_band = contact_band
        self.antipodal_cos = antipodal_cos
        self.occupancy_saturation = occupancy_saturation
        self.collision_saturation = collision_saturation
        self.collision_margin = collision_margin
        self.centering_weight = centering_weight
        lo, hi = self.model.closing_region()
        self._close_lo, self._close_hi = lo, hi
        self._body_boxes = self.model.link_boxes()

    def quality(
        self, batch: Sequence[PointCloud], poses: Sequence[Pose] | None = None
    ) -> np.ndarray:
        pts, nrm, labels, seg = [], [], [], []
        for i, cloud in enumerate(batch):
            if cloud.labels is None:
                raise EvaluationError("heuristic evaluator requires labeled clouds")
            pts.append(cloud.points)
            nrm.append(cloud.normals if cloud.normals is not None else np.zeros_like(cloud.points))
            labels.append(cloud.labels)
            seg.append(np.full(len(cloud), i, dtype=np.int64))
        if not batch:
            return np.zeros(0)
        return self.quality_flat(
            np.concatenate(pts),
            np.concatenate(nrm),
            np.concatenate(labels),
            np.concatenate(seg),
            len(batch),
        )

    def quality_flat(
        self,
        points: np.ndarray,
        normals: np.ndarray,
        labels: np.ndarray,
        seg: np.ndarray,
        n_clouds: int,
    ) -> np.ndarray:
        """Score `n_clouds` grasp-frame clouds given as one flat array with a
        cloud index per row. Rows must be grouped by cloud in ascending order."""
        scene = labels == 0
        pts = points[scene]
        nrm = normals[scene]
        s = seg[scene]

        in_close = np.all((pts >= self._close_lo) & (pts <= self._close_hi), axis=1)
        n_close = np.bincount(s[in_close], minlength=n_clouds)
        occupancy = np.minimum(1.0, n_close / self.occupancy_saturation)

        colliding = np.zeros(n_clouds)
        for center, half in self._body_boxes:
            inside = np.all(np.abs(pts - center) <= half + self.collision_margin, axis=1)
            colliding += np.bincount(s[inside], minlength=n_clouds)
        collision = np.minimum(1.0, colliding / self.collision_saturation)

        # centering: robust percentile extremes of the in-region x coordinates
        x_lo, x_hi = _segmented_percentiles(pts[in_close, 0], s[in_close], n_clouds, 5.0, 95.0)
        mid = 0.5 * np.abs(x_hi + x_lo)
        centering = 1.0 - self.centering_weight * np.minimum(
            1.0, mid / (0.5 * self.model.max_opening)
        )

        measured = np.linalg.norm(nrm, axis=1) > 0.5
        cm = in_close & measured
        n_measured = np.bincount(s[cm], minlength=n_clouds)
        nx = nrm[cm, 0]
        n_left = np.bincount(s[cm][nx >= self.antipodal_cos], minlength=n_clouds)
        n_right = np.bincount(s[cm][-nx >= self.antipodal_cos], minlength=n_clouds)
        antipodal = np.where(
            n_measured >= 8,
            np.minimum(1.0, np.minimum(n_left, n_right) / 4.0),
            0.7,  # mostly-unknown normals: benefit of the doubt
        )

        q = occupancy * centering * antipodal * (1.0 - collision)
        return np.where(n_close > 0, q, 0.0)


def _segmented_percentiles(
    values: np.ndarray, seg: np.ndarray, n_seg: int, q_lo: float, q_hi: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment linear-interpolation percentiles, matching np.percentile.

    Segments with no values yield 0 for both bounds; callers must mask those
    out (the heuristic zeroes empty closing regions anyway).
    """
    counts = np.bincount(seg, minlength=n_seg)
    order = np.lexsort((values, seg))
    sorted_vals = values[order]
    starts = np.zeros(n_seg, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])

    def pick(q):
        pos = (counts - 1).clip(min=0) * (q / 100.0)
        lo_idx = np.floor(pos).astype(np.int64)
        hi_idx = np.ceil(pos).astype(np.int64)
        frac = pos - lo_idx
        safe = counts > 0
        lo_v = np.zeros(n_seg)
        hi_v = np.zeros(n_seg)
        lo_v[safe] = sorted_vals[(starts + lo_idx)[safe]]
        hi_v[safe] = sorted_vals[(starts + hi_idx)[safe]]
        return lo_v + (hi_v - lo_v) * frac

    return pick(q_lo), pick(q_hi)


# --- remote evaluation protocol ---
#
# Little-endian over a stream socket, one request in flight at a time.
# Request:  u32 batch_count, then per cloud: u32 point_count,
#           point_count x (3 x f32 position, u8 label).
# Response: u32 batch_count, batch_count x f32 quality.

_POINT_DTYPE = np.dtype([("xyz", "<f4", 3), ("label", "u1")])


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    buf = b""
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            raise EvaluationError("remote evaluator closed the connection")
        buf += chunk
    return buf


def encode_request(batch: Sequence[PointCloud]) -> bytes:
    parts = [struct.pack("<I", len(batch))]
    for cloud in batch:
        if cloud.labels is None:
            raise EvaluationError("remote protocol requires labeled clouds")
        rec = np.zeros(len(cloud), dtype=_POINT_DTYPE)
        rec["xyz"] = cloud.points.astype(np.float32)
        rec["label"] = cloud.labels
        parts.append(struct.pack("<I", len(cloud)))
        parts.append(rec.tobytes())
    return b"".join(parts)


def decode_request(sock: socket.socket) -> list[PointCloud]:
    (count,) = struct.unpack("<I", _recv_exact(sock, 4))
    batch = []
    for _ in range(count):
        (npts,) = struct.unpack("<I", _recv_exact(sock, 4))
        rec = np.frombuffer(_recv_exact(sock, npts * _POINT_DTYPE.itemsize), dtype=_POINT_DTYPE)
        batch.append(
            PointCloud(rec["xyz"].astype(np.float64), labels=rec["label"].astype(np.uint8))
        )
    return batch


class RemoteEvaluator(Evaluator):
    """Client that ships batches to an external evaluation process."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), self.timeout)
                self._sock.settimeout(self.timeout)
            except OSError as exc:
                raise EvaluationError(f"cannot reach evaluator at {self.host}:{self.port}") from exc
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def quality(
        self, batch: Sequence[PointCloud], poses: Sequence[Pose] | None = None
    ) -> np.ndarray:
        sock = self._connect()
        try:
            sock.sendall(encode_request(batch))
            (count,) = struct.unpack("<I", _recv_exact(sock, 4))
            if count != len(batch):
                raise EvaluationError(f"remote returned {count} scores for {len(batch)} clouds")
            scores = np.frombuffer(_recv_exact(sock, 4 * count), dtype="<f4")
            return scores.astype(np.float64)
        except (OSError, struct.error) as exc:
            self.close()
            raise EvaluationError(f"remote evaluation failed: {exc}") from exc


class EvaluatorServer:
    """Reference server: wraps a local evaluator behind the wire protocol.

    Serves one connection at a time; used by tests and as scaffolding for
    plugging in an external model process.
    """

    def __init__(self, evaluator: Evaluator, host: str = "127.0.0.1", port: int = 0):
        self.evaluator = evaluator
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> "EvaluatorServer":
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self

    def _serve(self) -> None:
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            with conn:
                conn.settimeout(5.0)
                try:
                    while not self._stop.is_set():
                        batch = decode_request(conn)
                        scores = np.asarray(self.evaluator.quality(batch), dtype="<f4")
                        conn.sendall(struct.pack("<I", len(batch)) + scores.tobytes())
                except (EvaluationError, OSError):
                    continue

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._listener.close()
