"""Dynamic street world: vehicles, basestations, cameras, synthetic detections.

The world is a straight multi-lane street along the x axis (z up).  Vehicles
are axis-aligned boxes moving parallel to the street; two basestations sit on
opposite sides, each carrying a uniform linear array and three cameras.  In
place of rendered frames, cameras produce occlusion-aware bounding-box
detections through an ideal pinhole model plus a configurable noise model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property

import numpy as np

from .config import ScenarioConfig
from .errors import DataError

OCCLUSION_GRID = 64      # raster used for the pairwise occlusion test
NEAR_PLANE = 1e-3        # metres in front of the camera


class VehicleClass(str, Enum):
    CAR = "car"
    BUS = "bus"
    TRUCK = "truck"


# length, width, height in metres; buses and trucks are taller than cars so
# large vehicles can shadow small ones.
VEHICLE_DIMS = {
    VehicleClass.CAR: (4.6, 1.8, 1.5),
    VehicleClass.BUS: (12.0, 2.55, 3.2),
    VehicleClass.TRUCK: (9.5, 2.5, 3.6),
}


@dataclass
class SceneObject:
    """A moving box-shaped vehicle."""

    object_id: int
    object_class: VehicleClass
    center: np.ndarray
    dims: np.ndarray
    velocity: np.ndarray
    lane: int

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.dims = np.asarray(self.dims, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if np.any(self.dims <= 0):
            raise ValueError("object dimensions must be positive")

    @property
    def is_user(self) -> bool:
        # cars are the served users; buses and trucks only act as blockers
        return self.object_class is VehicleClass.CAR

    @property
    def antenna_point(self) -> np.ndarray:
        """Roof-centre point used as the user antenna location."""
        return self.center + np.array([0.0, 0.0, self.dims[2] / 2.0])

    def corners(self) -> np.ndarray:
        """The 8 corners of the axis-aligned box, shape (8, 3)."""
        half = self.dims / 2.0
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=float,
        )
        return self.center + signs * half

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        half = self.dims / 2.0
        return self.center - half, self.center + half


@dataclass
class UlaGeometry:
    """Uniform linear array along a horizontal axis."""

    elements: int
    spacing: float          # metres
    wavelength: float       # metres
    axis_azimuth: float = 0.0

    def __post_init__(self):
        if self.elements < 1:
            raise ValueError("array needs at least one element")
        if self.wavelength <= 0 or self.spacing <= 0:
            raise ValueError("wavelength and spacing must be positive")

    @property
    def axis_vector(self) -> np.ndarray:
        return np.array([math.cos(self.axis_azimuth), math.sin(self.axis_azimuth), 0.0])


@dataclass
class Camera:
    camera_id: int
    position: np.ndarray
    yaw: float              # rad, azimuth of the optical axis
    pitch: float            # rad, elevation of the optical axis
    hfov: float
    vfov: float
    image_width: int
    image_height: int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if not (0 < self.hfov < math.pi and 0 < self.vfov < math.pi):
            raise ValueError("fields of view must lie in (0, pi)")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image size must be positive")

    @cached_property
    def rotation(self) -> np.ndarray:
        """Rows are the camera's right / down / forward axes in world frame."""
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        forward = np.array([cp * cy, cp * sy, sp])
        right = np.array([sy, -cy, 0.0])
        down = np.cross(forward, right)
        return np.stack([right, down, forward])

    @cached_property
    def focal(self) -> tuple[float, float]:
        fx = (self.image_width / 2.0) / math.tan(self.hfov / 2.0)
        fy = (self.image_height / 2.0) / math.tan(self.vfov / 2.0)
        return fx, fy


@dataclass
class Basestation:
    bs_id: int
    position: np.ndarray
    ula: UlaGeometry
    cameras: list[Camera]

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)


@dataclass
class World:
    objects: list[SceneObject]
    street_length: float
    lanes: int
    lane_width: float
    basestations: list[Basestation]
    wall_south: float
    wall_north: float

    @property
    def street_width(self) -> float:
        return self.lanes * self.lane_width

    def object_boxes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ids, mins, maxs) arrays over all objects, cached per world.

        Worlds are treated as immutable snapshots (step_world returns new
        objects), so the cache never goes stale in normal use.
        """
        cached = self.__dict__.get("_box_cache")
        if cached is None:
            ids = np.array([o.object_id for o in self.objects])
            half = np.stack([o.dims for o in self.objects]) / 2.0
            centers = np.stack([o.center for o in self.objects])
            cached = (ids, centers - half, centers + half)
            self.__dict__["_box_cache"] = cached
        return cached

    def object_by_id(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)

    @property
    def users(self) -> list[SceneObject]:
        return [o for o in self.objects if o.is_user]


@dataclass
class Detection:
    object_class: VehicleClass
    bbox: tuple[float, float, float, float]   # (x1, y1, x2, y2), normalized
    confidence: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.bbox
        if not (0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0):
            raise ValueError(f"invalid bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


@dataclass(frozen=True)
class DetectorNoiseModel:
    """Imperfection model standing in for a real detector."""

    p_miss: float = 0.0
    jitter_sigma: float = 0.0          # pixels
    p_false_positive: float = 0.0      # per frame
    rng_seed: int = 0

    def __post_init__(self):
        for p in (self.p_miss, self.p_false_positive):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must be in [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    @property
    def is_noiseless(self) -> bool:
        return self.p_miss == 0.0 and self.jitter_sigma == 0.0 and self.p_false_positive == 0.0


NOISELESS = DetectorNoiseModel()


# ---------------------------------------------------------------------------
# World construction and stepping
# ---------------------------------------------------------------------------

def build_geometry(cfg: ScenarioConfig) -> tuple[list[Basestation], float, float]:
    """Basestations (with arrays and cameras) and wall positions for a config."""
    width = cfg.lanes * cfg.lane_width
    dy = width + 2.0 * cfg.bs_setback
    # Euclidean separation between the two antennas is exactly bs_separation.
    dx = math.sqrt(cfg.bs_separation**2 - dy**2)
    x_mid = cfg.street_length / 2.0
    wavelength = 299_792_458.0 / cfg.carrier_hz
    spacing = cfg.spacing_wavelengths * wavelength

    def cameras_for(bs_id: int, position: np.ndarray, center_yaw: float) -> list[Camera]:
        side = math.radians(cfg.side_yaw_deg)
        pitch = math.radians(cfg.pitch_deg)
        hfov = math.radians(cfg.hfov_deg)
        vfov = math.radians(cfg.vfov_deg)
        if bs_id == 1:
            # camera 3 looks down-street toward basestation 2
            yaws = [center_yaw + side, center_yaw, center_yaw - side]
            ids = [1, 2, 3]
        else:
            # camera 4 looks back up-street toward basestation 1
            yaws = [center_yaw - side, center_yaw, center_yaw + side]
            ids = [4, 5, 6]
        return [
            Camera(camera_id=cid, position=position.copy(), yaw=yaw, pitch=pitch,
                   hfov=hfov, vfov=vfov,
                   image_width=cfg.image_width, image_height=cfg.image_height)
            for cid, yaw in zip(ids, yaws)
        ]

    pos1 = np.array([x_mid - dx / 2.0, -cfg.bs_setback, cfg.bs_height])
    pos2 = np.array([x_mid + dx / 2.0, width + cfg.bs_setback, cfg.bs_height])
    bs1 = Basestation(
        bs_id=1, position=pos1,
        ula=UlaGeometry(cfg.elements, spacing, wavelength, axis_azimuth=0.0),
        cameras=cameras_for(1, pos1, math.pi / 2.0),
    )
    bs2 = Basestation(
        bs_id=2, position=pos2,
        ula=UlaGeometry(cfg.elements, spacing, wavelength, axis_azimuth=0.0),
        cameras=cameras_for(2, pos2, -math.pi / 2.0),
    )
    wall_south = -cfg.wall_setback
    wall_north = width + cfg.wall_setback
    return [bs1, bs2], wall_south, wall_north


def build_world(cfg: ScenarioConfig) -> World:
    """Procedurally place vehicles and return the initial world state."""
    rng = np.random.default_rng([cfg.seed, 0])
    classes = ([VehicleClass.CAR] * cfg.cars + [VehicleClass.BUS] * cfg.buses
               + [VehicleClass.TRUCK] * cfg.trucks)
    if not classes:
        raise DataError("vehicle mix is empty")
    order = rng.permutation(len(classes))
    classes = [classes[i] for i in order]

    lane_speed = rng.uniform(cfg.min_speed, cfg.max_speed, size=cfg.lanes)
    per_lane: list[list[int]] = [[] for _ in range(cfg.lanes)]
    for idx in range(len(classes)):
        per_lane[idx % cfg.lanes].append(idx)

    objects: list[SceneObject] = []
    for lane, members in enumerate(per_lane):
        if not members:
            continue
        spacing = cfg.street_length / len(members)
        longest = max(VEHICLE_DIMS[classes[i]][0] for i in members)
        if spacing < longest + 2.0:
            raise DataError(
                f"lane {lane} too dense: {len(members)} vehicles on "
                f"{cfg.street_length:.0f} m"
            )
        phase = rng.uniform(0.0, spacing)
        direction = 1.0 if lane < cfg.lanes // 2 else -1.0
        y = (lane + 0.5) * cfg.lane_width
        for slot, idx in enumerate(members):
            cls = classes[idx]
            dims = np.array(VEHICLE_DIMS[cls])
            x = (phase + slot * spacing) % cfg.street_length
            # distinct speeds per vehicle, small enough that same-lane
            # vehicles never overlap within a desk-scale trace
            speed = lane_speed[lane] * (1.0 + rng.uniform(-0.005, 0.005))
            objects.append(SceneObject(
                object_id=idx,
                object_class=cls,
                center=np.array([x, y, dims[2] / 2.0]),
                dims=dims,
                velocity=np.array([direction * speed, 0.0, 0.0]),
                lane=lane,
            ))
    objects.sort(key=lambda o: o.object_id)

    basestations, wall_south, wall_north = build_geometry(cfg)
    return World(
        objects=objects,
        street_length=cfg.street_length,
        lanes=cfg.lanes,
        lane_width=cfg.lane_width,
        basestations=basestations,
        wall_south=wall_south,
        wall_north=wall_north,
    )


def step_world(world: World, dt: float) -> World:
    """Advance every object by velocity*dt, wrapping at the street ends."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    stepped = []
    for obj in world.objects:
        center = obj.center + obj.velocity * dt
        center[0] = np.mod(center[0], world.street_length)
        stepped.append(replace(obj, center=center))
    return replace(world, objects=stepped)


# ---------------------------------------------------------------------------
# Pinhole projection
# ---------------------------------------------------------------------------

_BOX_EDGES = [
    (0, 1), (0, 2), (1, 3), (2, 3),
    (4, 5), (4, 6), (5, 7), (6, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
]


def project_object(cam: Camera, obj: SceneObject):
    """Project a box onto the image plane.

    Returns the normalized axis-aligned hull (x1, y1, x2, y2) of the
    projected corners, clipped to the image, or None when the object is
    behind the camera or entirely outside the field of view.
    """
    corners = (obj.corners() - cam.position) @ cam.rotation.T  # (8, 3) cam frame
    depths = corners[:, 2]
    if np.all(depths <= NEAR_PLANE):
        return None
    if np.all(depths > NEAR_PLANE):
        points = corners
    else:
        # clip box edges crossing the near plane so partially-behind objects
        # still produce a correct hull
        points = [corners[i] for i in range(8) if depths[i] > NEAR_PLANE]
        for i, j in _BOX_EDGES:
            zi, zj = depths[i], depths[j]
            if (zi > NEAR_PLANE) != (zj > NEAR_PLANE):
                t = (NEAR_PLANE - zi) / (zj - zi)
                points.append(corners[i] + t * (corners[j] - corners[i]))
        points = np.asarray(points)

    fx, fy = cam.focal
    u = fx * points[:, 0] / points[:, 2] + cam.image_width / 2.0
    v = fy * points[:, 1] / points[:, 2] + cam.image_height / 2.0
    x1 = max(float(u.min()), 0.0)
    x2 = min(float(u.max()), float(cam.image_width))
    y1 = max(float(v.min()), 0.0)
    y2 = min(float(v.max()), float(cam.image_height))
    if x1 >= x2 or y1 >= y2:
        return None
    return (x1 / cam.image_width, y1 / cam.image_height,
            x2 / cam.image_width, y2 / cam.image_height)


def project_objects(cam: Camera, objects: list[SceneObject]) -> list:
    """Batched project_object: one normalized bbox (or None) per object.

    The fully-in-front case is vectorized; objects straddling the near
    plane fall back to the edge-clipping scalar path.
    """
    if not objects:
        return []
    centers = np.stack([o.center for o in objects])
    half = np.stack([o.dims for o in objects]) / 2.0
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                      for sz in (-1, 1)], dtype=float)
    corners = centers[:, None, :] + signs[None, :, :] * half[:, None, :]  # (n, 8, 3)
    cam_pts = (corners - cam.position) @ cam.rotation.T
    depths = cam_pts[:, :, 2]
    front = depths > NEAR_PLANE
    fx, fy = cam.focal
    results: list = [None] * len(objects)
    all_front = np.all(front, axis=1)
    if np.any(all_front):
        pts = cam_pts[all_front]
        u = fx * pts[:, :, 0] / pts[:, :, 2] + cam.image_width / 2.0
        v = fy * pts[:, :, 1] / pts[:, :, 2] + cam.image_height / 2.0
        x1 = np.maximum(u.min(axis=1), 0.0)
        x2 = np.minimum(u.max(axis=1), float(cam.image_width))
        y1 = np.maximum(v.min(axis=1), 0.0)
        y2 = np.minimum(v.max(axis=1), float(cam.image_height))
        for slot, idx in enumerate(np.nonzero(all_front)[0]):
            if x1[slot] >= x2[slot] or y1[slot] >= y2[slot]:
                continue
            results[idx] = (x1[slot] / cam.image_width, y1[slot] / cam.image_height,
                            x2[slot] / cam.image_width, y2[slot] / cam.image_height)
    for idx in np.nonzero(~all_front)[0]:
        if np.any(front[idx]):
            results[idx] = project_object(cam, objects[idx])
    return results


def object_depth(cam: Camera, obj: SceneObject) -> float:
    """Forward distance of the object centre from the camera."""
    return float((obj.center - cam.position) @ cam.rotation[2])


def unoccluded_fraction(bbox, depth: float, others) -> float:
    """Fraction of a bbox's raster cells not covered by any nearer bbox.

    ``others`` holds (bbox, depth) pairs for every other object; strictly
    smaller depth occludes.  The test raster is OCCLUSION_GRID^2 cell
    centres spread across the bbox, which keeps the check deterministic
    and independent of object ordering.
    """
    x1, y1, x2, y2 = bbox
    n = OCCLUSION_GRID
    cx = x1 + (np.arange(n) + 0.5) / n * (x2 - x1)
    cy = y1 + (np.arange(n) + 0.5) / n * (y2 - y1)
    gx, gy = np.meshgrid(cx, cy)
    covered = np.zeros((n, n), dtype=bool)
    for (ox1, oy1, ox2, oy2), odepth in others:
        if odepth >= depth:
            continue
        if ox2 <= x1 or ox1 >= x2 or oy2 <= y1 or oy1 >= y2:
            continue
        covered |= (gx >= ox1) & (gx <= ox2) & (gy >= oy1) & (gy <= oy2)
    return 1.0 - float(covered.mean())


def detect(
    cam: Camera,
    world: World,
    noise: DetectorNoiseModel | None = None,
    rng: np.random.Generator | None = None,
    min_visible_fraction: float = 0.3,
) -> list[Detection]:
    """Occlusion-aware synthetic detections for one camera view.

    Objects are processed in id order so the output is independent of how
    the world's object list happens to be ordered.  Confidence equals the
    unoccluded fraction of the projected box.
    """
    noise = noise or NOISELESS
    if rng is None:
        rng = np.random.default_rng(noise.rng_seed)

    ordered = sorted(world.objects, key=lambda o: o.object_id)
    bboxes = project_objects(cam, ordered)
    centers = np.stack([o.center for o in ordered]) if ordered else np.zeros((0, 3))
    depths = (centers - cam.position) @ cam.rotation[2]
    projected = [
        (obj, bbox, float(depth))
        for obj, bbox, depth in zip(ordered, bboxes, depths)
        if bbox is not None
    ]

    detections: list[Detection] = []
    for obj, bbox, depth in projected:
        others = [(b, d) for o, b, d in projected if o.object_id != obj.object_id]
        fraction = unoccluded_fraction(bbox, depth, others)
        if fraction < min_visible_fraction:
            continue
        if noise.p_miss > 0.0 and rng.random() < noise.p_miss:
            continue
        coords = np.array(bbox)
        if noise.jitter_sigma > 0.0:
            scale = np.array([cam.image_width, cam.image_height,
                              cam.image_width, cam.image_height], dtype=float)
            coords = coords + rng.normal(0.0, noise.jitter_sigma, size=4) / scale
            coords = np.clip(coords, 0.0, 1.0)
            if coords[0] > coords[2]:
                coords[0], coords[2] = coords[2], coords[0]
            if coords[1] > coords[3]:
                coords[1], coords[3] = coords[3], coords[1]
            if coords[0] >= coords[2] or coords[1] >= coords[3]:
                continue  # jitter collapsed the box against an image edge
        detections.append(Detection(
            object_class=obj.object_class,
            bbox=tuple(float(c) for c in coords),
            confidence=fraction,
        ))

    if noise.p_false_positive > 0.0 and rng.random() < noise.p_false_positive:
        cls = list(VehicleClass)[int(rng.integers(0, len(VehicleClass)))]
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        w, h = rng.uniform(0.02, 0.2, size=2)
        x1, x2 = max(cx - w / 2, 0.0), min(cx + w / 2, 1.0)
        y1, y2 = max(cy - h / 2, 0.0), min(cy + h / 2, 1.0)
        if x1 < x2 and y1 < y2:
            detections.append(Detection(cls, (x1, y1, x2, y2), float(rng.uniform(0.3, 1.0))))

    return detections


# ---------------------------------------------------------------------------
# Trace (de)serialization
# ---------------------------------------------------------------------------

def object_to_record(obj: SceneObject) -> list:
    return [
        obj.object_id,
        obj.object_class.value,
        *(float(v) for v in obj.center),
        *(float(v) for v in obj.dims),
        *(float(v) for v in obj.velocity),
        obj.lane,
    ]


def object_from_record(record: list) -> SceneObject:
    return SceneObject(
        object_id=int(record[0]),
        object_class=VehicleClass(record[1]),
        center=np.array(record[2:5], dtype=float),
        dims=np.array(record[5:8], dtype=float),
        velocity=np.array(record[8:11], dtype=float),
        lane=int(record[11]),
    )


def world_from_objects(cfg: ScenarioConfig, objects: list[SceneObject]) -> World:
    basestations, wall_south, wall_north = build_geometry(cfg)
    return World(
        objects=objects,
        street_length=cfg.street_length,
        lanes=cfg.lanes,
        lane_width=cfg.lane_width,
        basestations=basestations,
        wall_south=wall_south,
        wall_north=wall_north,
    )
