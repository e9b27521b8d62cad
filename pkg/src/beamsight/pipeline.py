"""From simulated frames to balanced observed-sequence datasets.

Stages: a per-frame seed pass (detections + serving beam + link status per
user and basestation), sliding-window sequence extraction with future-window
labels, per-camera balanced sampling with a stratified train/validation
split, and conjugate-pair extraction for the handoff evaluation.

Dataset files are newline-delimited JSON records with a fixed field order,
so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, scenario_from_dict
from .errors import DataError
from .phy import Codebook, channel_vector, los_status, select_beam, synthesize_paths
from .scene import (
    Detection,
    DetectorNoiseModel,
    VehicleClass,
    World,
    detect,
    object_from_record,
    object_to_record,
    project_objects,
    world_from_objects,
)

log = logging.getLogger(__name__)

DETECT_STREAM = 101   # rng domain separator for per-frame detector draws


def camera_to_bs(camera_id: int) -> int:
    """Cameras 1-3 belong to basestation 1, cameras 4-6 to basestation 2."""
    return 1 if camera_id <= 3 else 2


@dataclass
class SeedTuple:
    """One user's per-frame observation at one basestation."""

    user_id: int
    frame: int
    detections: list[Detection]   # full frame detections of the owning camera
    beam: int                     # 1-based codebook index
    link_status: int              # 0 = LOS, 1 = NLOS
    position: np.ndarray


@dataclass
class SeedStream:
    """Maximal run of consecutive frames owned by one camera."""

    bs_id: int
    camera_id: int
    user_id: int
    tuples: list[SeedTuple] = field(default_factory=list)


@dataclass
class ObservedSequence:
    camera_id: int
    user_id: int
    t_end: int                    # frame index of the last observed element
    beams: list[int]
    detections: list[list[Detection]]

    def __post_init__(self):
        if len(self.beams) != len(self.detections):
            raise ValueError("beams and detections must have equal length")


@dataclass
class FutureLabel:
    status: int                          # 1 when any future instance is NLOS
    window: tuple[int, ...]              # the future link statuses
    blockage_instance: int | None        # first 1-based NLOS index, if any

    def __post_init__(self):
        if self.status != (1 if any(self.window) else 0):
            raise ValueError("label inconsistent with its future window")


@dataclass
class LabeledSample:
    sequence: ObservedSequence
    label: FutureLabel

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.sequence.camera_id, self.sequence.user_id, self.sequence.t_end)


@dataclass
class LabeledDataset:
    samples: list[LabeledSample]
    split: str


@dataclass
class ConjugateSample:
    """Same user and time at both basestations with opposite future statuses."""

    user_id: int
    t_end: int
    sample_bs1: LabeledSample
    sample_bs2: LabeledSample
    category: int   # 1: serving bs1 needs handoff to bs2; 2: the opposite

    def __post_init__(self):
        if self.category not in (1, 2):
            raise ValueError("category must be 1 or 2")


# ---------------------------------------------------------------------------
# Seed pass
# ---------------------------------------------------------------------------

def build_seed(worlds: list[World], cfg: ScenarioConfig) -> list[SeedStream]:
    """Per-user, per-camera seed streams for a sequence of world states.

    At every frame, each user is owned by the basestation camera with the
    largest projected bbox area; the owning camera's detection list stands
    in for the frame.  A stream breaks whenever ownership changes or the
    user falls out of every camera's view.
    """
    if not worlds:
        raise DataError("empty world trace")
    noise = DetectorNoiseModel(
        p_miss=cfg.p_miss,
        jitter_sigma=cfg.jitter_sigma,
        p_false_positive=cfg.p_false_positive,
        rng_seed=cfg.seed,
    )
    basestations = worlds[0].basestations
    codebooks = {bs.bs_id: Codebook.build(bs.ula, cfg.beams) for bs in basestations}

    finished: list[SeedStream] = []
    active: dict[tuple[int, int], SeedStream] = {}
    seen_users: set[int] = set()
    all_users: set[int] = set()

    def close(key):
        stream = active.pop(key, None)
        if stream is not None:
            finished.append(stream)

    for frame, world in enumerate(worlds):
        det_cache = {}
        user_bboxes = {}
        users = world.users
        for bs in world.basestations:
            for cam in bs.cameras:
                rng = np.random.default_rng([cfg.seed, DETECT_STREAM, frame, cam.camera_id])
                det_cache[cam.camera_id] = detect(
                    cam, world, noise, rng=rng,
                    min_visible_fraction=cfg.min_visible_fraction,
                )
                user_bboxes[cam.camera_id] = project_objects(cam, users)
        for bs in world.basestations:
            codebook = codebooks[bs.bs_id]
            for u_idx, user in enumerate(users):
                all_users.add(user.object_id)
                key = (bs.bs_id, user.object_id)
                # ownership: the visible camera whose optical axis points
                # closest at the user (projected-area ranking degenerates:
                # perspective stretch near the FOV edge always inflates the
                # side cameras' boxes, starving the central camera)
                owner, best_align = None, -2.0
                for cam in bs.cameras:
                    if user_bboxes[cam.camera_id][u_idx] is None:
                        continue
                    to_user = user.center - cam.position
                    align = float(to_user @ cam.rotation[2]) / float(
                        np.linalg.norm(to_user))
                    if align > best_align:
                        owner, best_align = cam, align
                if owner is None:
                    close(key)
                    continue
                seen_users.add(user.object_id)
                status = los_status(bs, user, world)
                paths = synthesize_paths(bs, user, world, cfg.reflection_loss_db,
                                         los=status)
                channel = channel_vector(paths, bs.ula, cfg.subcarriers,
                                         cfg.cyclic_prefix, cfg.sample_time)
                beam = select_beam(channel, codebook)
                tup = SeedTuple(
                    user_id=user.object_id, frame=frame,
                    detections=det_cache[owner.camera_id],
                    beam=beam, link_status=status, position=user.center.copy(),
                )
                stream = active.get(key)
                if (stream is None or stream.camera_id != owner.camera_id
                        or stream.tuples[-1].frame != frame - 1):
                    close(key)
                    stream = SeedStream(bs_id=bs.bs_id, camera_id=owner.camera_id,
                                        user_id=user.object_id)
                    active[key] = stream
                stream.tuples.append(tup)

    for key in sorted(active):
        finished.append(active[key])
    skipped = len(all_users - seen_users)
    if skipped:
        log.info("skipped %d users never visible to any camera", skipped)
    finished.sort(key=lambda s: (s.bs_id, s.camera_id, s.user_id,
                                 s.tuples[0].frame if s.tuples else -1))
    return finished


# ---------------------------------------------------------------------------
# Windowing and labels
# ---------------------------------------------------------------------------

def window_sequences(stream: SeedStream, observed: int = 8, future: int = 5) -> list[LabeledSample]:
    """Stride-1 sliding windows of observed+future consecutive tuples.

    The first ``observed`` tuples form the observation; the link statuses
    of the last ``future`` tuples form the label: NLOS anywhere in the
    window makes the sample pivotal.  Streams shorter than the window
    yield no sequences.
    """
    span = observed + future
    tuples = stream.tuples
    out: list[LabeledSample] = []
    for start in range(len(tuples) - span + 1):
        chunk = tuples[start:start + span]
        obs, fut = chunk[:observed], chunk[observed:]
        statuses = tuple(t.link_status for t in fut)
        status = 1 if any(statuses) else 0
        instance = None
        if status:
            instance = next(i + 1 for i, a in enumerate(statuses) if a == 1)
        sequence = ObservedSequence(
            camera_id=stream.camera_id,
            user_id=stream.user_id,
            t_end=obs[-1].frame,
            beams=[t.beam for t in obs],
            detections=[t.detections for t in obs],
        )
        out.append(LabeledSample(sequence, FutureLabel(status, statuses, instance)))
    return out


def collect_windows(streams: list[SeedStream], observed: int = 8,
                    future: int = 5) -> dict[int, list[LabeledSample]]:
    """All windows grouped by basestation id."""
    windows: dict[int, list[LabeledSample]] = {1: [], 2: []}
    for stream in streams:
        windows.setdefault(stream.bs_id, []).extend(
            window_sequences(stream, observed, future))
    return windows


def balance_and_split(
    samples: list[LabeledSample],
    quota: int,
    split_fraction: float = 0.5,
    seed: int = 0,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per-camera balanced sampling followed by a stratified split.

    Up to ``quota`` pivotal and ``quota`` non-pivotal sequences are drawn
    per camera without replacement; stratification keeps the split
    fraction within every (camera, label) group.
    """
    if not samples:
        raise DataError("no sequences to balance")
    if quota < 0:
        raise DataError("quota must be >= 0")
    groups: dict[tuple[int, int], list[LabeledSample]] = {}
    for sample in samples:
        groups.setdefault((sample.sequence.camera_id, sample.label.status), []).append(sample)

    rng = np.random.default_rng([seed, 1])
    train: list[LabeledSample] = []
    val: list[LabeledSample] = []
    for key in sorted(groups):
        group = groups[key]
        take = min(quota, len(group))
        if take < quota:
            log.warning("camera %d label %d: only %d of %d requested sequences",
                        key[0], key[1], len(group), quota)
        if take == 0:
            continue
        chosen = rng.choice(len(group), size=take, replace=False)
        picked = [group[i] for i in chosen]
        n_train = int(round(take * split_fraction))
        train.extend(picked[:n_train])
        val.extend(picked[n_train:])
    return LabeledDataset(train, "train"), LabeledDataset(val, "val")


def conjugate_pairs(
    windows_bs1: list[LabeledSample],
    windows_bs2: list[LabeledSample],
    overlap_cameras: tuple[int, int] = (3, 4),
    exclude_keys: frozenset | set = frozenset(),
) -> list[ConjugateSample]:
    """Join same-user, same-time windows with opposite future statuses.

    Only windows from the overlap cameras participate; keys listed in
    ``exclude_keys`` (train-split membership) are dropped before joining.
    """
    cam1, cam2 = overlap_cameras

    def index(windows, camera):
        table = {}
        for sample in windows:
            if sample.sequence.camera_id != camera or sample.key in exclude_keys:
                continue
            table[(sample.sequence.user_id, sample.sequence.t_end)] = sample
        return table

    index1 = index(windows_bs1, cam1)
    index2 = index(windows_bs2, cam2)
    pairs: list[ConjugateSample] = []
    for key in sorted(index1.keys() & index2.keys()):
        s1, s2 = index1[key], index2[key]
        if s1.label.status == s2.label.status:
            continue
        category = 1 if s1.label.status == 1 else 2
        pairs.append(ConjugateSample(
            user_id=key[0], t_end=key[1],
            sample_bs1=s1, sample_bs2=s2, category=category,
        ))
    return pairs


# ---------------------------------------------------------------------------
# Record (de)serialization
# ---------------------------------------------------------------------------

def _detection_to_list(det: Detection) -> list:
    return [det.object_class.value, *det.bbox, det.confidence]


def _detection_from_list(data: list) -> Detection:
    return Detection(object_class=VehicleClass(data[0]),
                     bbox=tuple(data[1:5]), confidence=data[5])


def sample_to_record(sample: LabeledSample) -> dict:
    seq, lab = sample.sequence, sample.label
    return {
        "camera": seq.camera_id,
        "user": seq.user_id,
        "t_end": seq.t_end,
        "beams": seq.beams,
        "detections": [[_detection_to_list(d) for d in frame] for frame in seq.detections],
        "label": lab.status,
        "window": list(lab.window),
        "instance": lab.blockage_instance,
    }


def record_to_sample(record: dict) -> LabeledSample:
    sequence = ObservedSequence(
        camera_id=record["camera"],
        user_id=record["user"],
        t_end=record["t_end"],
        beams=list(record["beams"]),
        detections=[[_detection_from_list(d) for d in frame]
                    for frame in record["detections"]],
    )
    label = FutureLabel(record["label"], tuple(record["window"]), record["instance"])
    return LabeledSample(sequence, label)


def pair_to_record(pair: ConjugateSample) -> dict:
    return {
        "user": pair.user_id,
        "t_end": pair.t_end,
        "category": pair.category,
        "bs1": sample_to_record(pair.sample_bs1),
        "bs2": sample_to_record(pair.sample_bs2),
    }


def record_to_pair(record: dict) -> ConjugateSample:
    return ConjugateSample(
        user_id=record["user"],
        t_end=record["t_end"],
        sample_bs1=record_to_sample(record["bs1"]),
        sample_bs2=record_to_sample(record["bs2"]),
        category=record["category"],
    )


def _write_ndjson(path: Path, records) -> None:
    with path.open("w") as fh:
        for record in records:
            fh.write(json.dumps(record, separators=(",", ":")))
            fh.write("\n")


def _read_ndjson(path: Path):
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_dataset(out_dir, train: LabeledDataset, val: LabeledDataset,
                  pairs: list[ConjugateSample], manifest: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_ndjson(out / "train.ndrec", (sample_to_record(s) for s in train.samples))
    _write_ndjson(out / "val.ndrec", (sample_to_record(s) for s in val.samples))
    _write_ndjson(out / "pairs.ndrec", (pair_to_record(p) for p in pairs))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_split(dataset_dir, split: str) -> LabeledDataset:
    path = Path(dataset_dir) / f"{split}.ndrec"
    samples = [record_to_sample(r) for r in _read_ndjson(path)]
    return LabeledDataset(samples, split)


def read_pairs(path) -> list[ConjugateSample]:
    return [record_to_pair(r) for r in _read_ndjson(Path(path))]


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.is_file():
        raise DataError(f"missing manifest: {path}")
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# Trace (simulate stage output)
# ---------------------------------------------------------------------------

def write_trace(trace_dir, cfg: ScenarioConfig, worlds: list[World]) -> None:
    out = Path(trace_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": 1,
        "frames": len(worlds),
        "scenario": dataclasses.asdict(cfg),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _write_ndjson(
        out / "frames.ndjson",
        ({"frame": i, "objects": [object_to_record(o) for o in w.objects]}
         for i, w in enumerate(worlds)),
    )


def read_trace(trace_dir) -> tuple[ScenarioConfig, list[World]]:
    root = Path(trace_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"not a trace directory: {trace_dir}")
    manifest = json.loads(manifest_path.read_text())
    cfg = scenario_from_dict(manifest["scenario"])
    worlds = []
    for record in _read_ndjson(root / "frames.ndjson"):
        objects = [object_from_record(r) for r in record["objects"]]
        worlds.append(world_from_objects(cfg, objects))
    if not worlds:
        raise DataError(f"trace has no frames: {trace_dir}")
    return cfg, worlds
