import itertools
import json

import numpy as np
import pytest

from beamsight.config import ScenarioConfig
from beamsight.errors import DataError
from beamsight.phy import (
    Codebook,
    channel_vector,
    received_power,
    synthesize_paths,
)
from beamsight.pipeline import (
    FutureLabel,
    LabeledSample,
    ObservedSequence,
    SeedStream,
    SeedTuple,
    balance_and_split,
    build_seed,
    camera_to_bs,
    collect_windows,
    conjugate_pairs,
    read_pairs,
    read_split,
    read_trace,
    record_to_sample,
    sample_to_record,
    window_sequences,
    write_dataset,
    write_trace,
)
from beamsight.scene import SceneObject, VehicleClass, world_from_objects


def small_cfg(**kwargs):
    defaults = dict(cars=1, buses=0, trucks=0, seed=2)
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


def car(object_id, x, y, vx=0.0):
    return SceneObject(object_id=object_id, object_class=VehicleClass.CAR,
                       center=np.array([x, y, 0.75]), dims=np.array([4.6, 1.8, 1.5]),
                       velocity=np.array([vx, 0.0, 0.0]), lane=0)


def bus(object_id, x, y, vx=0.0):
    return SceneObject(object_id=object_id, object_class=VehicleClass.BUS,
                       center=np.array([x, y, 1.6]), dims=np.array([12.0, 2.55, 3.2]),
                       velocity=np.array([vx, 0.0, 0.0]), lane=1)


def static_worlds(cfg, objects, frames):
    return [world_from_objects(cfg, objects) for _ in range(frames)]


class TestBuildSeed:
    def test_unobstructed_user_is_los(self):
        cfg = small_cfg()
        world = world_from_objects(cfg, [car(0, 63.0, 10.5)])
        streams = build_seed([world], cfg)
        assert streams, "user should be visible to at least one camera"
        for stream in streams:
            for tup in stream.tuples:
                assert tup.link_status == 0

    def test_user_behind_parked_bus_is_nlos(self):
        cfg = small_cfg()
        bs1 = world_from_objects(cfg, []).basestations[0]
        user = car(0, float(bs1.position[0]), 15.75)
        blocker = bus(1, float(bs1.position[0]), 5.25)
        worlds = static_worlds(cfg, [user, blocker], 3)
        streams = build_seed(worlds, cfg)
        bs1_streams = [s for s in streams if s.bs_id == 1 and s.user_id == 0]
        assert bs1_streams
        for stream in bs1_streams:
            for tup in stream.tuples:
                assert tup.link_status == 1

    def test_beam_matches_exhaustive_scan_oracle(self):
        cfg = small_cfg()
        world = world_from_objects(cfg, [car(0, 70.0, 8.75), car(1, 95.0, 12.25)])
        streams = build_seed([world], cfg)
        assert streams
        for stream in streams:
            bs = next(b for b in world.basestations if b.bs_id == stream.bs_id)
            codebook = Codebook.build(bs.ula, cfg.beams)
            for tup in stream.tuples:
                user = world.object_by_id(tup.user_id)
                paths = synthesize_paths(bs, user, world, cfg.reflection_loss_db)
                h = channel_vector(paths, bs.ula, cfg.subcarriers,
                                   cfg.cyclic_prefix, cfg.sample_time)
                best, best_p = None, -1.0
                for q in range(codebook.n_beams):
                    p = received_power(h, codebook.vectors[q])
                    if p > best_p:
                        best, best_p = q + 1, p
                assert tup.beam == best

    def test_ownership_is_single_camera_per_bs(self):
        cfg = small_cfg()
        worlds = static_worlds(cfg, [car(0, 80.0, 8.75)], 5)
        streams = build_seed(worlds, cfg)
        per_bs = {}
        for s in streams:
            per_bs.setdefault(s.bs_id, set()).add(s.camera_id)
            assert camera_to_bs(s.camera_id) == s.bs_id
        for cams in per_bs.values():
            assert len(cams) == 1  # static user keeps one owner


def make_stream(statuses, camera_id=2, user_id=0, beams=None, start_frame=0):
    tuples = [
        SeedTuple(user_id=user_id, frame=start_frame + i, detections=[],
                  beam=(beams[i] if beams else 1), link_status=int(a),
                  position=np.zeros(3))
        for i, a in enumerate(statuses)
    ]
    return SeedStream(bs_id=camera_to_bs(camera_id), camera_id=camera_id,
                      user_id=user_id, tuples=tuples)


class TestWindowSequences:
    def test_stream_of_exactly_13_gives_one_sequence(self):
        stream = make_stream([0] * 13)
        assert len(window_sequences(stream)) == 1

    def test_short_stream_gives_zero_sequences(self):
        assert window_sequences(make_stream([0] * 12)) == []

    def test_all_los_window_is_nonpivotal(self):
        stream = make_stream([0] * 8 + [0, 0, 0, 0, 0])
        [sample] = window_sequences(stream)
        assert sample.label.status == 0
        assert sample.label.blockage_instance is None

    def test_all_32_windows_match_any_oracle(self):
        for bits in itertools.product((0, 1), repeat=5):
            stream = make_stream([0] * 8 + list(bits))
            [sample] = window_sequences(stream)
            assert sample.label.status == (1 if any(bits) else 0)
            assert sample.label.window == bits
            if any(bits):
                assert sample.label.blockage_instance == bits.index(1) + 1

    def test_stride_one_and_no_leakage(self):
        statuses = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 1]
        stream = make_stream(statuses, start_frame=100)
        samples = window_sequences(stream)
        assert len(samples) == len(statuses) - 13 + 1
        for i, sample in enumerate(samples):
            assert sample.sequence.t_end == 100 + i + 7
            # label window strictly follows the observation
            assert sample.label.window == tuple(statuses[i + 8:i + 13])

    def test_beams_copied_in_order(self):
        beams = list(range(1, 14))
        stream = make_stream([0] * 13, beams=beams)
        [sample] = window_sequences(stream)
        assert sample.sequence.beams == beams[:8]


def make_sample(camera_id, user_id, t_end, status, beams=None):
    window = (1, 0, 0, 0, 0) if status else (0, 0, 0, 0, 0)
    seq = ObservedSequence(camera_id=camera_id, user_id=user_id, t_end=t_end,
                           beams=beams or [1] * 8, detections=[[] for _ in range(8)])
    return LabeledSample(seq, FutureLabel(status, window, 1 if status else None))


class TestBalanceAndSplit:
    def test_quota_zero_gives_empty_datasets(self):
        samples = [make_sample(1, 0, t, t % 2) for t in range(20)]
        train, val = balance_and_split(samples, quota=0, seed=1)
        assert train.samples == [] and val.samples == []

    def test_empty_input_rejected(self):
        with pytest.raises(DataError):
            balance_and_split([], quota=5)

    def test_histogram_equals_min_quota_available(self):
        rng = np.random.default_rng(0)
        samples = []
        avail = {}
        for cam in range(1, 7):
            n_piv = int(rng.integers(3, 40))
            n_non = int(rng.integers(3, 40))
            avail[(cam, 1)] = n_piv
            avail[(cam, 0)] = n_non
            samples += [make_sample(cam, 0, t, 1) for t in range(n_piv)]
            samples += [make_sample(cam, 1, t, 0) for t in range(n_non)]
        quota = 20
        train, val = balance_and_split(samples, quota=quota, seed=3)
        counts = {}
        for s in train.samples + val.samples:
            key = (s.sequence.camera_id, s.label.status)
            counts[key] = counts.get(key, 0) + 1
        for key, n in avail.items():
            assert counts.get(key, 0) == min(quota, n)

    def test_paper_scale_totals(self):
        # 9000 sequences per camera (4500 pivotal + 4500 non-pivotal) over
        # 6 cameras gives 54000 samples split evenly
        samples = []
        for cam in range(1, 7):
            samples += [make_sample(cam, 0, t, 1) for t in range(5000)]
            samples += [make_sample(cam, 1, t, 0) for t in range(5000)]
        train, val = balance_and_split(samples, quota=4500, seed=0)
        assert len(train.samples) + len(val.samples) == 54000
        assert len(train.samples) == 27000
        assert len(val.samples) == 27000
        per_camera = {}
        for s in train.samples + val.samples:
            per_camera[s.sequence.camera_id] = per_camera.get(s.sequence.camera_id, 0) + 1
        assert all(n == 9000 for n in per_camera.values())

    def test_split_is_stratified(self):
        samples = [make_sample(2, 0, t, 1) for t in range(40)]
        samples += [make_sample(2, 1, t, 0) for t in range(40)]
        train, val = balance_and_split(samples, quota=30, seed=9)
        for ds in (train, val):
            piv = sum(s.label.status for s in ds.samples)
            assert piv == 15
            assert len(ds.samples) == 30

    def test_no_sample_in_both_splits(self):
        samples = [make_sample(3, 0, t, t % 2) for t in range(50)]
        train, val = balance_and_split(samples, quota=20, seed=4)
        train_keys = {s.key for s in train.samples}
        val_keys = {s.key for s in val.samples}
        assert not (train_keys & val_keys)


class TestConjugatePairs:
    def test_category_assignment(self):
        w1 = [make_sample(3, 0, 50, 1)]
        w2 = [make_sample(4, 0, 50, 0)]
        [pair] = conjugate_pairs(w1, w2)
        assert pair.category == 1
        w1b = [make_sample(3, 0, 51, 0)]
        w2b = [make_sample(4, 0, 51, 1)]
        [pair2] = conjugate_pairs(w1b, w2b)
        assert pair2.category == 2

    def test_equal_statuses_excluded(self):
        w1 = [make_sample(3, 0, 50, 1)]
        w2 = [make_sample(4, 0, 50, 1)]
        assert conjugate_pairs(w1, w2) == []

    def test_non_overlap_cameras_ignored(self):
        w1 = [make_sample(2, 0, 50, 1)]
        w2 = [make_sample(4, 0, 50, 0)]
        assert conjugate_pairs(w1, w2) == []

    def test_counts_match_hash_join_oracle(self):
        rng = np.random.default_rng(6)
        w1, w2 = [], []
        for user in range(6):
            for t in range(30, 70):
                if rng.random() < 0.6:
                    w1.append(make_sample(3, user, t, int(rng.random() < 0.4)))
                if rng.random() < 0.6:
                    w2.append(make_sample(4, user, t, int(rng.random() < 0.4)))
        pairs = conjugate_pairs(w1, w2)
        lookup1 = {(s.sequence.user_id, s.sequence.t_end): s.label.status for s in w1}
        lookup2 = {(s.sequence.user_id, s.sequence.t_end): s.label.status for s in w2}
        expected = sum(
            1 for key in set(lookup1) & set(lookup2)
            if lookup1[key] != lookup2[key]
        )
        assert len(pairs) == expected

    def test_exclusion_of_train_keys(self):
        w1 = [make_sample(3, 0, 50, 1)]
        w2 = [make_sample(4, 0, 50, 0)]
        excluded = {(3, 0, 50)}
        assert conjugate_pairs(w1, w2, exclude_keys=excluded) == []


class TestSerialization:
    def test_sample_roundtrip(self):
        from beamsight.scene import Detection

        dets = [[Detection(VehicleClass.CAR, (0.1, 0.2, 0.3, 0.4), 0.9)]] + \
               [[] for _ in range(7)]
        seq = ObservedSequence(camera_id=5, user_id=3, t_end=42,
                               beams=[1, 2, 3, 4, 5, 6, 7, 8], detections=dets)
        sample = LabeledSample(seq, FutureLabel(1, (0, 1, 0, 0, 1), 2))
        back = record_to_sample(sample_to_record(sample))
        assert back == sample

    def test_dataset_files_byte_identical_for_same_inputs(self, tmp_path):
        cfg = small_cfg(cars=4, buses=1, trucks=0, seed=8, p_miss=0.1, jitter_sigma=1.0)
        from beamsight.scene import build_world, step_world

        worlds = [build_world(cfg)]
        for _ in range(25):
            worlds.append(step_world(worlds[-1], cfg.dt))

        def run(out_dir):
            streams = build_seed(worlds, cfg)
            windows = collect_windows(streams)
            everything = windows[1] + windows[2]
            train, val = balance_and_split(everything, quota=5, seed=3)
            pairs = conjugate_pairs(windows[1], windows[2])
            write_dataset(out_dir, train, val, pairs, {"seed": 3})

        run(tmp_path / "a")
        run(tmp_path / "b")
        for name in ("train.ndrec", "val.ndrec", "pairs.ndrec", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_trace_roundtrip(self, tmp_path):
        cfg = small_cfg(cars=3, buses=1, trucks=1, seed=4)
        from beamsight.scene import build_world, step_world

        worlds = [build_world(cfg)]
        for _ in range(4):
            worlds.append(step_world(worlds[-1], cfg.dt))
        write_trace(tmp_path / "trace", cfg, worlds)
        cfg_back, worlds_back = read_trace(tmp_path / "trace")
        assert cfg_back == cfg
        assert len(worlds_back) == len(worlds)
        for wa, wb in zip(worlds, worlds_back):
            for oa, ob in zip(wa.objects, wb.objects):
                assert oa.object_id == ob.object_id
                assert np.array_equal(oa.center, ob.center)
                assert np.array_equal(oa.velocity, ob.velocity)

    def test_split_files_readable(self, tmp_path):
        samples = [make_sample(1, 0, t, t % 2) for t in range(10)]
        train, val = balance_and_split(samples, quota=4, seed=2)
        write_dataset(tmp_path, train, val, [], {"q": 4})
        assert [s.key for s in read_split(tmp_path, "train").samples] == \
            [s.key for s in train.samples]
        assert read_pairs(tmp_path / "pairs.ndrec") == []
