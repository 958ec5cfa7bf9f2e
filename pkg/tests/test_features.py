"""Feature extraction tests: channels, statistics, configs, matrix IO.

The geodesic channel is checked against an independent oracle that goes
through rotation matrices (angle = arccos((tr(R1^T R2) - 1) / 2)) instead of
the quaternion dot-product shortcut the implementation uses.

Translation-invariance tests place coordinates on a dyadic lattice so the
translated values are exactly representable; the invariance must then hold
bit for bit, not merely within a tolerance.
"""

from pathlib import Path

import numpy as np
import pytest

from rehabscore.core import (
    DEFAULT_JOINT_MAP,
    N_JOINTS,
    REP_LENGTH,
    JointSelection,
    Repetition,
    StreamKind,
)
from rehabscore.features import (
    ALL_STATS,
    ChannelKind,
    FeatureChannel,
    FeatureConfigError,
    JointNotInSelectionError,
    KEY_COLUMNS,
    Stat,
    config_from_dict,
    default_config,
    evaluate_channel,
    extract,
    extract_matrix,
    named_config,
    read_feature_matrix,
    write_feature_matrix,
)

from conftest import (
    HAND_L,
    HAND_R,
    HEAD,
    make_label,
    random_orientation_repetition,
    random_position_repetition,
)

GOLDEN_DIR = Path(__file__).parent / "golden"


def make_position_rep(frames) -> Repetition:
    return Repetition(
        subject_id="S01",
        exercise_id=1,
        repetition_index=0,
        stream=StreamKind.POSITION,
        frames=frames,
        label=make_label(),
    )


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


class TestConfigCounts:
    def test_position_vr_is_44(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        assert len(cfg.channels) == 11
        assert cfg.n_features == 44

    def test_position_full_is_320(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.FULL)
        assert len(cfg.channels) == 80
        assert cfg.n_features == 320

    def test_orientation_vr_is_56(self):
        cfg = default_config(StreamKind.ORIENTATION, JointSelection.VR)
        assert len(cfg.channels) == 14
        assert cfg.n_features == 56

    def test_full56_adds_head_coords(self):
        cfg = named_config("full56", StreamKind.POSITION, JointSelection.VR)
        assert cfg.n_features == 56
        assert "head_y.mean" in cfg.feature_names

    def test_unknown_named_config(self):
        with pytest.raises(FeatureConfigError):
            named_config("paper45", StreamKind.POSITION, JointSelection.VR)

    def test_name_scheme(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        for name in cfg.feature_names:
            channel, stat = name.rsplit(".", 1)
            assert stat in {"max", "min", "mean", "std"}
            assert channel


@pytest.mark.parametrize(
    "golden, build",
    [
        ("feature_names_position_vr.txt",
         lambda: default_config(StreamKind.POSITION, JointSelection.VR)),
        ("feature_names_position_full.txt",
         lambda: default_config(StreamKind.POSITION, JointSelection.FULL)),
        ("feature_names_orientation_vr.txt",
         lambda: default_config(StreamKind.ORIENTATION, JointSelection.VR)),
        ("feature_names_full56.txt",
         lambda: named_config("full56", StreamKind.POSITION, JointSelection.VR)),
    ],
)
def test_feature_names_match_golden(golden, build):
    expected = (GOLDEN_DIR / golden).read_text().strip().split("\n")
    assert list(build().feature_names) == expected


class TestEvaluateChannel:
    def test_coincident_hands_zero_gap(self):
        frames = np.zeros((REP_LENGTH, N_JOINTS, 3))
        frames[:, HAND_L] = (0.2, 0.9, 0.4)
        frames[:, HAND_R] = (0.2, 0.9, 0.4)
        rep = make_position_rep(frames)
        for c in range(3):
            ch = FeatureChannel(
                name=f"gap{c}", kind=ChannelKind.INTER_HAND_AXIS_DIFF,
                joint_a=HAND_L, joint_b=HAND_R, component=c,
            )
            assert np.array_equal(evaluate_channel(rep, ch), np.zeros(REP_LENGTH))

    def test_unit_hand_head_distance(self):
        frames = np.zeros((REP_LENGTH, N_JOINTS, 3))
        frames[:, HAND_L] = (1.0, 0.0, 0.0)
        rep = make_position_rep(frames)
        ch = FeatureChannel(
            name="d", kind=ChannelKind.HAND_HEAD_EUCLID, joint_a=HAND_L, joint_b=HEAD
        )
        assert np.array_equal(evaluate_channel(rep, ch), np.ones(REP_LENGTH))

    def test_identical_quaternions_zero_angle(self):
        rep = random_orientation_repetition(seed=2)
        frames = np.array(rep.frames)
        frames[:, HEAD] = frames[:, HAND_L]
        rep2 = Repetition(
            subject_id="S01", exercise_id=1, repetition_index=0,
            stream=StreamKind.ORIENTATION, frames=frames, label=make_label(),
        )
        ch = FeatureChannel(
            name="a", kind=ChannelKind.HAND_HEAD_GEODESIC, joint_a=HAND_L, joint_b=HEAD
        )
        assert np.max(np.abs(evaluate_channel(rep2, ch))) <= 1e-9

    def test_negated_quaternion_same_orientation(self):
        rep = random_orientation_repetition(seed=3)
        frames = np.array(rep.frames)
        frames[:, HEAD] = -frames[:, HAND_L]
        rep2 = Repetition(
            subject_id="S01", exercise_id=1, repetition_index=0,
            stream=StreamKind.ORIENTATION, frames=frames, label=make_label(),
        )
        ch = FeatureChannel(
            name="a", kind=ChannelKind.HAND_HEAD_GEODESIC, joint_a=HAND_L, joint_b=HEAD
        )
        assert np.max(np.abs(evaluate_channel(rep2, ch))) <= 1e-9

    def test_geodesic_matches_rotation_matrix_oracle(self):
        rep = random_orientation_repetition(seed=4)
        ch = FeatureChannel(
            name="a", kind=ChannelKind.HAND_HEAD_GEODESIC, joint_a=HAND_L, joint_b=HEAD
        )
        series = evaluate_channel(rep, ch)
        for i in range(0, REP_LENGTH, 7):
            r1 = quat_to_matrix(rep.frames[i, HAND_L])
            r2 = quat_to_matrix(rep.frames[i, HEAD])
            cos_angle = (np.trace(r1.T @ r2) - 1.0) / 2.0
            expected = np.arccos(np.clip(cos_angle, -1.0, 1.0))
            assert abs(series[i] - expected) <= 1e-9

    def test_geodesic_range(self):
        rep = random_orientation_repetition(seed=5)
        ch = FeatureChannel(
            name="a", kind=ChannelKind.HAND_HEAD_GEODESIC, joint_a=HAND_L, joint_b=HEAD
        )
        series = evaluate_channel(rep, ch)
        assert np.all(series >= 0.0)
        assert np.all(series <= np.pi + 1e-12)

    def test_euclid_requires_position_stream(self):
        rep = random_orientation_repetition(seed=6)
        ch = FeatureChannel(
            name="d", kind=ChannelKind.HAND_HEAD_EUCLID, joint_a=HAND_L, joint_b=HEAD
        )
        with pytest.raises(FeatureConfigError):
            evaluate_channel(rep, ch)

    def test_geodesic_requires_orientation_stream(self):
        rep = random_position_repetition(seed=7)
        ch = FeatureChannel(
            name="a", kind=ChannelKind.HAND_HEAD_GEODESIC, joint_a=HAND_L, joint_b=HEAD
        )
        with pytest.raises(FeatureConfigError):
            evaluate_channel(rep, ch)

    def test_joint_outside_selection_rejected(self):
        rep = random_position_repetition(seed=8)
        ch = FeatureChannel(
            name="c", kind=ChannelKind.PER_AXIS_COORD, joint_a=5, component=0
        )
        allowed = JointSelection.VR.indices(DEFAULT_JOINT_MAP)
        with pytest.raises(JointNotInSelectionError):
            evaluate_channel(rep, ch, allowed)


class TestExtract:
    def test_constant_channel_statistics(self):
        frames = np.zeros((REP_LENGTH, N_JOINTS, 3))
        frames[:, HAND_L, 0] = 2.0
        rep = make_position_rep(frames)
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        vec = extract(rep, cfg)
        by_name = dict(zip(vec.names, vec.values))
        assert by_name["lhand_x.max"] == 2.0
        assert by_name["lhand_x.min"] == 2.0
        assert by_name["lhand_x.mean"] == 2.0
        assert by_name["lhand_x.std"] == 0.0

    def test_alternating_channel_statistics(self):
        frames = np.zeros((REP_LENGTH, N_JOINTS, 3))
        frames[:, HAND_L, 0] = np.resize([0.0, 1.0], REP_LENGTH)
        rep = make_position_rep(frames)
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        by_name = dict(zip(cfg.feature_names, extract(rep, cfg).values))
        assert by_name["lhand_x.max"] == 1.0
        assert by_name["lhand_x.min"] == 0.0
        assert by_name["lhand_x.mean"] == 0.5
        assert by_name["lhand_x.std"] == 0.5  # population std of a fair 0/1 split

    def test_order_statistics_hold(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        for seed in range(5):
            vec = extract(random_position_repetition(seed=seed), cfg)
            by_name = dict(zip(vec.names, vec.values))
            for ch in cfg.channels:
                assert by_name[f"{ch.name}.min"] <= by_name[f"{ch.name}.mean"]
                assert by_name[f"{ch.name}.mean"] <= by_name[f"{ch.name}.max"]
                assert by_name[f"{ch.name}.std"] >= 0.0

    def test_translation_invariance_exact(self):
        # dyadic lattice coordinates make the +0.5/-0.25/+2.0 shifts exact,
        # so gap and distance channels must not move by even one ulp
        rng = np.random.default_rng(12)
        frames = rng.integers(-2048, 2048, size=(REP_LENGTH, N_JOINTS, 3)) / 1024.0
        shift = np.array([0.5, -0.25, 2.0])
        rep_a = make_position_rep(frames)
        rep_b = make_position_rep(frames + shift)
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        vec_a = extract(rep_a, cfg)
        vec_b = extract(rep_b, cfg)
        invariant = [
            i for i, name in enumerate(vec_a.names)
            if name.startswith(("hand_gap_", "lhand_head_", "rhand_head_"))
        ]
        assert len(invariant) == 20
        assert np.array_equal(vec_a.values[invariant], vec_b.values[invariant])

    def test_frame_permutation_invariance(self):
        rep = random_position_repetition(seed=13)
        perm = np.random.default_rng(14).permutation(REP_LENGTH)
        shuffled = Repetition(
            subject_id="S01", exercise_id=1, repetition_index=0,
            stream=StreamKind.POSITION, frames=np.array(rep.frames)[perm],
            label=make_label(30.0),
        )
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        vec_a = extract(rep, cfg)
        vec_b = extract(shuffled, cfg)
        for name, a, b in zip(vec_a.names, vec_a.values, vec_b.values):
            if name.endswith((".max", ".min")):
                assert a == b
            else:
                assert abs(a - b) <= 1e-12

    def test_stream_mismatch_rejected(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        with pytest.raises(FeatureConfigError):
            extract(random_orientation_repetition(seed=15), cfg)

    def test_feature_vector_order_is_channel_major(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        vec = extract(random_position_repetition(seed=16), cfg)
        assert vec.names == cfg.feature_names
        assert vec.names[0] == "hand_gap_x.max"
        assert vec.names[4] == "hand_gap_y.max"


class TestCustomConfig:
    def test_config_from_dict(self):
        data = {
            "channels": [
                {"kind": "per_axis_coord", "joint": "HAND_LEFT", "component": 1},
                {"kind": "hand_head_euclid", "hand": "HAND_RIGHT"},
                {"kind": "inter_hand_axis_diff", "component": 2},
            ],
            "stats": ["mean", "std"],
        }
        cfg = config_from_dict(data, StreamKind.POSITION, JointSelection.VR)
        assert cfg.n_features == 6
        assert cfg.feature_names == (
            "lhand_y.mean", "lhand_y.std",
            "rhand_head_dist.mean", "rhand_head_dist.std",
            "hand_gap_z.mean", "hand_gap_z.std",
        )
        assert cfg.stats == (Stat.MEAN, Stat.STD)

    def test_custom_config_evaluates(self):
        data = {"channels": [{"kind": "per_axis_coord", "joint": 3, "component": 0}]}
        cfg = config_from_dict(data, StreamKind.POSITION, JointSelection.VR)
        rep = random_position_repetition(seed=17)
        vec = extract(rep, cfg)
        assert vec.values[0] == np.max(rep.frames[:, 3, 0])

    def test_duplicate_channel_names_rejected(self):
        data = {
            "channels": [
                {"kind": "per_axis_coord", "joint": 3, "component": 0, "name": "a"},
                {"kind": "per_axis_coord", "joint": 7, "component": 0, "name": "a"},
            ]
        }
        with pytest.raises(FeatureConfigError):
            config_from_dict(data, StreamKind.POSITION, JointSelection.VR)


class TestFeatureMatrix:
    def test_extract_matrix_shape_and_keys(self):
        reps = [random_position_repetition(seed=s, repetition_index=s) for s in range(4)]
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        matrix = extract_matrix(reps, cfg)
        assert matrix.n_rows == 4
        assert matrix.values.shape == (4, 44)
        assert matrix.keys()[2] == ("S01", 1, 2)
        assert np.all(matrix.labels == 30.0 / 50.0)

    def test_round_trip_exact(self, tmp_path):
        reps = [random_position_repetition(seed=s, repetition_index=s) for s in range(3)]
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        matrix = extract_matrix(reps, cfg)
        path = tmp_path / "features.csv"
        write_feature_matrix(path, matrix)
        loaded = read_feature_matrix(path)
        assert loaded.feature_names == matrix.feature_names
        assert loaded.keys() == matrix.keys()
        assert np.array_equal(loaded.values, matrix.values)
        assert np.array_equal(loaded.labels, matrix.labels)

    def test_header_layout(self, tmp_path):
        reps = [random_position_repetition(seed=1)]
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        path = tmp_path / "features.csv"
        write_feature_matrix(path, extract_matrix(reps, cfg))
        header = path.read_text().split("\n")[0].split(",")
        assert tuple(header[:4]) == KEY_COLUMNS
        assert len(header) == 48

    def test_read_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(FeatureConfigError):
            read_feature_matrix(path)

    def test_read_rejects_ragged_row(self, tmp_path):
        reps = [random_position_repetition(seed=1)]
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        path = tmp_path / "features.csv"
        write_feature_matrix(path, extract_matrix(reps, cfg))
        with open(path, "a") as fh:
            fh.write("S02,1,0,0.5\n")
        with pytest.raises(FeatureConfigError):
            read_feature_matrix(path)

    def test_empty_batch_rejected(self):
        cfg = default_config(StreamKind.POSITION, JointSelection.VR)
        with pytest.raises(FeatureConfigError):
            extract_matrix([], cfg)
