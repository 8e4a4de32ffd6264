import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csgaze.geometry import (
    ROLE_SWAP,
    Disc,
    Person,
    derive_gp_label,
    derive_pair_labels,
    gaze_pattern,
    gaze_target,
    looks_at,
)
from csgaze.manifest import load_manifest
from csgaze.synth import (
    InfeasibleConfig,
    SynthConfig,
    SyntheticScene,
    describe_scene,
    export_dataset,
    gaze_point,
    render_scene,
    sample_scene,
    sample_scenes,
    scene_from_dict,
    scene_pair_labels,
    scene_to_dict,
)
from csgaze.types import GazeClass, HeadBox

from oracles import brute_force_label, ray_hits_by_sampling

ANGLES = np.radians(np.arange(0, 360, 5))


def grid_check(layouts):
    """Exhaustive 72x72 angle sweep; returns (cells, mismatches, swap_failures)."""
    cells = mismatches = swap_bad = 0
    for scene in layouts:
        p0, a0 = scene.persons
        objs = [o.disc for o in scene.objects]
        # brute-force hit tables per angle
        p_a = [ray_hits_by_sampling(p0.center, t, a0.center, a0.head_radius) for t in ANGLES]
        a_p = [ray_hits_by_sampling(a0.center, t, p0.center, p0.head_radius) for t in ANGLES]
        p_o = [[ray_hits_by_sampling(p0.center, t, o.center, o.radius) for o in objs] for t in ANGLES]
        a_o = [[ray_hits_by_sampling(a0.center, t, o.center, o.radius) for o in objs] for t in ANGLES]
        for i, tp in enumerate(ANGLES):
            p = p0.with_gaze(tp)
            for j, ta in enumerate(ANGLES):
                s = SyntheticScene(scene.canvas, (p, a0.with_gaze(ta)), scene.objects, 0)
                got = derive_gp_label(s)
                cells += 1
                if int(got) != brute_force_label(p_a[i], a_p[j], p_o[i], a_o[j]):
                    mismatches += 1
                if derive_gp_label(s.swapped()) != ROLE_SWAP[got]:
                    swap_bad += 1
    return cells, mismatches, swap_bad


def test_oracle_agrees_with_sampling_on_angle_grid():
    layouts = [sample_scene(1000 + k) for k in range(3)]
    cells, bad, swap_bad = grid_check(layouts)
    assert cells == 3 * 72 * 72
    assert bad == 0 and swap_bad == 0


def test_looks_at_basics():
    me = Person((0.25, 0.5), 0.0625, (1.0, 0.0))
    assert looks_at(me, Disc((0.75, 0.5), 0.125))
    assert not looks_at(me, Disc((0.75, 0.75), 0.125))
    # tangent counts as a hit (binary-exact values)
    assert looks_at(me, Disc((0.75, 0.625), 0.125))
    # behind the viewer never counts
    assert not looks_at(me, Disc((0.0, 0.5), 0.05))


def test_precedence_mutual_beats_share():
    p = Person((0.2, 0.5), 0.05, (1.0, 0.0))
    a = Person((0.8, 0.5), 0.05, (-1.0, 0.0))
    between = Disc((0.5, 0.5), 0.04)
    assert gaze_pattern(p, a, [between]) == GazeClass.MUTUAL


def test_share_single_miss_void():
    p = Person((0.2, 0.2), 0.05, (0.0, 1.0))
    a = Person((0.8, 0.2), 0.05, (-1.0, 0.0))
    obj = Disc((0.2, 0.8), 0.05)
    assert gaze_pattern(p, a, [obj]) == GazeClass.MISS
    assert gaze_pattern(a, p, [obj]) == GazeClass.SINGLE
    a2 = Person((0.8, 0.2), 0.05, (-0.6 / math.hypot(0.6, 0.6), 0.6 / math.hypot(0.6, 0.6)))
    assert gaze_pattern(p, a2, [obj]) == GazeClass.SHARE
    a3 = a.with_gaze(-math.pi / 2)
    assert gaze_pattern(p, a3, [obj]) == GazeClass.VOID


# ------------------------------------------------------------------ pair labels

BOX_P = HeadBox(0.1, 0.1, 0.2, 0.2)
BOX_A = HeadBox(0.7, 0.1, 0.8, 0.2)
REGION = HeadBox(0.4, 0.7, 0.5, 0.8)


@pytest.mark.parametrize("points,expected", [
    ([(0.75, 0.15), (0.5, 0.5)], (True, False, False, False)),
    ([(0.75, 0.15), (0.15, 0.15)], (True, True, True, False)),
    ([(0.45, 0.75), (0.42, 0.72)], (False, False, False, True)),
    ([(0.3, 0.5), (0.9, 0.9)], (False, False, False, False)),
])
def test_pair_label_fixtures(points, expected):
    lab = derive_pair_labels(points, [BOX_P, BOX_A], regions=[REGION])
    assert (lab.lah_p_to_a, lab.lah_a_to_p, lab.laeo, lab.sa) == expected


def test_regions_can_be_disabled():
    lab = derive_pair_labels([(0.45, 0.75), (0.42, 0.72)], [BOX_P, BOX_A], [REGION],
                             allow_regions=False)
    assert not lab.sa


def test_third_person_box_supports_shared_attention():
    third = HeadBox(0.4, 0.4, 0.5, 0.5)
    lab = derive_pair_labels([(0.45, 0.45), (0.41, 0.49), (0.0, 0.0)], [BOX_P, BOX_A, third])
    assert lab.sa


def test_pair_labels_mismatched_lengths():
    with pytest.raises(Exception):
        derive_pair_labels([(0.1, 0.1)], [BOX_P, BOX_A])


box = st.tuples(st.floats(0, 0.9), st.floats(0, 0.9), st.floats(0.01, 0.5), st.floats(0.01, 0.5)).map(
    lambda t: HeadBox(t[0], t[1], min(1.0, t[0] + t[2]), min(1.0, t[1] + t[3])))
point = st.tuples(st.floats(0, 1), st.floats(0, 1))


@settings(max_examples=1000, deadline=None)
@given(st.lists(box, min_size=2, max_size=4), st.lists(point, min_size=4, max_size=4),
       st.lists(box, max_size=2))
def test_pair_label_invariants_random(boxes, points, regions):
    lab = derive_pair_labels(points[:len(boxes)], boxes, regions)
    if lab.laeo:
        assert lab.lah_p_to_a and lab.lah_a_to_p
    assert not (lab.sa and lab.laeo)


# ---------------------------------------------------------------------- synth

def test_sample_scene_is_deterministic():
    assert scene_to_dict(sample_scene(7)) == scene_to_dict(sample_scene(7))


@pytest.mark.parametrize("cls", list(GazeClass))
def test_targeted_scenes_realize_their_class(cls):
    for k in range(30):
        s = sample_scene(k, target=cls)
        assert derive_gp_label(s) == cls


def test_uniform_mix_is_roughly_balanced():
    counts = np.bincount([int(derive_gp_label(s)) for s in sample_scenes(500, 3)], minlength=5)
    assert counts.min() > 60


def test_single_class_mix():
    cfg = SynthConfig(class_mix={"Share": 1.0})
    assert {derive_gp_label(s) for s in sample_scenes(40, 0, cfg)} == {GazeClass.SHARE}


def test_infeasible_config_is_reported():
    with pytest.raises(InfeasibleConfig):
        SynthConfig(head_radius=(0.3, 0.45))
    with pytest.raises(InfeasibleConfig):
        SynthConfig(class_mix={"Share": 0.5})


def test_scene_dict_round_trip():
    s = sample_scene(11)
    assert scene_to_dict(scene_from_dict(json.loads(json.dumps(scene_to_dict(s))))) == scene_to_dict(s)


def test_render_is_deterministic_and_8bit_exact():
    s = sample_scene(5)
    a, b = render_scene(s), render_scene(s)
    assert a.shape == (128, 128, 3) and a.dtype == np.float32
    assert np.array_equal(a, b)
    assert np.allclose(np.round(a * 255), a * 255, atol=1e-4)


def test_description_has_no_class_tokens():
    for s in sample_scenes(100, 9):
        text = describe_scene(s).lower()
        for tag in ("share", "mutual", "single", "miss", "void"):
            assert tag not in text.split()


def test_gaze_points_agree_with_pair_labels():
    # an object in front of the watched head takes the gaze point (occlusion)
    for s in sample_scenes(200, 4):
        p, a = s.persons
        objs = [o.disc for o in s.objects]
        lab = scene_pair_labels(s)
        assert lab.lah_p_to_a == (gaze_target(p, a, objs)[0] == "other_head")
        assert lab.lah_a_to_p == (gaze_target(a, p, objs)[0] == "other_head")
        for i in (0, 1):
            x, y = gaze_point(s, i)
            assert 0 <= x <= 1 and 0 <= y <= 1


def test_export_dataset(tmp_path):
    hist = export_dataset(tmp_path / "d", 20, seed=1)
    assert sum(hist.values()) == 20
    dyads = load_manifest(tmp_path / "d" / "dyads.jsonl", "dyad")
    assert len(dyads) == 20
    gf = load_manifest(tmp_path / "d" / "gazefollow.jsonl", "gazefollow")
    assert len(gf) == 40
    export_dataset(tmp_path / "e", 20, seed=1)
    assert (tmp_path / "d" / "dyads.jsonl").read_bytes() == (tmp_path / "e" / "dyads.jsonl").read_bytes()
