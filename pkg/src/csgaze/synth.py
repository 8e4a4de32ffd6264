"""Synthetic dyadic scenes with exact geometric ground truth.

A scene holds two persons (principal first) and a few objects on a square
canvas. The generator draws a target gaze class first and then builds
geometry that realizes it, so class frequencies follow the configured mix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .geometry import Disc, Person, derive_gp_label, derive_pair_labels, disc_box, looks_at
from .types import DyadSample, GazeClass, GazeFollowSample, HeadBox, PairLabel

# 8-bit exact colours, so PNG round trips are lossless
_BACKGROUND = (217, 217, 217)
_PERSON_COLORS = {"green": (46, 170, 80), "pink": (240, 110, 180)}
_PERSON_NAMES = ("green", "pink")
_WEDGE_COLOR = (20, 20, 20)
_OBJECT_COLORS = {
    "red": (210, 40, 40),
    "blue": (40, 70, 210),
    "yellow": (235, 200, 30),
    "orange": (240, 130, 20),
    "purple": (130, 50, 170),
    "cyan": (30, 190, 200),
}
WEDGE_HALF_ANGLE = math.radians(30)


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    canvas: int = 128
    head_radius: tuple = (0.06, 0.085)
    object_radius: tuple = (0.04, 0.065)
    n_objects: tuple = (1, 3)
    min_head_distance: float = 0.3
    margin: float = 0.02
    aim_spread: float = 0.7
    describe_noise: float = 0.0
    class_mix: Dict[GazeClass, float] = field(
        default_factory=lambda: {c: 0.2 for c in GazeClass})

    def __post_init__(self):
        mix = {GazeClass.from_tag(k) if isinstance(k, str) else GazeClass(k): float(v)
               for k, v in dict(self.class_mix).items()}
        if any(v < 0 for v in mix.values()) or abs(sum(mix.values()) - 1.0) > 1e-9:
            raise InfeasibleConfig(f"class_mix weights must sum to 1, got {sum(mix.values())}")
        object.__setattr__(self, "class_mix", mix)
        lo, hi = self.head_radius
        if self.describe_noise < 0:
            raise InfeasibleConfig("describe_noise must be non-negative")
        if not 0 < lo <= hi:
            raise InfeasibleConfig("head_radius range invalid")
        free = 1.0 - 2 * (hi + self.margin)
        if free <= 0 or max(self.min_head_distance, 2 * hi) > math.sqrt(2) * free:
            raise InfeasibleConfig("head radius too large to place two heads")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for key in ("head_radius", "object_radius", "n_objects"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "canvas": self.canvas,
            "head_radius": list(self.head_radius),
            "object_radius": list(self.object_radius),
            "n_objects": list(self.n_objects),
            "min_head_distance": self.min_head_distance,
            "margin": self.margin,
            "aim_spread": self.aim_spread,
            "describe_noise": self.describe_noise,
            "class_mix": {c.tag: w for c, w in self.class_mix.items()},
        }


@dataclass(frozen=True)
class SceneObject:
    center: tuple
    radius: float
    color: str

    @property
    def disc(self) -> Disc:
        return Disc(self.center, self.radius)


@dataclass(frozen=True)
class SyntheticScene:
    canvas: tuple
    persons: tuple
    objects: tuple
    rng_seed: int
    target_class: Optional[GazeClass] = None

    def __post_init__(self):
        if len(self.persons) != 2:
            raise ValueError("a scene has exactly two persons")
        for p in self.persons:
            if abs(math.hypot(*p.gaze_dir) - 1.0) > 1e-9:
                raise ValueError("gaze_dir must have unit norm")
        for e in self.discs:
            (x, y), r = e.center, e.radius
            if x - r < 0 or y - r < 0 or x + r > 1 or y + r > 1:
                raise ValueError("entity outside the canvas")
        p, a = self.persons
        if math.dist(p.center, a.center) <= p.head_radius + a.head_radius:
            raise ValueError("heads overlap")

    @property
    def discs(self) -> List[Disc]:
        return [p.head for p in self.persons] + [o.disc for o in self.objects]

    @property
    def object_discs(self) -> List[Disc]:
        return [o.disc for o in self.objects]

    @property
    def head_boxes(self) -> List[HeadBox]:
        return [disc_box(p.head) for p in self.persons]

    def swapped(self) -> "SyntheticScene":
        """Same geometry with principal and associate exchanged."""
        return SyntheticScene(self.canvas, self.persons[::-1], self.objects, self.rng_seed)


# --------------------------------------------------------------------- sampling

def _aim(rng, source_center, target: Disc, spread: float) -> float:
    vx = target.center[0] - source_center[0]
    vy = target.center[1] - source_center[1]
    dist = math.hypot(vx, vy)
    half = math.asin(min(1.0, target.radius / dist))
    return math.atan2(vy, vx) + rng.uniform(-spread, spread) * half


def _free_angle(rng, person: Person, avoid: Sequence[Disc], tries: int = 500) -> float:
    for _ in range(tries):
        angle = rng.uniform(-math.pi, math.pi)
        probe = person.with_gaze(angle)
        if not any(looks_at(probe, d) for d in avoid):
            return angle
    raise InfeasibleConfig("no free gaze direction")


def _place(rng, radius: float, margin: float, others: Sequence[Disc], gap: float,
           tries: int = 1000) -> tuple:
    lo, hi = radius + margin, 1.0 - radius - margin
    if lo >= hi:
        raise InfeasibleConfig("entity larger than the canvas")
    for _ in range(tries):
        c = (rng.uniform(lo, hi), rng.uniform(lo, hi))
        if all(math.dist(c, o.center) > radius + o.radius + gap for o in others):
            return c
    raise InfeasibleConfig("could not place entity without overlap")


def _layout(rng, config: SynthConfig, need_object: bool):
    r_p, r_a = rng.uniform(*config.head_radius, size=2)
    c_p = _place(rng, r_p, config.margin, [], 0.0)
    for _ in range(1000):
        c_a = _place(rng, r_a, config.margin, [Disc(c_p, r_p)], 0.0)
        if math.dist(c_p, c_a) >= config.min_head_distance:
            break
    else:
        raise InfeasibleConfig("could not separate heads")
    lo, hi = config.n_objects
    n_obj = int(rng.integers(lo, hi + 1))
    if need_object:
        n_obj = max(n_obj, 1)
    discs = [Disc(c_p, r_p), Disc(c_a, r_a)]
    colors = rng.permutation(list(_OBJECT_COLORS))[:n_obj]
    objects = []
    for color in colors:
        r = rng.uniform(*config.object_radius)
        c = _place(rng, r, config.margin, discs, 0.02)
        discs.append(Disc(c, r))
        objects.append(SceneObject(c, r, str(color)))
    p = Person(c_p, r_p, (1.0, 0.0))
    a = Person(c_a, r_a, (1.0, 0.0))
    return p, a, objects


def _construct(rng, target: GazeClass, config: SynthConfig):
    p, a, objects = _layout(rng, config, need_object=(target == GazeClass.SHARE))
    obj = [o.disc for o in objects]
    s = config.aim_spread
    if target == GazeClass.MUTUAL:
        p = p.with_gaze(_aim(rng, p.center, a.head, s))
        a = a.with_gaze(_aim(rng, a.center, p.head, s))
    elif target == GazeClass.SHARE:
        k = int(rng.integers(len(obj)))
        p = p.with_gaze(_aim(rng, p.center, obj[k], s))
        a = a.with_gaze(_aim(rng, a.center, obj[k], s))
    elif target in (GazeClass.SINGLE, GazeClass.MISS):
        src, dst = (p, a) if target == GazeClass.SINGLE else (a, p)
        src = src.with_gaze(_aim(rng, src.center, dst.head, s))
        seen = [d for d in obj if looks_at(src, d)]
        dst = dst.with_gaze(_free_angle(rng, dst, [src.head] + seen))
        p, a = (src, dst) if target == GazeClass.SINGLE else (dst, src)
    else:
        if obj and rng.random() < 0.5:
            p = p.with_gaze(_aim(rng, p.center, obj[int(rng.integers(len(obj)))], s))
        else:
            p = p.with_gaze(_free_angle(rng, p, [a.head]))
        seen = [d for d in obj if looks_at(p, d)]
        a = a.with_gaze(_free_angle(rng, a, [p.head] + seen))
    return p, a, objects


def sample_scene(seed: int, config: SynthConfig = SynthConfig(), target: GazeClass = None,
                 max_attempts: int = 50) -> SyntheticScene:
    """Deterministic scene for ``(seed, config)`` realizing a drawn gaze class.

    Rare geometric coincidences (e.g. a shared-object ray that also crosses
    both heads) are redrawn from the same stream, which keeps the result a
    pure function of the seed.
    """
    rng = np.random.default_rng(seed)
    if target is None:
        classes = list(config.class_mix)
        weights = np.array([config.class_mix[c] for c in classes])
        target = classes[int(rng.choice(len(classes), p=weights / weights.sum()))]
    target = GazeClass(target)
    for _ in range(max_attempts):
        p, a, objects = _construct(rng, target, config)
        scene = SyntheticScene((config.canvas, config.canvas), (p, a), tuple(objects), seed, target)
        if derive_gp_label(scene) == target:
            return scene
    raise InfeasibleConfig(f"could not realize {target.tag} for seed {seed}")


def scene_seed(base_seed: int, index: int) -> int:
    """Per-scene seed derived from a dataset seed and a sample index."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, dtype=np.uint32)[0])


def sample_scenes(n: int, base_seed: int, config: SynthConfig = SynthConfig()) -> List[SyntheticScene]:
    return [sample_scene(scene_seed(base_seed, i), config) for i in range(n)]


# -------------------------------------------------------------------- rendering

def _rgb(color) -> np.ndarray:
    return np.asarray(color, dtype=np.float32) / np.float32(255.0)


def render_scene(scene: SyntheticScene, size: int = None) -> np.ndarray:
    """Render to an ``(size, size, 3)`` float32 raster.

    Objects are filled squares circumscribing their discs; heads are filled
    discs with a dark wedge (60 degrees wide) pointing along the gaze.
    """
    size = int(size or scene.canvas[0])
    if size < 64:
        raise ValueError("render size must be at least 64")
    img = np.empty((size, size, 3), dtype=np.float32)
    img[:] = _rgb(_BACKGROUND)
    coords = (np.arange(size, dtype=np.float64) + 0.5) / size
    xs, ys = coords[None, :], coords[:, None]
    for obj in scene.objects:
        (cx, cy), r = obj.center, obj.radius
        inside = (np.abs(xs - cx) <= r) & (np.abs(ys - cy) <= r)
        img[inside] = _rgb(_OBJECT_COLORS[obj.color])
    for person, name in zip(scene.persons, _PERSON_NAMES):
        (cx, cy), r = person.center, person.head_radius
        dx, dy = xs - cx, ys - cy
        dist = np.sqrt(dx * dx + dy * dy)
        disc = dist <= r
        img[disc] = _rgb(_PERSON_COLORS[name])
        gx, gy = person.gaze_dir
        cos_to_gaze = (dx * gx + dy * gy) / np.maximum(dist, 1e-12)
        wedge = disc & (cos_to_gaze >= math.cos(WEDGE_HALF_ANGLE)) & (dist > 0.15 * r)
        img[wedge] = _rgb(_WEDGE_COLOR)
    return img


# ------------------------------------------------------------------ description

_DIRECTIONS = ("right", "down and to the right", "down", "down and to the left",
               "left", "up and to the left", "up", "up and to the right")


def _facing(person: Person) -> str:
    sector = int(round(person.gaze_angle / (math.pi / 4))) % 8
    return _DIRECTIONS[sector]


def _position_phrase(scene: SyntheticScene) -> str:
    (px, py), (ax, ay) = scene.persons[0].center, scene.persons[1].center
    if abs(px - ax) >= abs(py - ay):
        left, right = ("green", "pink") if px < ax else ("pink", "green")
        return f"The person in {left} is on the left and the person in {right} is on the right."
    top, bottom = ("green", "pink") if py < ay else ("pink", "green")
    return f"The person in {top} is near the top and the person in {bottom} is near the bottom."


def _perceived(scene: SyntheticScene, noise: float):
    if noise <= 0:
        return scene.persons
    rng = np.random.default_rng([scene.rng_seed, 0x6465736372])
    return tuple(p.with_gaze(p.gaze_angle + rng.normal(0.0, noise)) for p in scene.persons)


def describe_scene(scene: SyntheticScene, gaze_noise: float = 0.0) -> str:
    """Templated description of positions, gaze directions and gaze relations.

    With ``gaze_noise > 0`` the describer reads each gaze angle with a
    seeded Gaussian error (radians) and reports relations for what it
    perceived, which mimics a describer that misjudges fine gaze.
    """
    sentences = [_position_phrase(scene)]
    objs = scene.objects
    persons = _perceived(scene, gaze_noise)
    looks = []
    for i, name in enumerate(_PERSON_NAMES):
        me, other = persons[i], persons[1 - i]
        at_head = looks_at(me, other.head)
        hit = [o for o in objs if looks_at(me, o.disc)]
        hit.sort(key=lambda o: math.dist(o.center, me.center))
        looks.append((at_head, hit))
        clause = f"The person in {name} faces {_facing(me)}"
        targets = []
        if at_head:
            targets.append(f"the person in {_PERSON_NAMES[1 - i]}")
        targets += [f"the {o.color} square" for o in hit]
        if targets:
            clause += " and looks at " + " and ".join(targets) + "."
        else:
            clause += " and looks at nothing in particular."
        sentences.append(clause)
    (p_head, p_hit), (a_head, a_hit) = looks
    common = [o for o in p_hit if o in a_hit]
    if p_head and a_head:
        sentences.append("They look at each other.")
    elif common:
        sentences.append(f"Both people look at the {common[0].color} square together.")
    elif p_head:
        sentences.append("The person in pink looks elsewhere while being watched.")
    elif a_head:
        sentences.append("The person in green looks elsewhere while being watched.")
    else:
        sentences.append("Neither person looks at the other.")
    return " ".join(sentences)


# ---------------------------------------------------------------- ground truths

def gaze_point(scene: SyntheticScene, index: int, free_length: float = 0.35) -> tuple:
    """Normalized point person ``index`` looks at: the centre of the nearest
    disc hit, or a point ``free_length`` along the ray, stopped at the border."""
    me, other = scene.persons[index], scene.persons[1 - index]
    best, best_t = None, math.inf
    for disc in [other.head] + scene.object_discs:
        if looks_at(me, disc):
            t = math.dist(me.center, disc.center)
            if t < best_t:
                best, best_t = disc.center, t
    if best is not None:
        return (float(best[0]), float(best[1]))
    (x, y), (dx, dy) = me.center, me.gaze_dir
    limits = [free_length]
    for c, d in ((x, dx), (y, dy)):
        if d > 1e-12:
            limits.append((1.0 - c) / d)
        elif d < -1e-12:
            limits.append(-c / d)
    t = max(0.0, min(limits))
    return (min(1.0, max(0.0, x + t * dx)), min(1.0, max(0.0, y + t * dy)))


def scene_pair_labels(scene: SyntheticScene) -> PairLabel:
    points = [gaze_point(scene, 0), gaze_point(scene, 1)]
    regions = [disc_box(o.disc) for o in scene.objects]
    return derive_pair_labels(points, scene.head_boxes, regions=regions)


def scene_to_dyad(scene: SyntheticScene, sample_id: str, image_ref, context: str = None) -> DyadSample:
    p_box, a_box = scene.head_boxes
    return DyadSample(sample_id, image_ref, p_box, a_box, derive_gp_label(scene), context)


def scene_to_gazefollow(scene: SyntheticScene, sample_id: str, image_ref) -> List[GazeFollowSample]:
    return [
        GazeFollowSample(f"{sample_id}/{role}", image_ref, box, gaze_point(scene, i))
        for i, (role, box) in enumerate(zip(("p", "a"), scene.head_boxes))
    ]


def scene_to_dict(scene: SyntheticScene) -> dict:
    return {
        "canvas": list(scene.canvas),
        "persons": [{"center": list(p.center), "head_radius": p.head_radius,
                     "gaze_dir": list(p.gaze_dir)} for p in scene.persons],
        "objects": [{"center": list(o.center), "radius": o.radius, "color": o.color}
                    for o in scene.objects],
        "rng_seed": scene.rng_seed,
    }


def scene_from_dict(d: dict) -> SyntheticScene:
    persons = tuple(Person(tuple(p["center"]), p["head_radius"], tuple(p["gaze_dir"]))
                    for p in d["persons"])
    objects = tuple(SceneObject(tuple(o["center"]), o["radius"], o["color"]) for o in d["objects"])
    return SyntheticScene(tuple(d["canvas"]), persons, objects, d["rng_seed"])


def export_dataset(out_dir, n: int, seed: int, config: SynthConfig = SynthConfig()) -> Dict[str, int]:
    """Write rasters, manifests, a context sidecar and pair labels; return the class histogram.

    Layout::

        images/<id>.png    rendered scenes
        dyads.jsonl        dyad manifest (with context text)
        gazefollow.jsonl   two gaze-following samples per scene
        contexts.jsonl     context cache keyed by sample_id
        pair_labels.jsonl  LAH / LAEO / SA flags per sample
        scenes.jsonl       scene geometry
    """
    from .context import ContextRecord, write_records
    from .imaging import save_image
    from .manifest import write_manifest

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    dyads, follows, contexts = [], [], []
    hist = {c.tag: 0 for c in GazeClass}
    with open(out / "pair_labels.jsonl", "w", encoding="utf-8") as pl, \
            open(out / "scenes.jsonl", "w", encoding="utf-8") as sc:
        for i in range(n):
            scene = sample_scene(scene_seed(seed, i), config)
            sid = f"syn-{seed}-{i:06d}"
            ref = f"images/{sid}.png"
            save_image(render_scene(scene), out / ref)
            text = describe_scene(scene, config.describe_noise)
            dyad = scene_to_dyad(scene, sid, ref, text)
            dyads.append(dyad)
            follows.extend(scene_to_gazefollow(scene, sid, ref))
            contexts.append(ContextRecord(sid, text, "synthetic-template"))
            hist[dyad.label.tag] += 1
            lab = scene_pair_labels(scene)
            pl.write(json.dumps({"sample_id": sid, "lah_p_to_a": lab.lah_p_to_a,
                                 "lah_a_to_p": lab.lah_a_to_p, "laeo": lab.laeo,
                                 "sa": lab.sa}) + "\n")
            sc.write(json.dumps({"sample_id": sid, **scene_to_dict(scene)}) + "\n")
    write_manifest(dyads, out / "dyads.jsonl")
    write_manifest(follows, out / "gazefollow.jsonl")
    write_records(contexts, out / "contexts.jsonl")
    return hist
