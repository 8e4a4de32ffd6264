"""Gaze geometry: ray-disc hits and the label taxonomies derived from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .types import GazeClass, HeadBox, PairLabel, ValidationError


@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float


@dataclass(frozen=True)
class Person:
    center: tuple
    head_radius: float
    gaze_dir: tuple

    @property
    def head(self) -> Disc:
        return Disc(self.center, self.head_radius)

    @property
    def gaze_angle(self) -> float:
        """Angle of ``gaze_dir`` in radians (image axes, y pointing down)."""
        return math.atan2(self.gaze_dir[1], self.gaze_dir[0])

    def with_gaze(self, angle: float) -> "Person":
        return Person(self.center, self.head_radius, (math.cos(angle), math.sin(angle)))


def looks_at(source: Person, target: Disc) -> bool:
    """True iff the forward gaze ray of ``source`` passes within ``target``'s radius.

    The target centre must lie strictly ahead of the source (positive ray
    parameter); the distance test is closed.
    """
    dx, dy = source.gaze_dir
    vx = target.center[0] - source.center[0]
    vy = target.center[1] - source.center[1]
    t = vx * dx + vy * dy
    if t <= 0.0:
        return False
    return abs(dx * vy - dy * vx) <= target.radius


def gaze_pattern(principal: Person, associate: Person, objects: Sequence[Disc] = ()) -> GazeClass:
    """Classify a dyad by precedence Mutual > Share > Single > Miss > Void."""
    p_at_a = looks_at(principal, associate.head)
    a_at_p = looks_at(associate, principal.head)
    if p_at_a and a_at_p:
        return GazeClass.MUTUAL
    if any(looks_at(principal, o) and looks_at(associate, o) for o in objects):
        return GazeClass.SHARE
    if p_at_a:
        return GazeClass.SINGLE
    if a_at_p:
        return GazeClass.MISS
    return GazeClass.VOID


def derive_gp_label(scene) -> GazeClass:
    """Gaze class of a scene; person 0 is the principal, person 1 the associate."""
    p, a = scene.persons
    return gaze_pattern(p, a, scene.objects)


def gaze_target(source: Person, other: Person, objects: Sequence[Disc] = ()):
    """Nearest disc hit by the gaze ray: ``("other_head", None)``,
    ``("object", k)`` or ``("none", None)``."""
    best = ("none", None)
    best_t = math.inf
    candidates = [(("other_head", None), other.head)]
    candidates += [(("object", k), o) for k, o in enumerate(objects)]
    for kind, disc in candidates:
        if looks_at(source, disc):
            t = ((disc.center[0] - source.center[0]) * source.gaze_dir[0]
                 + (disc.center[1] - source.center[1]) * source.gaze_dir[1])
            if t < best_t:
                best, best_t = kind, t
    return best


ROLE_SWAP = {
    GazeClass.SINGLE: GazeClass.MISS,
    GazeClass.MISS: GazeClass.SINGLE,
    GazeClass.MUTUAL: GazeClass.MUTUAL,
    GazeClass.SHARE: GazeClass.SHARE,
    GazeClass.VOID: GazeClass.VOID,
}


def derive_pair_labels(
    gaze_points: Sequence[tuple],
    head_boxes: Sequence[HeadBox],
    regions: Sequence[HeadBox] = (),
    allow_regions: bool = True,
    pair: tuple = (0, 1),
) -> PairLabel:
    """Looking-at-head, LAEO and shared-attention flags for one pair.

    ``gaze_points[i]`` and ``head_boxes[i]`` belong to person ``i``. Shared
    attention holds when both gaze points fall in the same box of a third
    person, or, with ``allow_regions``, in the same auxiliary region (for
    instance an object box in a two-person scene). LAEO takes precedence
    over shared attention.
    """
    if len(gaze_points) != len(head_boxes):
        raise ValidationError(
            "gaze_points", f"{len(gaze_points)} gaze points for {len(head_boxes)} head boxes")
    if len(head_boxes) < 2:
        raise ValidationError("head_boxes", "need at least two persons")
    i, j = pair
    gp, ga = gaze_points[i], gaze_points[j]
    lah_pa = head_boxes[j].contains(*gp)
    lah_ap = head_boxes[i].contains(*ga)
    laeo = lah_pa and lah_ap
    shared = [b for k, b in enumerate(head_boxes) if k not in (i, j)]
    if allow_regions:
        shared += list(regions)
    sa = (not laeo) and any(b.contains(*gp) and b.contains(*ga) for b in shared)
    return PairLabel(lah_p_to_a=lah_pa, lah_a_to_p=lah_ap, laeo=laeo, sa=sa)


def disc_box(disc: Disc, clip: bool = True) -> Optional[HeadBox]:
    """Axis-aligned bounding box of a disc in normalized coordinates."""
    (cx, cy), r = disc.center, disc.radius
    vals = [cx - r, cy - r, cx + r, cy + r]
    if clip:
        vals = [min(1.0, max(0.0, v)) for v in vals]
    return HeadBox(*vals)
