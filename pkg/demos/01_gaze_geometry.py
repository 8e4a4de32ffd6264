"""Walk through the five gaze classes on a hand-built scene.

Two people sit facing each other with a cup between them. Turning their
gaze one way or the other moves the dyad through every class, and swapping
who is the principal trades Single for Miss.

    python demos/01_gaze_geometry.py
"""

import math

from csgaze.geometry import (
    ROLE_SWAP,
    Disc,
    Person,
    derive_gp_label,
    derive_pair_labels,
    disc_box,
    gaze_pattern,
    looks_at,
)
from csgaze.synth import SceneObject, SyntheticScene, describe_scene, gaze_point

RIGHT, LEFT, UP, DOWN = 0.0, math.pi, -math.pi / 2, math.pi / 2

alice = Person((0.25, 0.5), 0.07, (1.0, 0.0))
bob = Person((0.75, 0.5), 0.07, (-1.0, 0.0))
cup = Disc((0.5, 0.8), 0.05)

# looks_at is a ray/disc test: the gaze ray has to pass through the disc in front of the eyes
print("alice -> bob's head:", looks_at(alice, bob.head))
print("alice -> cup:       ", looks_at(alice, cup))

to_cup_a = math.atan2(cup.center[1] - alice.center[1], cup.center[0] - alice.center[0])
to_cup_b = math.atan2(cup.center[1] - bob.center[1], cup.center[0] - bob.center[0])

cases = {
    "face each other": (RIGHT, LEFT),
    "both on the cup": (to_cup_a, to_cup_b),
    "alice stares, bob looks away": (RIGHT, UP),
    "bob stares, alice looks away": (UP, LEFT),
    "both look away": (UP, DOWN),
}
print()
for name, (ta, tb) in cases.items():
    p, a = alice.with_gaze(ta), bob.with_gaze(tb)
    label = gaze_pattern(p, a, [cup])
    swapped = gaze_pattern(a, p, [cup])
    assert swapped == ROLE_SWAP[label]
    print(f"{name:<30} {label.tag:<7} (roles swapped: {swapped.tag})")

# The same scene as an image-space problem: gaze points and head boxes give
# the looking-at-head / LAEO / shared-attention flags.
scene = SyntheticScene((128, 128), (alice.with_gaze(to_cup_a), bob.with_gaze(to_cup_b)),
                       (SceneObject(cup.center, cup.radius, "red"),), 7)
points = [gaze_point(scene, 0), gaze_point(scene, 1)]
pair = derive_pair_labels(points, scene.head_boxes, regions=[disc_box(cup)])
print()
print("gaze-point class:", derive_gp_label(scene).tag)
print("pair flags:", pair)
print("description:", describe_scene(scene))
