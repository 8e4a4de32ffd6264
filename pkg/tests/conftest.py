import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from csgaze.datasets import dyad_tensors, gazefollow_tensors  # noqa: E402
from csgaze.model import ModelConfig  # noqa: E402
from csgaze.synth import describe_scene, render_scene, sample_scenes, scene_to_dyad, scene_to_gazefollow  # noqa: E402

SMALL = ModelConfig(face_dim=16, scene_dim=16, text_dim=16, attention_dim=16, attention_heads=2,
                    text_token_cap=32, text_buckets=512, classifier_hidden=16, face_size=16,
                    scene_size=32, face_widths=(8, 16), scene_widths=(8, 16))


def toy_tensors(n, seed, config=SMALL):
    imgs, dyads, follows = {}, [], []
    for i, s in enumerate(sample_scenes(n, seed)):
        sid = f"t{seed}-{i}"
        imgs[sid] = render_scene(s)
        dyads.append(scene_to_dyad(s, sid, sid, describe_scene(s)))
        follows.append(scene_to_gazefollow(s, sid, sid)[0])
    return dyad_tensors(dyads, config, images=imgs), gazefollow_tensors(follows, config, images=imgs)


@pytest.fixture(scope="session")
def small_data():
    return toy_tensors(96, 0)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
