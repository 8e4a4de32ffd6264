import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csgaze.context import (
    DEFAULT_PROMPT,
    BackendError,
    CacheCorruptError,
    ContextCache,
    ContextRecord,
    ContextRequest,
    DuplicateRecordError,
    ExternalBackend,
    FixtureBackend,
    SyntheticBackend,
    export_cache,
    get_context,
    import_cache,
    read_records,
)
from csgaze.synth import describe_scene, render_scene, sample_scene
from csgaze.types import GazeClass


class CountingBackend:
    tag = "external-mllm"

    def __init__(self, text="a calm scene"):
        self.calls = 0
        self.text = text

    def describe(self, request):
        self.calls += 1
        return self.text


def test_default_prompt():
    assert ContextRequest("x").prompt == "Describe how the persons are interacting in the scene."
    with pytest.raises(ValueError):
        ContextRequest("x", prompt="")


def test_second_call_hits_cache():
    cache, backend = ContextCache(), CountingBackend()
    first = get_context(ContextRequest("s1"), backend, cache)
    second = get_context(ContextRequest("s1"), backend, cache)
    assert first.provider_tag == "external-mllm"
    assert second.provider_tag == "cache" and second.text == first.text
    assert backend.calls == 1


def test_synthetic_backend_delegates_to_describer():
    scene = sample_scene(3, target=GazeClass.MUTUAL)
    rec = get_context(ContextRequest("m"), SyntheticBackend({"m": scene}), ContextCache())
    assert rec.text == describe_scene(scene)
    assert rec.provider_tag == "synthetic-template"


def test_synthetic_backend_noise_is_deterministic():
    scene = sample_scene(4)
    b = SyntheticBackend({"m": scene}, gaze_noise=0.3)
    assert b.describe(ContextRequest("m")) == describe_scene(scene, 0.3)


def test_external_backend_receives_image_bytes_and_prompt():
    seen = {}

    def fn(image_bytes, prompt):
        seen["n"], seen["prompt"] = len(image_bytes), prompt
        return "Two people chat."

    img = render_scene(sample_scene(1))
    rec = get_context(ContextRequest("e", img), ExternalBackend(fn), ContextCache())
    assert rec.text == "Two people chat."
    assert seen["prompt"] == DEFAULT_PROMPT and seen["n"] > 0


def test_backend_failure_carries_id():
    def boom(_, __):
        raise RuntimeError("offline")

    with pytest.raises(BackendError) as exc:
        get_context(ContextRequest("bad-id"), ExternalBackend(boom), ContextCache())
    assert exc.value.sample_id == "bad-id"
    with pytest.raises(BackendError):
        get_context(ContextRequest("blank"), CountingBackend("   "), ContextCache())


def test_fixture_backend_from_file(tmp_path):
    cache = ContextCache()
    cache.put_if_absent(ContextRecord("a", "Fixture text.", "fixture"))
    export_cache(cache, tmp_path / "fx.jsonl")
    b = FixtureBackend(tmp_path / "fx.jsonl")
    assert b.describe(ContextRequest("a")) == "Fixture text."


def test_export_import_round_trip(tmp_path):
    cache = ContextCache()
    for i, text in enumerate(["line one\nline two", "quote \" and tab\t", "ünïcode ✓"]):
        cache.put_if_absent(ContextRecord(f"id{i}", text, "fixture"))
    assert export_cache(cache, tmp_path / "c.jsonl") == 3
    fresh = ContextCache()
    assert import_cache(tmp_path / "c.jsonl", fresh) == 3
    assert set(fresh.records()) == set(cache.records())


def test_empty_export_is_importable(tmp_path):
    assert export_cache(ContextCache(), tmp_path / "e.jsonl") == 0
    assert import_cache(tmp_path / "e.jsonl", ContextCache()) == 0


def test_import_rejects_duplicates(tmp_path):
    p = tmp_path / "dup.jsonl"
    line = '{"sample_id": "x", "provider_tag": "fixture", "text": "t"}\n'
    p.write_text(line + line)
    with pytest.raises(DuplicateRecordError, match="'x'"):
        import_cache(p, ContextCache())


def test_corrupt_cache_raises(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"sample_id": "x", "provider_tag": "fixture", "text": "t"}\n{oops\n')
    with pytest.raises(CacheCorruptError, match=":2:"):
        ContextCache(p)


def test_persistent_cache_reloads(tmp_path):
    p = tmp_path / "cache.jsonl"
    backend = CountingBackend()
    get_context(ContextRequest("a"), backend, ContextCache(p))
    again = get_context(ContextRequest("a"), backend, ContextCache(p))
    assert again.provider_tag == "cache" and backend.calls == 1
    assert len(read_records(p)) == 1


def test_concurrent_same_id_converges():
    cache = ContextCache()
    barrier = threading.Barrier(8)

    class Racer:
        tag = "external-mllm"

        def describe(self, request):
            barrier.wait(timeout=5)
            return f"text from {threading.get_ident()}"

    out = []
    threads = [threading.Thread(target=lambda: out.append(
        get_context(ContextRequest("same"), Racer(), cache).text)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(out)) == 1 and len(cache) == 1


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1).filter(lambda s: s.strip()))
def test_unicode_round_trip(tmp_path_factory, text):
    p = tmp_path_factory.mktemp("u") / "c.jsonl"
    cache = ContextCache()
    cache.put_if_absent(ContextRecord("k", text, "fixture"))
    export_cache(cache, p)
    assert read_records(p)[0].text == text
