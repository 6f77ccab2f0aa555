import os

from hypothesis import given, settings, strategies as st

from hdlforge.dedup import (
    compute_content_hash,
    deduplicate,
    deduplicate_groups,
    group_by_hash,
    groups_report,
    path_priority,
)
from hdlforge.model import SourceFile


def test_md5_vectors():
    assert compute_content_hash(b"") == "d41d8cd98f00b204e9800998ecf8427e"
    assert compute_content_hash(b"abc") == "900150983cd24fb0d6963f7d28e17f72"


def test_survivor_is_shortest_then_lexicographic():
    files = [SourceFile("b/long/x.v", b"same"), SourceFile("z/x.v", b"same"), SourceFile("a/x.v", b"same")]
    survivors, report = deduplicate(files)
    assert [f.path for f in survivors] == ["a/x.v"]
    assert sorted(r for _, r in report.rejections) == ["duplicate of a/x.v"] * 2


def test_distinct_content_all_survive():
    files = [SourceFile(f"p/{i}.v", bytes([i])) for i in range(5)]
    survivors, report = deduplicate(files)
    assert len(survivors) == 5 and report.retention == 100.0


def test_collision_split(monkeypatch):
    import hdlforge.dedup as dedup

    monkeypatch.setattr(dedup, "compute_content_hash", lambda content: "0" * 32)
    files = [SourceFile("a.v", b"one"), SourceFile("b.v", b"two"), SourceFile("cc.v", b"one")]
    groups = group_by_hash(files, verify=True)
    assert sorted(g.members for g in groups) == [["a.v", "cc.v"], ["b.v"]]


def test_copies_preserve_mtime(tmp_path):
    src = tmp_path / "src"
    (src / "p").mkdir(parents=True)
    f = src / "p" / "x.v"
    f.write_bytes(b"module x; endmodule")
    os.utime(f, (1_000_000, 1_000_000))
    out = tmp_path / "out"
    deduplicate([SourceFile("p/x.v", f.read_bytes())], out, src_root=src)
    assert (out / "p" / "x.v").stat().st_mtime == 1_000_000


def test_groups_report_lists_only_duplicates():
    files = [SourceFile("a.v", b"x"), SourceFile("bb.v", b"x"), SourceFile("c.v", b"y")]
    _, _, groups = deduplicate_groups(files)
    rep = groups_report(groups)
    assert list(rep.values()) == [{"survivor": "a.v", "removed": ["bb.v"]}]


contents = st.lists(st.sampled_from([b"a", b"b", b"c", b"d"]), min_size=1, max_size=30)


@settings(max_examples=50)
@given(contents, st.randoms())
def test_idempotent_and_order_independent(blobs, rnd):
    files = [SourceFile(f"p{i % 3}/{'d/' * (i % 2)}f{i}.v", b) for i, b in enumerate(blobs)]
    first, _ = deduplicate(files)
    again, report = deduplicate(first)
    assert again == first and not report.rejections
    shuffled = list(files)
    rnd.shuffle(shuffled)
    assert deduplicate(shuffled)[0] == first
    assert len(first) == len(set(blobs))
    for f in first:
        same = [g.path for g in files if g.content == f.content]
        assert f.path == min(same, key=path_priority)
