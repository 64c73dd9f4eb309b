import json

import numpy as np
import pytest

from sidprobe.datastore import (
    DatasetError,
    EmbeddingDataset,
    EmbeddingRecord,
    Vocabulary,
    VocabularyError,
    VocabularyTerm,
    concatenate,
    load_dataset,
    load_vocabulary,
    write_dataset,
    write_vocabulary,
)
from sidprobe.tensorfile import write_tensor


def _write_manifest(tmp_path, records, d=3, p=2, hidden=None, joint=None, name="fix", extra=None):
    n = len(records)
    hidden = np.arange(n * d, dtype=np.float32).reshape(n, d) if hidden is None else hidden
    joint = np.ones((n, p), dtype=np.float32) if joint is None else joint
    write_tensor(tmp_path / "h.sidt", hidden)
    write_tensor(tmp_path / "j.sidt", joint)
    manifest = {
        "name": name,
        "d": d,
        "p": p,
        "embeddings_hidden_file": "h.sidt",
        "embeddings_joint_file": "j.sidt",
        "records": records,
    }
    if extra:
        manifest.update(extra)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def _recs(*specs):
    return [
        {"id": rid, "label": label, "generator": gen, "split": split}
        for rid, label, gen, split in specs
    ]


def test_load_well_formed(tmp_path):
    path = _write_manifest(
        tmp_path,
        _recs(
            ("a", 0, "real", "train"),
            ("b", 1, "FluxDev", "train"),
            ("c", 0, "real", "test"),
            ("d", 1, "FluxDev", "test"),
        ),
    )
    ds = load_dataset(path)
    assert len(ds) == 4
    assert ds.d == 3 and ds.p == 2
    assert ds.records[1] == EmbeddingRecord("b", 1, "FluxDev", "train")
    assert ds.projection is None


def test_dimension_mismatch_names_both_counts(tmp_path):
    path = _write_manifest(
        tmp_path,
        _recs(
            ("a", 0, "real", "train"),
            ("b", 1, "g", "train"),
            ("c", 0, "real", "test"),
            ("d", 1, "g", "test"),
        ),
        hidden=np.zeros((5, 3), dtype=np.float32),
    )
    with pytest.raises(DatasetError) as exc:
        load_dataset(path)
    assert "5" in str(exc.value) and "4" in str(exc.value)


def test_label_generator_conflict(tmp_path):
    path = _write_manifest(tmp_path, _recs(("a", 1, "real", "train"), ("b", 0, "real", "train")))
    with pytest.raises(DatasetError, match="label 1 conflicts with generator 'real'"):
        load_dataset(path)


def test_duplicate_id_reports_index(tmp_path):
    path = _write_manifest(
        tmp_path, _recs(("a", 0, "real", "train"), ("a", 1, "g", "train"))
    )
    with pytest.raises(DatasetError, match="record 1: duplicate id"):
        load_dataset(path)


def test_non_finite_reports_index(tmp_path):
    hidden = np.zeros((2, 3), dtype=np.float32)
    hidden[1, 0] = np.nan
    path = _write_manifest(
        tmp_path, _recs(("a", 0, "real", "train"), ("b", 1, "g", "train")), hidden=hidden
    )
    with pytest.raises(DatasetError, match="record 1: non-finite"):
        load_dataset(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(DatasetError, match="missing"):
        load_dataset(tmp_path / "none.json")


def _six_record_dataset() -> EmbeddingDataset:
    records = [
        EmbeddingRecord("r1", 0, "real", "test"),
        EmbeddingRecord("f1", 1, "FluxDev", "test"),
        EmbeddingRecord("s1", 1, "SD3M", "test"),
        EmbeddingRecord("r2", 0, "real", "test"),
        EmbeddingRecord("f2", 1, "FluxDev", "test"),
        EmbeddingRecord("s2", 1, "SD3M", "test"),
        EmbeddingRecord("t1", 0, "real", "train"),
        EmbeddingRecord("t2", 1, "FluxDev", "train"),
    ]
    n = len(records)
    return EmbeddingDataset(
        name="six",
        d=3,
        p=2,
        records=records,
        hidden=np.arange(n * 3, dtype=np.float32).reshape(n, 3),
        joint=np.arange(n * 2, dtype=np.float32).reshape(n, 2),
    )


def test_select_generator_includes_real():
    ds = _six_record_dataset()
    view = ds.select("test", {"FluxDev"})
    assert [r.id for r in view.records] == ["r1", "f1", "r2", "f2"]
    assert view.hidden.shape == (4, 3)
    # rows follow the records
    assert np.array_equal(view.hidden[1], ds.hidden[1])


def test_select_split_only():
    ds = _six_record_dataset()
    view = ds.select("train")
    assert [r.id for r in view.records] == ["t1", "t2"]


def test_select_unknown_tag():
    ds = _six_record_dataset()
    with pytest.raises(DatasetError, match="NoSuchGen"):
        ds.select("test", {"NoSuchGen"})


def test_select_idempotent():
    ds = _six_record_dataset()
    once = ds.select("test", {"SD3M"})
    twice = once.select("test", {"SD3M"})
    assert [r.id for r in once.records] == [r.id for r in twice.records]
    assert np.array_equal(once.hidden, twice.hidden)


def test_write_load_roundtrip_bit_exact(tmp_path, rng):
    n, d, p = 7, 4, 3
    records = [
        EmbeddingRecord(f"id{i}", i % 2, "gen" if i % 2 else "real", "train") for i in range(n)
    ]
    ds = EmbeddingDataset(
        name="rt",
        d=d,
        p=p,
        records=records,
        hidden=rng.standard_normal((n, d)).astype(np.float32),
        joint=rng.standard_normal((n, p)).astype(np.float32),
        projection=rng.standard_normal((d, p)).astype(np.float32),
    )
    path = tmp_path / "rt.json"
    write_dataset(ds, path)
    back = load_dataset(path)
    assert back.records == ds.records
    assert np.array_equal(back.hidden.view(np.uint32), ds.hidden.view(np.uint32))
    assert np.array_equal(back.joint.view(np.uint32), ds.joint.view(np.uint32))
    assert np.array_equal(back.projection.view(np.uint32), ds.projection.view(np.uint32))
    assert back.name == "rt"


def test_vocabulary_roundtrip(tmp_path):
    emb = np.eye(2, 4, dtype=np.float32)
    vocab = Vocabulary(
        kind="plain",
        terms=[VocabularyTerm("lens-flare", "lense"), VocabularyTerm("bokeh", "lense")],
        embeddings=emb,
        name="v",
    )
    write_vocabulary(vocab, tmp_path / "v.sidt")
    back = load_vocabulary(tmp_path / "v.sidt")
    assert len(back) == 2
    assert back.terms[0].name == "lens-flare"
    assert back.kind == "plain"
    assert back.sha256() == vocab.sha256()


def test_vocabulary_norm_violation(tmp_path):
    emb = np.eye(2, 4, dtype=np.float32)
    emb[1] *= 0.5
    write_tensor(tmp_path / "v.sidt", emb)
    (tmp_path / "v.names.json").write_text(
        json.dumps({"kind": "plain", "terms": [{"name": "a", "category": ""}, {"name": "b", "category": ""}]})
    )
    with pytest.raises(VocabularyError, match="norm"):
        load_vocabulary(tmp_path / "v.sidt")


def test_vocabulary_duplicate_name(tmp_path):
    emb = np.eye(2, 4, dtype=np.float32)
    write_tensor(tmp_path / "v.sidt", emb)
    (tmp_path / "v.names.json").write_text(
        json.dumps(
            {"kind": "plain", "terms": [{"name": "lens-flare", "category": ""}, {"name": "lens-flare", "category": ""}]}
        )
    )
    with pytest.raises(VocabularyError, match="duplicate term name 'lens-flare'"):
        load_vocabulary(tmp_path / "v.sidt")


def test_concatenate_prefixes_ids_and_sums_sizes():
    a = _six_record_dataset()
    b = _six_record_dataset()
    b.name = "other"
    merged = concatenate([a, b])
    assert len(merged) == len(a) + len(b)
    assert merged.records[0].id == "six/r1"
    assert merged.records[len(a)].id == "other/r1"
    assert merged.name == "six+other"


def test_concatenate_dim_mismatch():
    a = _six_record_dataset()
    b = _six_record_dataset()
    b.name = "bad"
    b.p = 5
    b.joint = np.zeros((len(b), 5), dtype=np.float32)
    with pytest.raises(DatasetError, match="dimension mismatch"):
        concatenate([a, b])


def test_select_narrowing_commutes():
    ds = _six_record_dataset()
    both = ds.select("test", {"FluxDev", "SD3M"})
    narrowed = both.select("test", {"FluxDev"})
    direct = ds.select("test", {"FluxDev"})
    assert [r.id for r in narrowed.records] == [r.id for r in direct.records]
    assert np.array_equal(narrowed.hidden, direct.hidden)


def test_select_splits_disjoint():
    ds = _six_record_dataset()
    train_ids = {r.id for r in ds.select("train").records}
    test_ids = {r.id for r in ds.select("test").records}
    assert not train_ids & test_ids
    assert len(train_ids | test_ids) == len(ds)
