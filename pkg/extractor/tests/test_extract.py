import json
import shutil
import subprocess

import numpy as np
import pytest

from sidextract import cli
from sidextract.encoders import StubEncoder, make_encoder
from sidextract.formats import read_tensor
from sidextract.jobs import (
    ExtractionJob,
    FolderSpec,
    extract_images,
    extract_prompt_pairs,
    load_split_map,
)

from .conftest import make_image


def _job(image_root, split_map, out, **kw):
    return ExtractionJob(
        image_root=image_root,
        folders=load_split_map(split_map),
        out_manifest=out,
        encoder="stub",
        **kw,
    )


class TestStubEncoder:
    def test_deterministic_rows(self, rng):
        encoder = StubEncoder()
        image = make_image(rng)
        h1, j1 = encoder.encode_images([image])
        h2, j2 = encoder.encode_images([image])
        assert np.array_equal(h1, h2)
        assert np.array_equal(j1, j2)

    def test_joint_is_projected_hidden(self, rng):
        encoder = StubEncoder()
        hidden, joint = encoder.encode_images([make_image(rng)])
        assert np.allclose(joint, hidden @ encoder.projection(), rtol=1e-12)

    def test_text_embeddings_unit_and_deterministic(self):
        encoder = StubEncoder()
        emb = encoder.encode_texts(["lens flare", "lens flare", "bokeh"])
        assert np.allclose(np.linalg.norm(emb, axis=1), 1.0, rtol=1e-12)
        assert np.array_equal(emb[0], emb[1])
        assert not np.array_equal(emb[0], emb[2])

    def test_make_encoder_spec(self):
        encoder = make_encoder("stub:12x6")
        assert (encoder.hidden_dim, encoder.joint_dim) == (12, 6)


class TestExtractImages:
    def test_manifest_and_tensors(self, image_tree, tmp_path):
        root, split_map = image_tree
        out = tmp_path / "out" / "data.json"
        extract_images(_job(root, split_map, out))
        manifest = json.loads(out.read_text())
        assert len(manifest["records"]) == 8
        assert manifest["d"] == 16 and manifest["p"] == 8
        hidden = read_tensor(out.parent / manifest["embeddings_hidden_file"])
        joint = read_tensor(out.parent / manifest["embeddings_joint_file"])
        assert hidden.shape == (8, 16)
        assert joint.shape == (8, 8)
        projection = read_tensor(out.parent / manifest["projection_file"])
        assert projection.shape == (16, 8)

    def test_variants_share_base_id_with_suffix(self, image_tree, tmp_path):
        root, split_map = image_tree
        out = tmp_path / "aug.json"
        extract_images(_job(root, split_map, out, variants=3))
        manifest = json.loads(out.read_text())
        train_ids = [r["id"] for r in manifest["records"] if r["split"] == "train"]
        assert len(train_ids) == 12  # 4 train images x 3 variants
        assert "real/train/img0#a0" in train_ids
        assert "real/train/img0#a2" in train_ids
        test_ids = [r["id"] for r in manifest["records"] if r["split"] == "test"]
        assert len(test_ids) == 4  # no extra variants outside train

    def test_eval_rows_reproducible(self, image_tree, tmp_path):
        root, split_map = image_tree
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        extract_images(_job(root, split_map, a, seed=1))
        extract_images(_job(root, split_map, b, seed=2))
        ma = json.loads(a.read_text())
        mb = json.loads(b.read_text())
        ja = read_tensor(a.parent / ma["embeddings_joint_file"])
        jb = read_tensor(b.parent / mb["embeddings_joint_file"])
        test_rows_a = [i for i, r in enumerate(ma["records"]) if r["split"] != "train"]
        test_rows_b = [i for i, r in enumerate(mb["records"]) if r["split"] != "train"]
        assert np.array_equal(ja[test_rows_a], jb[test_rows_b])

    def test_undecodable_image_skipped_with_note(self, image_tree, tmp_path):
        root, split_map = image_tree
        (root / "fake/train/broken.png").write_bytes(b"not an image")
        out = tmp_path / "skip.json"
        extract_images(_job(root, split_map, out))
        manifest = json.loads(out.read_text())
        assert len(manifest["records"]) == 8
        assert any("broken.png" in note for note in manifest["notes"])

    def test_zero_records_abort(self, tmp_path):
        (tmp_path / "empty").mkdir()
        split_map = tmp_path / "sm.json"
        split_map.write_text(
            json.dumps({"folders": [{"path": "empty", "label": 0, "generator": "real", "split": "test"}]})
        )
        with pytest.raises(RuntimeError, match="no records"):
            extract_images(_job(tmp_path, split_map, tmp_path / "out.json"))

    def test_label_generator_conflict_rejected(self, tmp_path):
        split_map = tmp_path / "sm.json"
        split_map.write_text(
            json.dumps({"folders": [{"path": "x", "label": 1, "generator": "real", "split": "test"}]})
        )
        with pytest.raises(ValueError, match="conflicts"):
            extract_images(_job(tmp_path, split_map, tmp_path / "out.json"))


class TestExtractTexts:
    def test_prompt_pairs_rows_and_metadata(self, tmp_path):
        pairs = [
            {"name": f"p{i}", "real_prompt": f"real {i}", "synthetic_prompt": f"synth {i}"}
            for i in range(10)
        ]
        out = tmp_path / "prompts.sidt"
        extract_prompt_pairs(pairs, out, StubEncoder())
        emb = read_tensor(out)
        assert emb.shape == (20, 8)
        meta = json.loads((tmp_path / "prompts.pairs.json").read_text())
        assert len(meta["pairs"]) == 10
        assert meta["pairs"][3]["synthetic_row"] == 7

    def test_single_term_unit_vector(self, tmp_path):
        from sidextract.jobs import extract_plain_terms

        out = tmp_path / "v.sidt"
        extract_plain_terms([{"name": "bokeh"}], out, StubEncoder())
        emb = read_tensor(out)
        assert emb.shape == (1, 8)
        assert np.linalg.norm(emb[0]) == pytest.approx(1.0, abs=1e-6)

    def test_identical_texts_identical_rows(self, tmp_path):
        from sidextract.jobs import extract_plain_terms

        out = tmp_path / "v.sidt"
        terms = [{"name": "a", "text": "lens flare"}, {"name": "b", "text": "lens flare"}]
        extract_plain_terms(terms, out, StubEncoder())
        emb = read_tensor(out)
        assert np.array_equal(emb[0], emb[1])

    def test_empty_terms_rejected(self, tmp_path):
        from sidextract.jobs import extract_plain_terms

        with pytest.raises(ValueError, match="no texts"):
            extract_plain_terms([], tmp_path / "v.sidt", StubEncoder())


class TestCli:
    def test_images_command(self, image_tree, tmp_path, capsys):
        root, split_map = image_tree
        out = tmp_path / "cli.json"
        code = cli.main(
            [
                "images",
                "--root", str(root),
                "--split-map", str(split_map),
                "--out", str(out),
                "--encoder", "stub",
            ]
        )
        assert code == 0
        assert out.is_file()

    def test_texts_command_auto_kind(self, tmp_path):
        terms = tmp_path / "antonyms.json"
        terms.write_text(
            json.dumps(
                {
                    "entries": [
                        {"name": "saturation", "category": "color", "positive": "balanced saturation", "negative": "oversaturation"}
                    ]
                }
            )
        )
        out = tmp_path / "poles.sidt"
        assert cli.main(["texts", "--terms", str(terms), "--out", str(out), "--encoder", "stub"]) == 0
        assert read_tensor(out).shape == (2, 8)
        meta = json.loads((tmp_path / "poles.poles.json").read_text())
        assert meta["entries"][0]["name"] == "saturation"

    def test_error_exit(self, tmp_path, capsys):
        assert cli.main(["texts", "--terms", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.sidt")]) == 1
        assert "error:" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("sidprobe") is None, reason="detector CLI not installed")
class TestDetectorInterop:
    """The produced files must pass the detector's own validation,
    consumed strictly through its command-line interface."""

    def test_dataset_passes_validate_data(self, image_tree, tmp_path):
        root, split_map = image_tree
        out = tmp_path / "interop.json"
        extract_images(_job(root, split_map, out, variants=2))
        proc = subprocess.run(
            ["sidprobe", "validate-data", "--dataset", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "records ok" in proc.stdout

    def test_full_pipeline_train_and_eval(self, image_tree, tmp_path):
        root, split_map = image_tree

        # need a val split for training: extend the tree
        import json as _json

        val_real = root / "real/val"
        val_fake = root / "fake/val"
        val_real.mkdir()
        val_fake.mkdir()
        gen = np.random.default_rng(77)
        for folder in (val_real, val_fake):
            for i in range(2):
                make_image(gen).save(folder / f"v{i}.png")
        folders = _json.loads(split_map.read_text())["folders"]
        folders.append({"path": "real/val", "label": 0, "generator": "real", "split": "val"})
        folders.append({"path": "fake/val", "label": 1, "generator": "testgen", "split": "val"})
        split_map.write_text(_json.dumps({"folders": folders}))

        manifest = tmp_path / "pipe.json"
        extract_images(_job(root, split_map, manifest))
        run_dir = tmp_path / "run"
        train = subprocess.run(
            [
                "sidprobe", "train",
                "--dataset", str(manifest),
                "--out", str(run_dir),
                "--model-kind", "orthogonal_head",
                "--seed", "123",
            ],
            capture_output=True,
            text=True,
        )
        assert train.returncode == 0, train.stderr
        evaluate = subprocess.run(
            [
                "sidprobe", "eval",
                "--checkpoint", str(run_dir / "checkpoint"),
                "--dataset", str(manifest),
                "--out", str(tmp_path / "eval"),
            ],
            capture_output=True,
            text=True,
        )
        assert evaluate.returncode == 0, evaluate.stderr
        assert (tmp_path / "eval" / "eval_report.csv").is_file()
