import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidprobe import zeroshot as zs
from sidprobe.datastore import ANTONYM_DIRECTION
from sidprobe.metrics import average_precision

SQ2 = 1.0 / np.sqrt(2.0)


def _pair(p=4, name="pair"):
    real = np.zeros(p)
    real[0] = 1.0
    synth = np.zeros(p)
    synth[1] = 1.0
    return zs.PromptPair(name, real, synth)


class TestZeroShotScores:
    def test_saturates_at_synthetic_prompt(self):
        pair = _pair()
        image = np.zeros((1, 4))
        image[0, 1] = 2.0  # parallel to the synthetic prompt, orthogonal to real
        scores = zs.zero_shot_scores(image, pair)
        assert scores[0] > 0.999999

    def test_equidistant_image_scores_half(self):
        pair = _pair()
        image = np.array([[1.0, 1.0, 0.0, 0.0]])
        assert zs.zero_shot_scores(image, pair)[0] == 0.5

    def test_matches_cosine_gap_oracle(self, rng):
        pair = _pair()
        images = rng.standard_normal((5, 4))
        scores = zs.zero_shot_scores(images, pair)
        for i in range(5):
            unit = images[i] / np.linalg.norm(images[i])
            gap = float(np.dot(unit, pair.synthetic_embedding) - np.dot(unit, pair.real_embedding))
            expected = 1.0 / (1.0 + np.exp(-100.0 * gap))
            assert scores[i] == pytest.approx(expected, rel=1e-12)

    def test_zero_norm_image(self):
        with pytest.raises(ValueError, match="zero-norm"):
            zs.zero_shot_scores(np.zeros((1, 4)), _pair())

    def test_non_unit_prompt_rejected(self):
        with pytest.raises(ValueError, match="unit-norm"):
            zs.PromptPair("bad", np.full(4, 0.9), np.zeros(4))

    def test_ranking_invariant_to_logistic_squash(self, rng, concept_task):
        view = concept_task.dataset.select("test")
        images = view.joint.astype(np.float64)
        p = images.shape[1]
        real = np.zeros(p)
        real[0] = -1.0
        synth = np.zeros(p)
        synth[0] = 1.0
        pair = zs.PromptPair("signal", real, synth)
        unit = images / np.linalg.norm(images, axis=1, keepdims=True)
        gaps = unit @ pair.synthetic_embedding - unit @ pair.real_embedding
        labels = view.labels
        assert average_precision(zs.zero_shot_scores(images, pair), labels) == average_precision(
            gaps, labels
        )


class TestSelectBestPrompt:
    def test_single_pair(self, concept_task):
        pair = _pair(p=concept_task.dataset.p)
        chosen, _ = zs.select_best_prompt([pair], concept_task.dataset.select("train"))
        assert chosen is pair

    def test_planted_separating_pair_wins(self, concept_task):
        p = concept_task.dataset.p
        real = np.zeros(p)
        real[0] = -1.0
        synth = np.zeros(p)
        synth[0] = 1.0
        good = zs.PromptPair("good", real, synth)
        off_real = np.zeros(p)
        off_real[2] = 1.0
        off_synth = np.zeros(p)
        off_synth[3] = 1.0
        bad = zs.PromptPair("bad", off_real, off_synth)
        chosen, best_map = zs.select_best_prompt([bad, good], concept_task.dataset.select("train"))
        assert chosen.name == "good"
        assert best_map == 1.0

    def test_tie_keeps_first(self, concept_task):
        pair_a = _pair(p=concept_task.dataset.p, name="a")
        pair_b = _pair(p=concept_task.dataset.p, name="b")
        chosen, _ = zs.select_best_prompt([pair_a, pair_b], concept_task.dataset.select("train"))
        assert chosen.name == "a"

    def test_empty_list(self, concept_task):
        with pytest.raises(ValueError, match="empty"):
            zs.select_best_prompt([], concept_task.dataset.select("train"))


class TestAntonymDirection:
    def test_orthonormal_poles(self):
        direction = zs.antonym_direction([1.0, 0.0], [0.0, 1.0])
        assert np.allclose(direction, [SQ2, -SQ2], rtol=1e-12)

    def test_antisymmetry_exact(self, rng):
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        assert np.array_equal(zs.antonym_direction(a, b), -zs.antonym_direction(b, a))

    def test_parallel_poles_degenerate(self):
        with pytest.raises(zs.DegenerateDirection, match="parallel"):
            zs.antonym_direction([1.0, 1.0], [2.0, 2.0])

    def test_zero_pole(self):
        with pytest.raises(zs.DegenerateDirection, match="zero norm"):
            zs.antonym_direction([0.0, 0.0], [1.0, 0.0])

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_unit_norm_and_antisymmetric(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(5)
        b = rng.standard_normal(5)
        if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
            return
        try:
            direction = zs.antonym_direction(a, b)
        except zs.DegenerateDirection:
            return
        assert abs(np.linalg.norm(direction) - 1.0) < 1e-6
        assert np.array_equal(direction, -zs.antonym_direction(b, a))


class TestBuildAntonymVocabulary:
    def test_two_entries(self, rng):
        entries = [
            zs.AntonymEntry("saturation", "color", rng.standard_normal(4), rng.standard_normal(4)),
            zs.AntonymEntry("vibrance", "color", rng.standard_normal(4), rng.standard_normal(4)),
        ]
        vocab = zs.build_antonym_vocabulary(entries)
        assert len(vocab) == 2
        assert vocab.kind == ANTONYM_DIRECTION
        assert vocab.terms[0].category == "color"
        assert np.allclose(np.linalg.norm(vocab.embeddings, axis=1), 1.0, atol=1e-6)

    def test_identical_poles_name_reported(self, rng):
        pole = rng.standard_normal(4)
        entries = [zs.AntonymEntry("glitch artifacts", "others", pole, pole.copy())]
        with pytest.raises(zs.DegenerateDirection, match="glitch artifacts"):
            zs.build_antonym_vocabulary(entries)


class TestPairFiles:
    def test_prompt_pairs_roundtrip(self, tmp_path, rng):
        pairs = []
        for i in range(3):
            real = rng.standard_normal(4)
            synth = rng.standard_normal(4)
            pairs.append(
                zs.PromptPair(f"p{i}", real / np.linalg.norm(real), synth / np.linalg.norm(synth))
            )
        zs.write_prompt_pairs(pairs, tmp_path / "pp.sidt", prompts=[("r", "s")] * 3)
        back = zs.load_prompt_pairs(tmp_path / "pp.sidt")
        assert [b.name for b in back] == ["p0", "p1", "p2"]
        assert np.allclose(back[1].real_embedding, pairs[1].real_embedding, atol=1e-7)

    def test_antonym_entries_roundtrip(self, tmp_path, rng):
        entries = [
            zs.AntonymEntry("a", "c1", rng.standard_normal(4), rng.standard_normal(4)),
            zs.AntonymEntry("b", "c2", rng.standard_normal(4), rng.standard_normal(4)),
        ]
        zs.write_antonym_entries(entries, tmp_path / "poles.sidt")
        back = zs.load_antonym_entries(tmp_path / "poles.sidt")
        assert [(e.name, e.category) for e in back] == [("a", "c1"), ("b", "c2")]
        assert np.allclose(back[0].positive_embedding, entries[0].positive_embedding, atol=1e-7)


class TestPackagedPrompts:
    def test_ten_pairs_with_both_prompts(self):
        pairs = zs.packaged_prompt_texts()
        assert len(pairs) == 10
        names = [p["name"] for p in pairs]
        assert len(set(names)) == 10
        for pair in pairs:
            assert pair["real_prompt"] and pair["synthetic_prompt"]
