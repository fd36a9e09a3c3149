import sys
import textwrap

import numpy as np
import pytest

from pwscert import (
    DegenerateDataset,
    ShapeMismatch,
    SubprocessClassifier,
    builtin_train,
    load_model,
    render,
    save_model,
)
from pwscert.demo import demo_specs
from pwscert.geometry import MotionValue


@pytest.fixture(scope="module")
def dataset(demo_corpus):
    scenes, cam = demo_corpus
    spec = demo_specs()[0]
    return [
        (render(s.cloud, MotionValue(spec, 0.0), cam), s.label) for s in scenes
    ]


class TestTraining:
    def test_separable_corpus_high_accuracy(self, dataset):
        clf = builtin_train(dataset, noise_sigma=0.5, augment_count=4, seed=3)
        correct = sum(
            int(np.argmax(clf.predict(img))) == lab for img, lab in dataset
        )
        assert correct / len(dataset) >= 0.95

    def test_no_augmentation_still_deterministic(self, dataset):
        a = builtin_train(dataset, noise_sigma=0.5, augment_count=0, seed=3)
        b = builtin_train(dataset, noise_sigma=0.5, augment_count=0, seed=3)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_seed_changes_model(self, dataset):
        a = builtin_train(dataset, noise_sigma=0.5, augment_count=4, seed=3)
        b = builtin_train(dataset, noise_sigma=0.5, augment_count=4, seed=4)
        assert not np.array_equal(a.weights, b.weights)

    def test_permutation_invariant(self, dataset):
        a = builtin_train(dataset, noise_sigma=0.5, augment_count=3, seed=9)
        shuffled = list(dataset)
        np.random.default_rng(0).shuffle(shuffled)
        b = builtin_train(shuffled, noise_sigma=0.5, augment_count=3, seed=9)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)

    def test_single_label_degenerate(self, dataset):
        only = [(img, 0) for img, _ in dataset]
        with pytest.raises(DegenerateDataset):
            builtin_train(only, 0.5, 2, 0)

    def test_missing_label_degenerate(self, dataset):
        gappy = [(img, lab * 2) for img, lab in dataset]  # labels 0,2,4,6
        with pytest.raises(DegenerateDataset):
            builtin_train(gappy, 0.5, 2, 0)

    def test_mixed_shapes_rejected(self, dataset):
        bad = dataset + [(np.zeros((1, 4, 4)), 0)]
        with pytest.raises(ShapeMismatch):
            builtin_train(bad, 0.5, 0, 0)


class TestPredict:
    def test_scores_normalized(self, demo_classifier, dataset):
        for img, _ in dataset[:4]:
            scores = demo_classifier.predict(img)
            assert scores.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(scores >= 0)

    def test_identical_inputs_identical_scores(self, demo_classifier, dataset):
        img = dataset[0][0]
        np.testing.assert_array_equal(
            demo_classifier.predict(img), demo_classifier.predict(img.copy())
        )

    def test_shape_mismatch(self, demo_classifier):
        with pytest.raises(ShapeMismatch):
            demo_classifier.predict(np.zeros((1, 5, 5)))

    def test_logit_map_matches_predict_argmax(self, demo_classifier, dataset):
        a_mat, bias = demo_classifier.logit_map()
        rng = np.random.default_rng(12)
        for img, _ in dataset:
            noisy = img + 0.4 * rng.standard_normal(img.shape)
            scores = demo_classifier.predict(noisy)
            logits = a_mat @ noisy.ravel() + bias
            assert int(np.argmax(scores)) == int(np.argmax(logits))


class TestModelFile:
    def test_roundtrip(self, tmp_path, demo_classifier, dataset):
        path = tmp_path / "model.pws"
        save_model(path, demo_classifier)
        back = load_model(path)
        assert back.image_shape == demo_classifier.image_shape
        assert back.downsample == demo_classifier.downsample
        # weights survive the float32 block exactly once quantized
        np.testing.assert_array_equal(
            back.weights, demo_classifier.weights.astype("<f4").astype(np.float64)
        )
        for img, _ in dataset[:4]:
            assert int(np.argmax(back.predict(img))) == int(
                np.argmax(demo_classifier.predict(img))
            )

    def test_header_is_json_line(self, tmp_path, demo_classifier):
        import json

        path = tmp_path / "model.pws"
        save_model(path, demo_classifier)
        header = json.loads(path.read_bytes().split(b"\n", 1)[0])
        assert header["format"] == "pws-linear-1"
        assert header["labels"] == demo_classifier.label_count


SCORER = textwrap.dedent(
    """
    import sys
    import numpy as np
    from pwscert.rasterizer import load_image

    img = load_image(sys.argv[1])
    bright = float(img.mean())
    print(1.0 - bright)
    print(bright)
    """
)


class TestSubprocessClassifier:
    def test_external_scorer(self, tmp_path, dataset):
        script = tmp_path / "scorer.py"
        script.write_text(SCORER)
        clf = SubprocessClassifier([sys.executable, str(script)], label_count=2)
        bright_img = dataset[0][0]  # billboard scenes are bright
        scores = clf.predict(bright_img)
        assert scores.shape == (2,)
        assert scores.sum() == pytest.approx(1.0, abs=1e-9)
        assert scores[1] > scores[0]
        assert clf.logit_map() is None

    def test_wrong_score_count(self, tmp_path, dataset):
        script = tmp_path / "bad.py"
        script.write_text("print(0.5)")
        clf = SubprocessClassifier([sys.executable, str(script)], label_count=3)
        with pytest.raises(ShapeMismatch):
            clf.predict(dataset[0][0])
