"""Base classifiers scoring rendered images.

The pipeline only needs a deterministic map from an image to a normalized
score vector; anything honoring that contract can be certified.  Included
here:

* ``LinearSoftmaxClassifier`` - multinomial logistic regression on
  mean-pooled pixels, trainable in seconds on synthetic corpora.  Being
  linear, it also exposes its exact pixel-to-logit matrix, which the
  smoothing module uses to push Gaussian pixel noise forward in closed
  form.
* ``SubprocessClassifier`` - adapter for external models: the image is
  handed over as a PWSI1 file path and the process prints one score per
  line.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox
from scipy.optimize import minimize

from .errors import DegenerateDataset, ShapeMismatch
from .rasterizer import save_image

DEFAULT_DOWNSAMPLE = 4
_KEY_MASK = (1 << 128) - 1


class BaseClassifier:
    """Deterministic image classifier interface."""

    @property
    def label_count(self) -> int:
        raise NotImplementedError

    def predict(self, image: np.ndarray) -> np.ndarray:
        """Normalized score vector over the label set."""
        raise NotImplementedError

    def predict_batch(self, images: np.ndarray) -> np.ndarray:
        """(B, L) scores for a (B, K, H, W) batch; default loops."""
        return np.stack([self.predict(img) for img in images])

    def logit_map(self):
        """(A, b) with argmax scores == argmax (A @ image.ravel() + b).

        Returns None when the classifier is not an affine function of the
        pixels; the smoothing module then falls back to explicit
        pixel-space noise.
        """
        return None

    def describe(self) -> dict:
        """Small JSON-safe summary recorded inside certification reports."""
        return {"type": type(self).__name__}


def _pool(images: np.ndarray, factor: int) -> np.ndarray:
    """Mean-pool (B, K, H, W) over factor x factor spatial blocks."""
    b, k, h, w = images.shape
    if h % factor or w % factor:
        raise ShapeMismatch(
            f"grid {h}x{w} not divisible by downsample factor {factor}"
        )
    return images.reshape(b, k, h // factor, factor, w // factor, factor).mean(
        axis=(3, 5)
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class LinearSoftmaxClassifier(BaseClassifier):
    """Softmax regression over mean-pooled pixels."""

    def __init__(self, weights, bias, image_shape, downsample=DEFAULT_DOWNSAMPLE):
        self.weights = np.asarray(weights, dtype=np.float64)  # (F, L)
        self.bias = np.asarray(bias, dtype=np.float64)  # (L,)
        self.image_shape = tuple(int(s) for s in image_shape)  # (K, H, W)
        self.downsample = int(downsample)
        self._pixel_map = None

    @property
    def label_count(self) -> int:
        return int(self.weights.shape[1])

    def _features(self, images: np.ndarray) -> np.ndarray:
        if images.shape[1:] != self.image_shape:
            raise ShapeMismatch(
                f"image shape {images.shape[1:]} != trained {self.image_shape}"
            )
        return _pool(images, self.downsample).reshape(len(images), -1)

    def predict(self, image: np.ndarray) -> np.ndarray:
        return self.predict_batch(np.asarray(image, dtype=np.float64)[None])[0]

    def predict_batch(self, images: np.ndarray) -> np.ndarray:
        feats = self._features(np.asarray(images, dtype=np.float64))
        return _softmax(feats @ self.weights + self.bias)

    def describe(self) -> dict:
        return {
            "type": "linear-softmax",
            "downsample": self.downsample,
            "features": int(self.weights.shape[0]),
            "labels": self.label_count,
        }

    def logit_map(self):
        if self._pixel_map is None:
            k, h, w = self.image_shape
            f = self.downsample
            n_feat = self.weights.shape[0]
            pool = np.zeros((n_feat, k * h * w))
            cell = np.arange(k * h * w).reshape(k, h, w)
            feat = 0
            for ki in range(k):
                for r in range(0, h, f):
                    for c in range(0, w, f):
                        block = cell[ki, r : r + f, c : c + f].ravel()
                        pool[feat, block] = 1.0 / (f * f)
                        feat += 1
            self._pixel_map = (self.weights.T @ pool, self.bias.copy())
        return self._pixel_map


def _canonical_order(images, labels):
    """Stable content-based ordering making training permutation invariant."""
    digests = [
        hashlib.sha256(
            np.ascontiguousarray(img, dtype=np.float64).tobytes()
            + int(lab).to_bytes(8, "little", signed=True)
        ).digest()
        for img, lab in zip(images, labels)
    ]
    order = sorted(range(len(images)), key=lambda i: (labels[i], digests[i]))
    return order, digests


def builtin_train(
    dataset,
    noise_sigma: float = 0.5,
    augment_count: int = 4,
    seed: int = 0,
    downsample: int = DEFAULT_DOWNSAMPLE,
    l2: float = 1e-3,
) -> LinearSoftmaxClassifier:
    """Train the built-in model on (image, label) pairs.

    Each example contributes ``augment_count`` additional copies with
    zero-mean Gaussian pixel noise at ``noise_sigma``.  All randomness is
    derived from the seed and the example content, so shuffling the input
    list does not change the model.
    """
    if not dataset:
        raise DegenerateDataset("empty dataset")
    images = [np.asarray(img, dtype=np.float64) for img, _ in dataset]
    labels = [int(lab) for _, lab in dataset]
    shape = images[0].shape
    if any(img.shape != shape for img in images):
        raise ShapeMismatch("training images must share one shape")
    n_labels = max(labels) + 1
    present = set(labels)
    if n_labels < 2 or any(l not in present for l in range(n_labels)):
        raise DegenerateDataset(
            f"need every label in 0..{n_labels - 1} present, got {sorted(present)}"
        )

    order, digests = _canonical_order(images, labels)
    rows, row_labels = [], []
    for i in order:
        flat = images[i].ravel()
        rows.append(flat)
        row_labels.append(labels[i])
        base_key = int.from_bytes(digests[i][:16], "little") ^ (seed & 0xFFFFFFFFFFFFFFFF)
        for copy in range(augment_count):
            rng = Generator(Philox(key=(base_key + copy + 1) & _KEY_MASK))
            rows.append(flat + noise_sigma * rng.standard_normal(flat.size))
            row_labels.append(labels[i])

    x = _pool(np.asarray(rows).reshape(len(rows), *shape), downsample)
    x = x.reshape(len(rows), -1)
    y = np.asarray(row_labels)
    n, f = x.shape
    onehot = np.zeros((n, n_labels))
    onehot[np.arange(n), y] = 1.0

    def objective(wb):
        w = wb[: f * n_labels].reshape(f, n_labels)
        b = wb[f * n_labels :]
        probs = _softmax(x @ w + b)
        loss = -np.sum(onehot * np.log(probs + 1e-300)) / n
        loss += 0.5 * l2 * np.sum(w * w)
        grad_logits = (probs - onehot) / n
        gw = x.T @ grad_logits + l2 * w
        gb = grad_logits.sum(axis=0)
        return loss, np.concatenate([gw.ravel(), gb])

    start = np.zeros(f * n_labels + n_labels)
    res = minimize(objective, start, jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-10})
    w = res.x[: f * n_labels].reshape(f, n_labels)
    b = res.x[f * n_labels :]
    return LinearSoftmaxClassifier(w, b, shape, downsample)


def save_model(path, clf: LinearSoftmaxClassifier) -> None:
    """Model file: one JSON header line, then float32 weights and bias."""
    header = {
        "format": "pws-linear-1",
        "image_shape": list(clf.image_shape),
        "labels": clf.label_count,
        "downsample": clf.downsample,
        "features": int(clf.weights.shape[0]),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(clf.weights.astype("<f4").tobytes(order="C"))
        fh.write(clf.bias.astype("<f4").tobytes(order="C"))


def load_model(path) -> LinearSoftmaxClassifier:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "pws-linear-1":
            raise ValueError("not a pws linear model file")
        f, labels = header["features"], header["labels"]
        w = np.frombuffer(fh.read(4 * f * labels), dtype="<f4")
        b = np.frombuffer(fh.read(4 * labels), dtype="<f4")
    return LinearSoftmaxClassifier(
        w.reshape(f, labels).astype(np.float64),
        b.astype(np.float64),
        header["image_shape"],
        header["downsample"],
    )


class SubprocessClassifier(BaseClassifier):
    """External model invoked per image: ``command <pwsi-file>``.

    The process must print one score per label, newline separated; scores
    are renormalized to sum to one.
    """

    def __init__(self, command, label_count: int):
        self._command = list(command)
        self._labels = int(label_count)

    @property
    def label_count(self) -> int:
        return self._labels

    def predict(self, image: np.ndarray) -> np.ndarray:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "frame.pwsi"
            save_image(path, image)
            out = subprocess.run(
                self._command + [str(path)],
                check=True,
                capture_output=True,
                text=True,
            ).stdout
        scores = np.array([float(line) for line in out.split()], dtype=np.float64)
        if scores.size != self._labels:
            raise ShapeMismatch(
                f"scorer returned {scores.size} values, expected {self._labels}"
            )
        if np.any(scores < 0):
            scores = scores - scores.min()
        total = scores.sum()
        if total <= 0:
            return np.full(self._labels, 1.0 / self._labels)
        return scores / total
