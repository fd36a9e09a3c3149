"""Monte-Carlo estimation of the Gaussian-smoothed classifier.

The smoothed classifier scores an image by the probability that the base
classifier's argmax equals each label under additive pixel noise
``N(0, sigma^2 I)``.  From ``n`` noisy draws we take the top label's count,
bound its true probability from below with a one-sided Clopper-Pearson
interval, reduce the runner-up bound to ``1 - pA`` (two-class reduction),
and convert the gap into a certified L2 radius

    radius = sigma / 2 * (quantile(pA_lower) - quantile(pB_upper)).

Noised images are deliberately not clamped to [0, 1]; the radius formula
is exact only for unclipped additive noise and the classifiers accept
unbounded inputs.

Randomness is organized in named Philox streams keyed by (seed, stream
id): every evaluation (a partition frame, an attack pose) owns one stream
and consumes it serially, so results do not depend on how evaluations are
distributed over workers or how draws are batched.

For classifiers exposing an affine pixel-to-logit map, the argmax under
pixel noise is sampled exactly in logit space: the noise pushes forward to
``N(0, sigma^2 A A^T)`` over the logits, which is cheaper by the ratio of
pixel count to label count and distributionally identical.  Set
``SmoothingConfig.force_pixel_noise`` to bypass it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox
from scipy.stats import beta as beta_dist

from .errors import DomainError
from .classifier import BaseClassifier

_KEY_MASK = (1 << 128) - 1

# stream-id contexts keep independent uses of one master seed apart
STREAM_FRAME = 1
STREAM_ATTACK = 2
STREAM_GENERIC = 0


def stream_id(context: int, index: int) -> int:
    """Compose a 64-bit stream id from a context tag and an index."""
    return ((context & 0xFFFF) << 48) | (index & 0xFFFFFFFFFFFF)


def noise_generator(seed: int, stream: int) -> Generator:
    """Philox generator owned by one evaluation stream."""
    key = ((stream & 0xFFFFFFFFFFFFFFFF) << 64) | (seed & 0xFFFFFFFFFFFFFFFF)
    return Generator(Philox(key=key & _KEY_MASK))


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float
    n_samples: int = 10000
    confidence_alpha: float = 0.001
    seed: int = 0
    batch_size: int = 8192
    force_pixel_noise: bool = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.n_samples < 100:
            raise ValueError("need at least 100 Monte-Carlo samples")
        if not 0.0 < self.confidence_alpha < 1.0:
            raise ValueError("confidence_alpha must lie in (0, 1)")


@dataclass(frozen=True)
class SmoothedEstimate:
    top_label: int
    runner_up: int
    p_a_lower: float
    p_b_upper: float
    counts: np.ndarray = field(repr=False)
    radius: float
    abstained: bool


def gaussian_quantile(p: float) -> float:
    """Inverse standard normal CDF, accurate to about 1e-9 absolute.

    Rational initial guess refined by one Newton step against an
    erfc-based CDF.  The upper half reduces to the lower half through
    symmetry; 1 - p is exact in floating point there, so both tails keep
    full relative accuracy.
    """
    if not 0.0 < p < 1.0 or not math.isfinite(p):
        raise DomainError(f"quantile undefined at p={p!r}")
    if p > 0.5:
        return -gaussian_quantile(1.0 - p)
    x = _rational_quantile_guess(p)
    cdf = 0.5 * math.erfc(-x / math.sqrt(2.0))
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if pdf > 0.0:
        x -= (cdf - p) / pdf
    return x


# Rational minimax approximation coefficients (Acklam's algorithm),
# |error| < 1.2e-9 over (0, 1) before refinement.
_QA = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
       1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_QB = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
       6.680131188771972e01, -1.328068155288572e01)
_QC = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
       -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_QD = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
       3.754408661907416e00)


def _rational_quantile_guess(p: float) -> float:
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (
            ((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q
            + _QC[5]
        ) / ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (
        (((((_QA[0] * r + _QA[1]) * r + _QA[2]) * r + _QA[3]) * r + _QA[4]) * r + _QA[5])
        * q
        / (((((_QB[0] * r + _QB[1]) * r + _QB[2]) * r + _QB[3]) * r + _QB[4]) * r + 1.0)
    )


def clopper_pearson_lower(successes: int, trials: int, alpha: float) -> float:
    """Exact one-sided lower confidence bound for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError(f"bad binomial tally {successes}/{trials}")
    if successes == 0:
        return 0.0
    if successes == trials:
        return float(alpha ** (1.0 / trials))
    return float(beta_dist.ppf(alpha, successes, trials - successes + 1))


def _tally_pixel_noise(classifier, image, cfg, rng) -> np.ndarray:
    flat = image.reshape(-1)
    counts = np.zeros(classifier.label_count, dtype=np.int64)
    done = 0
    while done < cfg.n_samples:
        nb = min(cfg.batch_size, cfg.n_samples - done)
        eps = cfg.sigma * rng.standard_normal((nb, flat.size))
        batch = (flat[None, :] + eps).reshape(nb, *image.shape)
        scores = classifier.predict_batch(batch)
        counts += np.bincount(
            np.argmax(scores, axis=1), minlength=classifier.label_count
        )
        done += nb
    return counts


def _tally_logit_noise(logit_map, image, cfg, rng, label_count) -> np.ndarray:
    a_mat, bias = logit_map
    base = a_mat @ image.reshape(-1) + bias
    cov = (cfg.sigma**2) * (a_mat @ a_mat.T)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    counts = np.zeros(label_count, dtype=np.int64)
    done = 0
    while done < cfg.n_samples:
        nb = min(cfg.batch_size, cfg.n_samples - done)
        g = rng.standard_normal((nb, label_count))
        logits = base[None, :] + g @ factor.T
        counts += np.bincount(np.argmax(logits, axis=1), minlength=label_count)
        done += nb
    return counts


def smoothed_estimate(
    classifier: BaseClassifier,
    image: np.ndarray,
    cfg: SmoothingConfig,
    stream: int = STREAM_GENERIC,
) -> SmoothedEstimate:
    """Estimate the smoothed prediction at one image with confidence bounds."""
    image = np.asarray(image, dtype=np.float64)
    rng = noise_generator(cfg.seed, stream)
    logit_map = None if cfg.force_pixel_noise else classifier.logit_map()
    if logit_map is not None:
        counts = _tally_logit_noise(
            logit_map, image, cfg, rng, classifier.label_count
        )
    else:
        counts = _tally_pixel_noise(classifier, image, cfg, rng)

    top = int(np.argmax(counts))
    rest = counts.copy()
    rest[top] = -1
    runner = int(np.argmax(rest))
    p_a = clopper_pearson_lower(int(counts[top]), cfg.n_samples, cfg.confidence_alpha)
    p_b = 1.0 - p_a
    if p_a <= 0.5:
        return SmoothedEstimate(top, runner, p_a, p_b, counts, 0.0, True)
    radius = 0.5 * cfg.sigma * (gaussian_quantile(p_a) - gaussian_quantile(p_b))
    return SmoothedEstimate(top, runner, p_a, p_b, counts, radius, False)


def smoothed_prediction(
    classifier: BaseClassifier,
    image: np.ndarray,
    cfg: SmoothingConfig,
    stream: int = STREAM_GENERIC,
) -> int:
    """Argmax of the Monte-Carlo tally, without confidence machinery."""
    image = np.asarray(image, dtype=np.float64)
    rng = noise_generator(cfg.seed, stream)
    logit_map = None if cfg.force_pixel_noise else classifier.logit_map()
    if logit_map is not None:
        counts = _tally_logit_noise(
            logit_map, image, cfg, rng, classifier.label_count
        )
    else:
        counts = _tally_pixel_noise(classifier, image, cfg, rng)
    return int(np.argmax(counts))
