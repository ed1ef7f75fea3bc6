"""Convert static images into T-step input sequences.

Two schemes:
  * poisson: each frame pixel is an independent Bernoulli draw with the
    pixel value as spike probability (rate coding);
  * repeat: the image itself is presented unchanged at every step (analog
    drive; the first layer then acts as a learned spike encoder).
"""

from dataclasses import dataclass

import numpy as np

from .util import as_rng


@dataclass
class InputSequence:
    frames: np.ndarray  # [T, *image-geometry]
    encoding: str

    @property
    def t_steps(self):
        return self.frames.shape[0]


def _image_values(image):
    values = getattr(image, "values", image)
    return np.asarray(values, dtype=np.float64)


def poisson_encode(image, t_steps, seed) -> InputSequence:
    """Bernoulli(pixel) spike frames; deterministic given the seed."""
    if t_steps < 1:
        raise ValueError(f"t_steps must be positive, got {t_steps}")
    img = _image_values(image)
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError(
            f"poisson_encode: pixel values must lie in [0, 1], "
            f"got range [{img.min()}, {img.max()}]"
        )
    rng = as_rng(seed)
    draws = rng.random((t_steps,) + img.shape)
    frames = (draws < img).astype(np.float64)
    return InputSequence(frames=frames, encoding="poisson")


def poisson_encode_batch(images, t_steps, seed) -> np.ndarray:
    """Vectorized poisson frames for a batch: returns [T, B, *geometry]."""
    imgs = np.asarray(images, dtype=np.float64)
    if imgs.size and (imgs.min() < 0.0 or imgs.max() > 1.0):
        raise ValueError("poisson_encode_batch: pixel values must lie in [0, 1]")
    rng = as_rng(seed)
    draws = rng.random((t_steps,) + imgs.shape)
    return (draws < imgs).astype(np.float64)


def repeat_encode(image, t_steps) -> InputSequence:
    """T identical copies of the source image."""
    if t_steps < 1:
        raise ValueError(f"t_steps must be positive, got {t_steps}")
    img = _image_values(image)
    frames = np.repeat(img[None], t_steps, axis=0)
    return InputSequence(frames=frames, encoding="repeat")


def repeat_encode_batch(images, t_steps) -> np.ndarray:
    imgs = np.asarray(images, dtype=np.float64)
    return np.repeat(imgs[None], t_steps, axis=0)
