"""Eighteen frame corruptions at five severities, sized for 64x64 frames.

Severity parameters live in ``SEVERITY`` (one row per kind, severities 1..5).
They were rescaled from the 224x224 common-corruption benchmark so that the
PSNR ladder on 64x64 synthetic frames degrades monotonically; spatial sizes
(blur radii, displacement, block sizes) shrink roughly with the image side.

    kind          parameter (severity 1 .. 5)
    gauss_noise   sigma                 .04 .06 .08 .09 .10
    shot          photons per unit      60 25 12 5 3        (Gaussian approx. of Poisson)
    impulse       salt+pepper fraction  .02 .04 .07 .11 .16
    speckle       multiplicative sigma  .10 .15 .22 .30 .40
    defocus       disc radius (px)      1 1.5 2 2.5 3
    motion_blur   line length (px)      3 5 7 9 11
    glass_blur    (sigma, swap, iters)  see table
    gauss_blur    sigma (px)            .6 .9 1.2 1.6 2.0
    zoom_blur     max zoom              1.06 1.11 1.16 1.21 1.26
    brightness    additive shift        .1 .2 .3 .4 .5
    spatter       (coverage, darkness)  see table
    smoke         haze weight           .15 .25 .35 .45 .55
    contrast      contrast factor       .6 .45 .3 .2 .1
    elastic       (alpha px, sigma px)  see table
    gamma         exponent              1.4 1.8 2.3 2.9 3.6
    jpeg_like     quality               70 45 25 12 5       (8x8 block-DCT quantisation)
    pixelate      block size (px)       2 3 4 5 6
    saturate      saturation gain       1.6 2.2 3 4 6

Severity 0 is the identity.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .rng import derive

KINDS = (
    "gauss_noise", "shot", "impulse", "speckle",
    "defocus", "motion_blur", "glass_blur", "gauss_blur", "zoom_blur",
    "brightness", "spatter", "smoke", "contrast",
    "elastic", "gamma", "jpeg_like", "pixelate", "saturate",
)

GROUPS = {
    "noise": ("gauss_noise", "shot", "impulse", "speckle"),
    "blur": ("defocus", "motion_blur", "glass_blur", "gauss_blur", "zoom_blur"),
    "occlusion": ("brightness", "spatter", "smoke", "contrast"),
    "digital": ("elastic", "gamma", "jpeg_like", "pixelate", "saturate"),
}

SEVERITY = {
    "gauss_noise": (0.04, 0.06, 0.08, 0.09, 0.10),
    "shot": (60, 25, 12, 5, 3),
    "impulse": (0.02, 0.04, 0.07, 0.11, 0.16),
    "speckle": (0.10, 0.15, 0.22, 0.30, 0.40),
    "defocus": (1.0, 1.5, 2.0, 2.5, 3.0),
    "motion_blur": (3, 5, 7, 9, 11),
    "glass_blur": ((0.4, 1, 1), (0.5, 1, 2), (0.6, 2, 1), (0.7, 2, 2), (0.9, 3, 2)),
    "gauss_blur": (0.6, 0.9, 1.2, 1.6, 2.0),
    "zoom_blur": (1.06, 1.11, 1.16, 1.21, 1.26),
    "brightness": (0.1, 0.2, 0.3, 0.4, 0.5),
    "spatter": ((0.62, 0.4), (0.58, 0.5), (0.54, 0.6), (0.5, 0.7), (0.46, 0.8)),
    "smoke": (0.15, 0.25, 0.35, 0.45, 0.55),
    "contrast": (0.6, 0.45, 0.3, 0.2, 0.1),
    "elastic": ((1.0, 3.0), (1.6, 3.0), (2.2, 3.0), (2.8, 3.0), (3.5, 3.0)),
    "gamma": (1.4, 1.8, 2.3, 2.9, 3.6),
    "jpeg_like": (70, 45, 25, 12, 5),
    "pixelate": (2, 3, 4, 5, 6),
    "saturate": (1.6, 2.2, 3.0, 4.0, 6.0),
}

# standard JPEG luminance quantisation table
_JPEG_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0 <= int(self.severity) <= 5:
            raise ValueError(f"severity must be in 0..5, got {self.severity}")

    @classmethod
    def parse(cls, text):
        """From 'KIND:SEVERITY'."""
        kind, _, sev = text.partition(":")
        if not sev:
            raise ValueError(f"expected KIND:SEVERITY, got {text!r}")
        return cls(kind, int(sev))

    def __str__(self):
        return f"{self.kind}:{self.severity}"


def _spatial(x, fn):
    """Apply ``fn`` to every [H, W] plane of x [..., H, W]."""
    flat = x.reshape((-1,) + x.shape[-2:])
    return np.stack([fn(p) for p in flat]).reshape(x.shape)


def _blur(x, sigma):
    sig = (0,) * (x.ndim - 2) + (sigma, sigma)
    return ndimage.gaussian_filter(x, sig, mode="reflect")


def _kernel_filter(x, k):
    k = k[(None,) * (x.ndim - 2)]
    return ndimage.convolve(x, k, mode="reflect")


def _disk(radius):
    r = int(np.ceil(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    k = (xx ** 2 + yy ** 2 <= radius ** 2).astype(np.float64)
    k = ndimage.gaussian_filter(k, 0.5)
    return k / k.sum()


def _motion_kernel(length, angle):
    k = np.zeros((length, length))
    c = length // 2
    for s in np.linspace(-c, c, 4 * length):
        r, q = int(round(c + s * np.sin(angle))), int(round(c + s * np.cos(angle)))
        k[r, q] = 1.0
    return k / k.sum()


def _lum(x):
    return (0.299 * x[..., 0:1, :, :] + 0.587 * x[..., 1:2, :, :] + 0.114 * x[..., 2:3, :, :])


def _smooth_noise(rng, shape, sigma):
    n = rng.normal(shape)
    n = _blur(n, sigma)
    lo = n.min(axis=(-2, -1), keepdims=True)
    hi = n.max(axis=(-2, -1), keepdims=True)
    return (n - lo) / np.maximum(hi - lo, 1e-12)


def _dct_quantise(plane, quality):
    q = quality
    s = 5000.0 / q if q < 50 else 200.0 - 2 * q
    table = np.maximum(np.floor((_JPEG_Q * s + 50) / 100), 1) / 255.0
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3) - 0.5
    coef = sfft.dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    coef = np.round(coef / table) * table
    out = sfft.idctn(coef, type=2, norm="ortho", axes=(-2, -1)) + 0.5
    return out.transpose(0, 2, 1, 3).reshape(h, w)


def corrupt(frame, spec, rng):
    """Corrupted copy of ``frame`` ([3, H, W] or [N, 3, H, W], values in [0, 1])."""
    if isinstance(spec, str):
        spec = CorruptionSpec.parse(spec)
    x = np.asarray(frame, dtype=np.float64)
    if spec.severity == 0:
        return np.array(frame, copy=True)
    p = SEVERITY[spec.kind][spec.severity - 1]
    k = spec.kind
    H, W = x.shape[-2:]
    lead = x.shape[:-3]

    if k == "gauss_noise":
        y = x + rng.normal(x.shape, 0.0, p)
    elif k == "shot":
        y = x + np.sqrt(np.maximum(x, 0) / p) * rng.normal(x.shape)
    elif k == "impulse":
        u = rng.uniform(x.shape)
        y = x.copy()
        y[u < p / 2] = 0.0
        y[u > 1 - p / 2] = 1.0
    elif k == "speckle":
        y = x + x * rng.normal(x.shape, 0.0, p)
    elif k == "defocus":
        y = _kernel_filter(x, _disk(p))
    elif k == "motion_blur":
        flat = x.reshape((-1, 3, H, W))
        angles = rng.uniform(flat.shape[0], -np.pi, np.pi)
        y = np.stack([_kernel_filter(f, _motion_kernel(p, a)) for f, a in zip(flat, angles)])
        y = y.reshape(x.shape)
    elif k == "glass_blur":
        sigma, delta, iters = p
        y = _blur(x, sigma).reshape((-1, 3, H * W))
        for _ in range(iters):
            dy = rng.integers(-delta, delta + 1, (y.shape[0], H, W))
            dx = rng.integers(-delta, delta + 1, (y.shape[0], H, W))
            rows = np.clip(np.arange(H)[:, None] + dy, 0, H - 1)
            cols = np.clip(np.arange(W)[None, :] + dx, 0, W - 1)
            src = (rows * W + cols).reshape(-1, 1, H * W)
            y = np.take_along_axis(y, np.repeat(src, 3, axis=1), axis=-1)
        y = _blur(y.reshape(x.shape), sigma)
    elif k == "gauss_blur":
        y = _blur(x, p)
    elif k == "zoom_blur":
        acc = x.copy()
        zooms = np.arange(1.0 + 0.02, p + 1e-9, 0.02)
        for z in zooms:
            acc += _zoom_center(x, z)
        y = acc / (len(zooms) + 1)
    elif k == "brightness":
        y = x + p
    elif k == "spatter":
        thresh, dark = p
        blob = _smooth_noise(rng, lead + (1, H, W), 1.5)
        mask = np.clip((blob - thresh) * 8.0, 0, 1)
        mud = np.array([0.35, 0.25, 0.15])[:, None, None]
        y = x * (1 - mask) + mask * ((1 - dark) * x + dark * mud)
    elif k == "smoke":
        haze = 0.6 + 0.4 * _smooth_noise(rng, lead + (1, H, W), 8.0)
        y = x * (1 - p) + p * haze
    elif k == "contrast":
        m = x.mean(axis=(-3, -2, -1), keepdims=True)
        y = (x - m) * p + m
    elif k == "elastic":
        alpha, sigma = p
        disp = rng.normal(lead + (2, H, W))
        disp = _blur(disp, sigma)
        disp = disp / np.maximum(np.abs(disp).max(axis=(-2, -1), keepdims=True), 1e-12) * alpha
        y = _warp(x, disp)
    elif k == "gamma":
        y = np.clip(x, 0, 1) ** p
    elif k == "jpeg_like":
        y = _spatial(np.clip(x, 0, 1), lambda plane: _dct_quantise(plane, p))
    elif k == "pixelate":
        y = _pixelate(x, p)
    elif k == "saturate":
        g = _lum(x)
        y = g + p * (x - g)
    else:  # pragma: no cover - guarded by CorruptionSpec
        raise ValueError(k)
    return np.clip(y, 0.0, 1.0).astype(np.asarray(frame).dtype)


def _interp_matrix(n, z):
    """[n, n] bilinear resampling matrix for a centred zoom by ``z``."""
    c = (n - 1) / 2
    src = c + (np.arange(n) - c) / z
    i0 = np.clip(np.floor(src).astype(int), 0, n - 2)
    f = src - i0
    m = np.zeros((n, n))
    m[np.arange(n), i0] = 1 - f
    m[np.arange(n), i0 + 1] += f
    return m


def _zoom_center(x, z):
    H, W = x.shape[-2:]
    return _interp_matrix(H, z) @ x @ _interp_matrix(W, z).T


def _warp(x, disp):
    """Bilinear resample of x [..., 3, H, W] at (row + dy, col + dx)."""
    H, W = x.shape[-2:]
    lead = x.shape[:-3]
    flat_x = x.reshape((-1, 3, H, W))
    flat_d = disp.reshape((-1, 2, H, W))
    out = np.empty_like(flat_x)
    grid_r, grid_c = np.mgrid[0:H, 0:W].astype(np.float64)
    for n in range(flat_x.shape[0]):
        coords = [grid_r + flat_d[n, 0], grid_c + flat_d[n, 1]]
        for ch in range(3):
            out[n, ch] = ndimage.map_coordinates(flat_x[n, ch], coords, order=1, mode="reflect")
    return out.reshape(lead + (3, H, W))


def _pixelate(x, block):
    H, W = x.shape[-2:]
    hp, wp = -(-H // block) * block, -(-W // block) * block
    pad = [(0, 0)] * (x.ndim - 2) + [(0, hp - H), (0, wp - W)]
    xp = np.pad(x, pad, mode="edge")
    lead = xp.shape[:-2]
    means = xp.reshape(lead + (hp // block, block, wp // block, block)).mean(axis=(-3, -1))
    up = np.repeat(np.repeat(means, block, axis=-2), block, axis=-1)
    return up[..., :H, :W]


def corrupt_dataset(sequences, spec, seed=0):
    """Copies of ``sequences`` with corrupted frames; kinematics and labels untouched."""
    from .data import WorkflowSequence

    if isinstance(spec, str):
        spec = CorruptionSpec.parse(spec)
    out = []
    for idx, s in enumerate(sequences):
        if spec.severity == 0:
            frames = s.frames
        else:
            rng = derive(seed ^ (KINDS.index(spec.kind) << 8) ^ spec.severity, idx)
            frames = corrupt(s.frames, spec, rng)
        out.append(WorkflowSequence(frames, s.kinematics, s.labels, s.n_classes))
    return out


def psnr(a, b, peak=1.0):
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
