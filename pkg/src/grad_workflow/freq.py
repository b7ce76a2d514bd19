"""Frequency views of a frame: level-1 Haar DWT and radix-2 Fourier amplitude.

All functions accept arbitrary leading batch axes and operate on the last two
(height, width). They are plain numpy: the views are inputs, not learned.
"""

import math
from dataclasses import dataclass

import numpy as np

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class WaveletKernel:
    """Orthonormal Haar analysis pair at level 1."""

    lowpass: tuple = (1 / math.sqrt(2), 1 / math.sqrt(2))
    highpass: tuple = (1 / math.sqrt(2), -1 / math.sqrt(2))
    level: int = 1


HAAR = WaveletKernel()


def _pad_even(x):
    h, w = x.shape[-2:]
    pad = [(0, 0)] * (x.ndim - 2) + [(0, h % 2), (0, w % 2)]
    if h % 2 or w % 2:
        x = np.pad(x, pad, mode="symmetric")
    return x


def dwt2_haar(image, kernel=HAAR):
    """Level-1 separable Haar analysis.

    Returns ``(A, LZ, ZL, ZZ)``, each of shape ``[..., ceil(H/2), ceil(W/2)]``.
    LZ is low-pass along rows (height) and high-pass along columns (width), ZL
    the reverse, ZZ high-pass on both. Odd sizes are padded by reflecting the
    last row/column.
    """
    x = np.asarray(image)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    if x.ndim < 2 or x.shape[-1] == 0 or x.shape[-2] == 0:
        raise ValueError(f"dwt2_haar needs a non-empty image, got shape {x.shape}")
    x = _pad_even(x)
    l0, l1 = kernel.lowpass
    h0, h1 = kernel.highpass
    # pass along height (index m)
    top, bot = x[..., 0::2, :], x[..., 1::2, :]
    lo_h = l0 * top + l1 * bot
    hi_h = h0 * top + h1 * bot
    # pass along width (index n)
    A = l0 * lo_h[..., 0::2] + l1 * lo_h[..., 1::2]
    LZ = h0 * lo_h[..., 0::2] + h1 * lo_h[..., 1::2]
    ZL = l0 * hi_h[..., 0::2] + l1 * hi_h[..., 1::2]
    ZZ = h0 * hi_h[..., 0::2] + h1 * hi_h[..., 1::2]
    return A, LZ, ZL, ZZ


def idwt2_haar(subbands, kernel=HAAR):
    """Exact synthesis inverse of :func:`dwt2_haar` (for the orthonormal pair)."""
    A, LZ, ZL, ZZ = (np.asarray(s) for s in subbands)
    if not (A.shape == LZ.shape == ZL.shape == ZZ.shape):
        raise ValueError(f"subband shapes differ: {A.shape}, {LZ.shape}, {ZL.shape}, {ZZ.shape}")
    l0, l1 = kernel.lowpass
    h0, h1 = kernel.highpass
    lo_h = np.empty(A.shape[:-1] + (2 * A.shape[-1],), dtype=A.dtype)
    hi_h = np.empty_like(lo_h)
    lo_h[..., 0::2] = l0 * A + h0 * LZ
    lo_h[..., 1::2] = l1 * A + h1 * LZ
    hi_h[..., 0::2] = l0 * ZL + h0 * ZZ
    hi_h[..., 1::2] = l1 * ZL + h1 * ZZ
    out = np.empty(A.shape[:-2] + (2 * A.shape[-2], 2 * A.shape[-1]), dtype=A.dtype)
    out[..., 0::2, :] = l0 * lo_h + h0 * hi_h
    out[..., 1::2, :] = l1 * lo_h + h1 * hi_h
    return out


def wavelet_view(image, kernel=HAAR):
    """Subbands stacked as channels in (A, LZ, ZL, ZZ) order: ``[..., 4, H/2, W/2]``."""
    return np.stack(dwt2_haar(image, kernel), axis=-3)


# ---------------------------------------------------------------- FFT

def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


def _next_pow2(n):
    return 1 << (n - 1).bit_length()


def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft1(x):
    """Iterative radix-2 decimation-in-time DFT along the last axis.

    Unnormalised forward transform, X[k] = sum_n x[n] exp(-2 pi i k n / N).
    The length must be a power of two.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"radix-2 FFT length must be a power of two, got {n}")
    y = x[..., _bit_reverse(n)]
    size = 2
    lead = y.shape[:-1]
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = y.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return y


def fft2(image):
    """2D radix-2 FFT over the last two axes (both powers of two)."""
    return np.swapaxes(fft1(np.swapaxes(fft1(image), -1, -2)), -1, -2)


def fft2_amplitude(image, raw=False, return_meta=False):
    """Fourier amplitude sqrt(R^2 + I^2) of ``image [..., H, W]``.

    Non power-of-two sizes are zero-padded up; ``return_meta`` reports the
    padding. With ``raw`` the unnormalised, uncentred amplitude is returned;
    otherwise it is DC-centred, mapped through log(1 + a) and divided by its
    per-frame maximum (an all-zero spectrum stays zero).
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim < 2 or x.shape[-1] <= 0 or x.shape[-2] <= 0:
        raise ValueError(f"fft2_amplitude needs positive dimensions, got shape {x.shape}")
    h, w = x.shape[-2:]
    ph, pw = _next_pow2(h), _next_pow2(w)
    if (ph, pw) != (h, w):
        x = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(0, ph - h), (0, pw - w)])
    F = fft2(x)
    amp = np.sqrt(F.real ** 2 + F.imag ** 2)
    if not raw:
        amp = np.roll(amp, (ph // 2, pw // 2), axis=(-2, -1))
        amp = np.log1p(amp)
        peak = amp.max(axis=(-2, -1), keepdims=True)
        amp = np.divide(amp, peak, out=np.zeros_like(amp), where=peak > 0)
    if return_meta:
        return amp, {"original_shape": (h, w), "padded_shape": (ph, pw), "padded": (ph, pw) != (h, w)}
    return amp


# ---------------------------------------------------------------- frames

def luminance(rgb):
    rgb = np.asarray(rgb)
    return LUMA[0] * rgb[..., 0, :, :] + LUMA[1] * rgb[..., 1, :, :] + LUMA[2] * rgb[..., 2, :, :]


def disentangle_frame(rgb):
    """Split one frame [3, H, W] into (spatial, wavelet [4, H/2, W/2], fourier [1, H, W]).

    Accepts a leading batch axis too ([N, 3, H, W]); the frequency views are
    computed on luminance.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim < 3 or rgb.shape[-3] != 3:
        raise ValueError(f"expected a 3-channel frame, got shape {rgb.shape}")
    y = luminance(rgb)
    wav = wavelet_view(y).astype(np.float32)
    four = fft2_amplitude(y)[..., None, :, :].astype(np.float32)
    return rgb, wav, four


disentangle_frames = disentangle_frame
