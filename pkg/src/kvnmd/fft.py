"""Unitary discrete Fourier transforms along axes of a dense grid field.

The forward transform uses the kernel ``exp(-2 pi i j k / N)`` and both
directions carry a ``1/sqrt(N)`` factor, so the transform is unitary and the
inverse is the adjoint. The numba path is an iterative in-place radix-2
Cooley-Tukey transform over strided axis slices; the numpy path delegates to
``numpy.fft`` with ``norm="ortho"``.
"""
import math

import numpy as np

from ._accel import njit, use_numba


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@njit(cache=True)
def _radix2_inplace(a, twiddle):
    # a has shape (outer, n, inner); transforms the middle axis in place.
    outer, n, inner = a.shape
    for o in range(outer):
        j = 0
        for i in range(1, n):
            bit = n >> 1
            while j & bit:
                j ^= bit
                bit >>= 1
            j ^= bit
            if i < j:
                for c in range(inner):
                    tmp = a[o, i, c]
                    a[o, i, c] = a[o, j, c]
                    a[o, j, c] = tmp
        size = 2
        while size <= n:
            half = size // 2
            stride = n // size
            for start in range(0, n, size):
                for k in range(half):
                    w = twiddle[k * stride]
                    top = start + k
                    bot = top + half
                    for c in range(inner):
                        u = a[o, top, c]
                        v = a[o, bot, c] * w
                        a[o, top, c] = u + v
                        a[o, bot, c] = u - v
            size *= 2
    scale = 1.0 / math.sqrt(n)
    for o in range(outer):
        for i in range(n):
            for c in range(inner):
                a[o, i, c] *= scale


_TWIDDLES = {}


def _twiddle(n, inverse):
    key = (n, inverse)
    tw = _TWIDDLES.get(key)
    if tw is None:
        sign = 1.0 if inverse else -1.0
        tw = np.exp(sign * 2j * np.pi * np.arange(max(n // 2, 1)) / n)
        _TWIDDLES[key] = tw
    return tw


def fft_axis_numba(a, axis, inverse=False):
    """Transform ``a`` in place along ``axis`` with the radix-2 kernel.

    ``a`` must be C-contiguous complex128 and the axis length a power of two.
    """
    n = a.shape[axis]
    if not _is_pow2(n):
        raise ValueError(f"radix-2 transform needs a power-of-two length, got {n}")
    if n == 1:
        return a
    outer = int(np.prod(a.shape[:axis], dtype=np.int64))
    inner = int(np.prod(a.shape[axis + 1:], dtype=np.int64))
    _radix2_inplace(a.reshape(outer, n, inner), _twiddle(n, inverse))
    return a


def fft_axis_numpy(a, axis, inverse=False):
    """Transform ``a`` in place along ``axis`` with ``numpy.fft``."""
    if inverse:
        a[...] = np.fft.ifft(a, axis=axis, norm="ortho")
    else:
        a[...] = np.fft.fft(a, axis=axis, norm="ortho")
    return a


def fft_axes(a, axes, inverse=False, inplace=False):
    """Unitary DFT of ``a`` over each axis in ``axes``.

    Negative axes are allowed. Returns the transformed array (``a`` itself
    when ``inplace`` is true and ``a`` is already contiguous complex128).
    """
    if not inplace or a.dtype != np.complex128 or not a.flags.c_contiguous:
        a = np.array(a, dtype=np.complex128, order="C", copy=True)
    axes = [ax % a.ndim for ax in axes]
    if use_numba() and all(_is_pow2(a.shape[ax]) for ax in axes):
        for ax in axes:
            fft_axis_numba(a, ax, inverse)
    else:
        if inverse:
            a[...] = np.fft.ifftn(a, axes=axes, norm="ortho")
        else:
            a[...] = np.fft.fftn(a, axes=axes, norm="ortho")
    return a


def dft_matrix(n, inverse=False):
    """Dense unitary DFT matrix, the O(N^2) reference for the fast paths."""
    j = np.arange(n)
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)
