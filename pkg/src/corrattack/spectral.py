"""FFT, frequency gating, Gaussian smoothing and white noise.

The FFT is an iterative radix-2 transform; other lengths go through
Bluestein's chirp-z algorithm on a power-of-two grid. Forward is
unnormalized, the inverse carries the 1/N factor.
"""

from functools import lru_cache
import math

import numpy as np

from .errors import DomainError
from .correlation import _logistic


def _bit_reverse_permutation(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _radix2_plan(n):
    perm = _bit_reverse_permutation(n)
    stages = []
    size = 2
    while size <= n:
        half = size // 2
        stages.append(np.exp(-2j * np.pi * np.arange(half) / size))
        size *= 2
    return perm, stages


def _fft_pow2(a, inverse=False):
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128)
    perm, stages = _radix2_plan(n)
    out = a[..., perm].astype(np.complex128)
    size = 2
    for tw in stages:
        half = size // 2
        if inverse:
            tw = tw.conj()
        blocks = out.reshape(out.shape[:-1] + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        out = blocks.reshape(out.shape)
        size *= 2
    return out


@lru_cache(maxsize=64)
def _bluestein_plan(n):
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp argument small and exact for large n
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = chirp.conj()
    b[m - n + 1 :] = chirp[1:][::-1].conj()
    return m, chirp, _fft_pow2(b)


def _fft_bluestein(a):
    n = a.shape[-1]
    m, chirp, b_hat = _bluestein_plan(n)
    padded = np.zeros(a.shape[:-1] + (m,), dtype=np.complex128)
    padded[..., :n] = a * chirp
    conv = _fft_pow2(_fft_pow2(padded) * b_hat, inverse=True) / m
    return conv[..., :n] * chirp


def _transform(a, inverse):
    n = a.shape[-1]
    if n & (n - 1) == 0:
        return _fft_pow2(a, inverse)
    if inverse:
        return np.conj(_fft_bluestein(np.conj(a)))
    return _fft_bluestein(a)


def fft_forward(x):
    """Unnormalized DFT ``X[f] = sum_t x[t] exp(-2 pi i f t / N)``; returns all N bins."""
    a = np.asarray(x)
    if a.ndim != 1 or len(a) < 2:
        raise DomainError("fft_forward needs a 1-D sequence of length >= 2")
    return _transform(a.astype(np.complex128), inverse=False)


def fft_inverse(spectrum, real=True):
    """Inverse DFT with the 1/N factor; drops the imaginary part when ``real``."""
    s = np.asarray(spectrum, dtype=np.complex128)
    if s.ndim != 1 or len(s) < 2:
        raise DomainError("fft_inverse needs a 1-D spectrum of length >= 2")
    out = _transform(s, inverse=True) / len(s)
    return out.real if real else out


def frequency_gate(n, k_f):
    """Low-pass gate ``1 - sigmoid(|f| - k_f)`` for every bin of an N-point spectrum.

    ``|f|`` is the folded frequency ``min(j, N - j)`` so the gate is symmetric
    and a gated real signal stays real.
    """
    if n < 2:
        raise DomainError("frequency gate needs n >= 2")
    j = np.arange(n)
    folded = np.minimum(j, n - j).astype(np.float64)
    return 1.0 - _logistic(folded - float(k_f))


def low_pass(r, k_f):
    r = np.asarray(r, dtype=np.float64)
    g = frequency_gate(len(r), k_f)
    return fft_inverse(fft_forward(r) * g)


def low_freq_energy(r, k_f):
    """Mean squared amplitude of ``r`` after the soft low-pass gate."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise DomainError("low_freq_energy needs a sequence of length >= 2")
    lp = low_pass(r, k_f)
    return float(np.mean(lp * lp))


def low_freq_energy_grad(r, k_f):
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise DomainError("low_freq_energy_grad needs a sequence of length >= 2")
    n = len(r)
    return (2.0 / n) * low_pass(low_pass(r, k_f), k_f)


def gaussian_kernel(sigma):
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def _reflect_index(i, n):
    # half-sample symmetric reflection: ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2} ...
    period = 2 * n
    i = i % period
    return np.where(i < n, i, period - 1 - i)


def gaussian_filter(x, sigma):
    """Smooth with a truncated (radius ceil(3 sigma)), normalized Gaussian kernel.

    Boundaries use half-sample symmetric reflection.
    """
    if not sigma > 0:
        raise DomainError(f"gaussian sigma must be > 0, got {sigma!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise DomainError("gaussian_filter needs a sequence of length >= 2")
    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    idx = _reflect_index(np.arange(-radius, len(x) + radius), len(x))
    return np.convolve(x[idx], kernel, mode="valid")


@lru_cache(maxsize=32)
def gaussian_matrix(n, sigma):
    """Dense N x N matrix ``M`` with ``gaussian_filter(x, sigma) == M @ x``."""
    m = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        m[:, j] = gaussian_filter(e, sigma)
    m.setflags(write=False)
    return m


def add_white_noise(x, sigma, seed):
    if not sigma >= 0:
        raise DomainError(f"noise sigma must be >= 0, got {sigma!r}")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + sigma * rng.standard_normal(x.shape)
