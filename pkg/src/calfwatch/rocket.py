"""Random convolutional kernel transform for 8-channel, 75-sample windows.

Each kernel has random length (7, 9 or 11), mean-centered Gaussian weights,
a uniform bias on [-1, 1], an exponentially sampled dilation, optional "same"
padding, and convolves exactly one uniformly chosen channel.  Two features
are pooled per kernel: the proportion of positive convolution values (PPV)
and the maximum.

Channels are standardized per window (mean 0, sd 1; channels with sd below
1e-12 are treated as all zeros) before convolution.

Sampling uses one numpy PCG64 generator; the per-kernel draw order is fixed:
length, weights, bias, dilation exponent, padding flag, channel.  Equal seeds
therefore give bit-identical kernel sets.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import BadConfig, NoValidPositions, ShapeMismatch

KERNEL_LENGTHS = (7, 9, 11)
DEFAULT_NUM_KERNELS = 10_000
_SD_GUARD = 1e-12


@dataclass(frozen=True)
class Kernel:
    length: int
    weights: np.ndarray
    bias: float
    dilation: int
    padding: int
    channel: int


@dataclass(eq=False)
class KernelSet:
    """A sampled kernel bank over fixed-shape windows.

    Weights are stored flat; ``lengths`` delimits each kernel's slice.
    """

    lengths: np.ndarray      # int32 (K,)
    weights: np.ndarray      # float64, sum(lengths)
    biases: np.ndarray       # float64 (K,)
    dilations: np.ndarray    # int32 (K,)
    paddings: np.ndarray     # int32 (K,)
    channels: np.ndarray     # int32 (K,)
    seed: int
    input_length: int = 75
    num_channels: int = 8

    def __len__(self) -> int:
        return len(self.lengths)

    def kernel(self, i: int) -> Kernel:
        off = int(self.lengths[:i].sum())
        ln = int(self.lengths[i])
        return Kernel(
            length=ln,
            weights=self.weights[off:off + ln].copy(),
            bias=float(self.biases[i]),
            dilation=int(self.dilations[i]),
            padding=int(self.paddings[i]),
            channel=int(self.channels[i]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, KernelSet):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.input_length == other.input_length
            and self.num_channels == other.num_channels
            and np.array_equal(self.lengths, other.lengths)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
            and np.array_equal(self.dilations, other.dilations)
            and np.array_equal(self.paddings, other.paddings)
            and np.array_equal(self.channels, other.channels)
        )


def sample_kernels(seed: int, num_kernels: int = DEFAULT_NUM_KERNELS,
                   input_length: int = 75, num_channels: int = 8) -> KernelSet:
    """Draw a reproducible kernel set."""
    if num_kernels < 1:
        raise BadConfig(f"num_kernels {num_kernels} < 1")
    if input_length < 12:
        raise BadConfig(f"input_length {input_length} < 12")
    if num_channels < 1:
        raise BadConfig(f"num_channels {num_channels} < 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    lengths = np.empty(num_kernels, dtype=np.int32)
    weights = []
    biases = np.empty(num_kernels, dtype=np.float64)
    dilations = np.empty(num_kernels, dtype=np.int32)
    paddings = np.empty(num_kernels, dtype=np.int32)
    channels = np.empty(num_kernels, dtype=np.int32)
    for i in range(num_kernels):
        ln = KERNEL_LENGTHS[rng.integers(0, len(KERNEL_LENGTHS))]
        lengths[i] = ln
        w = rng.standard_normal(ln)
        weights.append(w - w.mean())
        biases[i] = rng.uniform(-1.0, 1.0)
        max_exp = np.log2((input_length - 1) / (ln - 1))
        dilations[i] = int(2 ** rng.uniform(0.0, max_exp))
        pad_on = rng.integers(0, 2)
        paddings[i] = ((ln - 1) * dilations[i]) // 2 if pad_on else 0
        channels[i] = rng.integers(0, num_channels)
    return KernelSet(
        lengths=lengths, weights=np.concatenate(weights), biases=biases,
        dilations=dilations, paddings=paddings, channels=channels,
        seed=int(seed), input_length=input_length, num_channels=num_channels,
    )


@njit(cache=True)
def _conv_ppv_max(series, weights, length, bias, dilation, padding):
    n = series.shape[0]
    out_len = n + 2 * padding - (length - 1) * dilation
    end = n + padding - (length - 1) * dilation
    positive = 0
    best = -np.inf
    for start in range(-padding, end):
        acc = bias
        idx = start
        for j in range(length):
            if 0 <= idx < n:
                acc += weights[j] * series[idx]
            idx += dilation
        if acc > best:
            best = acc
        if acc > 0.0:
            positive += 1
    return positive / out_len, best


@njit(cache=True, parallel=True)
def _transform_batch(x, lengths, weights, offsets, biases, dilations, paddings,
                     channels, out):
    n = x.shape[0]
    k = lengths.shape[0]
    for i in prange(n):
        for kk in range(k):
            off = offsets[kk]
            ppv, mx = _conv_ppv_max(
                x[i, channels[kk]], weights[off:off + lengths[kk]],
                lengths[kk], biases[kk], dilations[kk], paddings[kk],
            )
            out[i, 2 * kk] = ppv
            out[i, 2 * kk + 1] = mx
    return out


def standardize_windows(values: np.ndarray) -> np.ndarray:
    """Per-window, per-channel standardization with the zero-variance guard."""
    v = np.asarray(values, dtype=np.float64)
    mean = v.mean(axis=-1, keepdims=True)
    sd = v.std(axis=-1, keepdims=True)
    flat = sd < _SD_GUARD
    out = np.where(flat, 0.0, (v - mean) / np.where(flat, 1.0, sd))
    return out


def apply_kernel(window, kernel: Kernel) -> tuple[float, float]:
    """PPV and max of one kernel over one window's standardized channel."""
    values = window.values if hasattr(window, "values") else np.asarray(window)
    series = standardize_windows(values[kernel.channel][None, :])[0]
    out_len = (series.shape[0] + 2 * kernel.padding
               - (kernel.length - 1) * kernel.dilation)
    if out_len <= 0:
        raise NoValidPositions(
            f"dilated span exceeds padded length ({out_len} positions)")
    ppv, mx = _conv_ppv_max(
        series, np.ascontiguousarray(kernel.weights, dtype=np.float64),
        kernel.length, kernel.bias, kernel.dilation, kernel.padding,
    )
    return float(ppv), float(mx)


def transform(windows, ks: KernelSet) -> np.ndarray:
    """Feature matrix (n, 2K): kernel-major columns, PPV then max per kernel."""
    from .signals import stack_windows

    if isinstance(windows, np.ndarray):
        x = windows.astype(np.float64, copy=False)
    else:
        x = stack_windows(windows)
    if x.ndim != 3 or x.shape[1] != ks.num_channels or x.shape[2] != ks.input_length:
        raise ShapeMismatch(
            f"windows {x.shape} do not match kernel set "
            f"({ks.num_channels} channels x {ks.input_length} samples)")
    x = standardize_windows(x)
    offsets = np.zeros(len(ks), dtype=np.int64)
    np.cumsum(ks.lengths[:-1], out=offsets[1:])
    out = np.empty((x.shape[0], 2 * len(ks)), dtype=np.float64)
    if x.shape[0] == 0:
        return out
    _transform_batch(
        np.ascontiguousarray(x), ks.lengths.astype(np.int64),
        np.ascontiguousarray(ks.weights), offsets,
        ks.biases, ks.dilations.astype(np.int64), ks.paddings.astype(np.int64),
        ks.channels.astype(np.int64), out,
    )
    return out
