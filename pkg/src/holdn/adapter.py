"""Speech-side numeric stack: encoder interface, conv length adapter, projector.

Feature matrices are row-major ``(rows, dim)`` float arrays. The length
adapter is two strided 1-d convolutions over the time axis followed by a
row-wise affine projection into the decoder's embedding width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, RangeError, ShapeError
from .stream import SpeechStream

ENCODER_DIM = 8
ADAPTER_FILTERS = 8
DECODER_DIM = 16


@dataclass(frozen=True)
class FeatureMatrix:
    """A ``rows x dim`` feature sequence.

    ``source_frames`` is the number of input frames this matrix was computed
    from; it survives the adapter so downstream models can reason about how
    much audio they have seen. ``degenerate`` marks a conv output that had
    no valid window.
    """

    values: np.ndarray
    source_frames: int = -1
    degenerate: bool = False

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ShapeError("feature matrix contains non-finite values")
        if self.source_frames < 0:
            object.__setattr__(self, "source_frames", v.shape[0])

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def empty(cls, dim: int, source_frames: int = 0, degenerate: bool = False) -> "FeatureMatrix":
        return cls(np.zeros((0, dim)), source_frames, degenerate)


def output_length(T: int, k: int, s: int, p: int) -> int:
    """Rows produced by a conv with kernel ``k``, stride ``s``, padding ``p``.

    Returns 0 when the padded input is shorter than one kernel window.
    """
    if T < 0 or k < 1 or s < 1 or p < 0:
        raise ConfigError(f"bad conv geometry T={T} k={k} s={s} p={p}")
    span = T - k + 2 * p
    if span < 0:
        return 0
    return span // s + 1


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    stride: int
    padding: int
    weights: np.ndarray = field(repr=False)  # (filters, kernel * dim_in), window rows flattened in time order
    bias: np.ndarray = field(repr=False)
    activation: str = "relu"

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError(f"bad conv geometry k={self.kernel} s={self.stride} p={self.padding}")
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] % self.kernel:
            raise ShapeError(f"conv weights shape {w.shape} incompatible with kernel {self.kernel}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv bias shape {b.shape} != ({w.shape[0]},)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def filters(self) -> int:
        return self.weights.shape[0]

    @property
    def dim_in(self) -> int:
        return self.weights.shape[1] // self.kernel


def conv1d_forward(x: FeatureMatrix, spec: ConvSpec) -> FeatureMatrix:
    if x.dim != spec.dim_in:
        raise ShapeError(f"conv expects input dim {spec.dim_in}, got {x.dim}")
    k, s, p = spec.kernel, spec.stride, spec.padding
    n = output_length(x.rows, k, s, p)
    if n == 0:
        return FeatureMatrix.empty(spec.filters, x.source_frames, degenerate=True)
    padded = np.pad(x.values, ((p, p), (0, 0)))
    # (windows, dim, k) -> (windows, k, dim) so each window flattens time-major
    windows = sliding_window_view(padded, k, axis=0)[::s]
    windows = windows.transpose(0, 2, 1).reshape(n, k * x.dim)
    out = windows @ spec.weights.T + spec.bias
    if spec.activation == "relu":
        out = np.maximum(out, 0.0)
    return FeatureMatrix(out, x.source_frames, x.degenerate)


@dataclass(frozen=True)
class AdapterConfig:
    conv1: ConvSpec
    conv2: ConvSpec
    projector_weights: np.ndarray = field(repr=False)  # (d_llm, conv2.filters)
    projector_bias: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.conv2.dim_in != self.conv1.filters:
            raise ShapeError(f"conv2 input dim {self.conv2.dim_in} != conv1 filters {self.conv1.filters}")
        w = np.asarray(self.projector_weights, dtype=float)
        b = np.asarray(self.projector_bias, dtype=float)
        if w.ndim != 2 or w.shape[1] != self.conv2.filters:
            raise ShapeError(f"projector weights {w.shape} do not take {self.conv2.filters} inputs")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"projector bias shape {b.shape} != ({w.shape[0]},)")
        object.__setattr__(self, "projector_weights", w)
        object.__setattr__(self, "projector_bias", b)

    @property
    def dim_in(self) -> int:
        return self.conv1.dim_in

    @property
    def dim_out(self) -> int:
        return self.projector_weights.shape[0]


def adapt(x: FeatureMatrix, config: AdapterConfig) -> FeatureMatrix:
    """Length adapter (two convs) followed by the linear projector."""
    z = conv1d_forward(conv1d_forward(x, config.conv1), config.conv2)
    if z.rows == 0:
        return FeatureMatrix.empty(config.dim_out, x.source_frames, z.degenerate)
    e = z.values @ config.projector_weights.T + config.projector_bias
    return FeatureMatrix(e, x.source_frames, z.degenerate)


def default_adapter(
    dim_in: int = ENCODER_DIM,
    filters: int = ADAPTER_FILTERS,
    d_llm: int = DECODER_DIM,
    *,
    kernel: int = 5,
    stride: int = 2,
    padding: int = 2,
    activation: str = "relu",
    seed: int = 0,
) -> AdapterConfig:
    """Seeded random adapter with the 5/2/2 conv geometry at toy width."""
    rng = np.random.default_rng(seed)

    def conv(d):
        fan_in = kernel * d
        return ConvSpec(
            kernel, stride, padding,
            rng.normal(0.0, fan_in ** -0.5, size=(filters, fan_in)),
            rng.normal(0.0, 0.1, size=filters),
            activation,
        )

    c1 = conv(dim_in)
    c2 = conv(filters)
    return AdapterConfig(
        c1, c2,
        rng.normal(0.0, filters ** -0.5, size=(d_llm, filters)),
        rng.normal(0.0, 0.1, size=d_llm),
    )


class Encoder(Protocol):
    dim: int

    def encode(self, stream: SpeechStream, f: int) -> FeatureMatrix:
        """Features for the first ``f`` frames, computed from scratch."""
        ...


def synthetic_frames(n: int, dim: int = ENCODER_DIM) -> np.ndarray:
    # Each row depends only on its index, so every prefix is self-consistent.
    idx = np.arange(n, dtype=float)[:, None]
    freqs = 0.05 * (1.0 + np.arange(dim, dtype=float))
    phases = 0.7 * np.arange(dim, dtype=float)
    return np.sin(idx * freqs + phases)


def mock_encode(stream: SpeechStream, f: int, dim: int = ENCODER_DIM) -> FeatureMatrix:
    """Encode the first ``f`` frames of ``stream``.

    Stored-frame streams return a copy of their first ``f`` rows; synthetic
    streams get a deterministic sinusoidal feature per frame index.
    """
    if not 0 <= f <= stream.num_frames:
        raise RangeError(f"f={f} outside [0, {stream.num_frames}] for stream {stream.id!r}")
    if stream.frames is not None:
        return FeatureMatrix(np.array(stream.frames[:f], dtype=float), f)
    return FeatureMatrix(synthetic_frames(f, dim), f)


class StoredFrameEncoder:
    """Encoder backed by :func:`mock_encode`; records every requested prefix."""

    def __init__(self, dim: int = ENCODER_DIM):
        self.dim = dim
        self.calls: list[int] = []

    def encode(self, stream: SpeechStream, f: int) -> FeatureMatrix:
        self.calls.append(f)
        out = mock_encode(stream, f, self.dim)
        if out.dim != self.dim and out.rows:
            raise ShapeError(f"stream {stream.id!r} has dim {out.dim}, encoder expects {self.dim}")
        return out
