"""Interleaved offset splitting of a lookback window and its exact inverse.

A series of length L is divided into O sub-sequences by phase: sub u
holds positions u, u+O, u+2O, ... so each sub-sequence is the original
series downsampled by factor O starting at offset u. Merging stacks the
sub-sequences back so that position u + t*O recovers sub u element t;
the round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .tensor import ShapeError, Tensor, as_tensor, concat, reshape, strided_slice


class OffsetConfigError(ConfigError):
    """Raised when the offset count does not divide the window length."""


@dataclass
class OffsetBundle:
    """The O phase sub-sequences of one [B, N, L] window batch."""

    offsets: int
    source_length: int
    subs: list = field(default_factory=list)  # each [B, N, L // offsets]
    pad_length: int = 0  # left padding added when the pad mode rounded L up

    @property
    def sub_length(self) -> int:
        return self.subs[0].shape[-1] if self.subs else 0


def split_offsets(x, offsets: int, allow_pad: bool = False) -> OffsetBundle:
    """Split [..., L] into ``offsets`` interleaved phase sub-sequences."""
    x = as_tensor(x)
    length = x.shape[-1]
    if offsets < 1 or offsets > length:
        raise OffsetConfigError(f"offset count {offsets} invalid for length {length}")
    pad = 0
    if length % offsets != 0:
        if not allow_pad:
            raise OffsetConfigError(
                f"length {length} is not divisible by offset count {offsets}; "
                f"enable padding or adjust the lookback"
            )
        padded = ((length + offsets - 1) // offsets) * offsets
        pad = padded - length
        # replicate the earliest value to the left so time order is intact
        first = strided_slice(x, axis=-1, start=0, step=length)  # [..., 1]
        x = concat([first] * pad + [x], axis=-1)
        length = padded
    subs = [strided_slice(x, axis=-1, start=u, step=offsets) for u in range(offsets)]
    return OffsetBundle(offsets=offsets, source_length=length - pad, subs=subs, pad_length=pad)


def merge_offsets(bundle: OffsetBundle) -> Tensor:
    """Inverse interleave: output position u + t*O takes sub u element t."""
    if not bundle.subs:
        raise ShapeError("cannot merge an empty bundle")
    first_shape = bundle.subs[0].shape
    for sub in bundle.subs:
        if sub.shape != first_shape:
            raise ShapeError(f"inconsistent sub-sequence shapes: {sub.shape} vs {first_shape}")
    sub_len = first_shape[-1]
    lead = first_shape[:-1]
    columns = [reshape(sub, lead + (sub_len, 1)) for sub in bundle.subs]
    stacked = concat(columns, axis=-1)  # [..., T, O]; row-major flatten gives t*O + u
    merged = reshape(stacked, lead + (sub_len * bundle.offsets,))
    if bundle.pad_length:
        merged = strided_slice(merged, axis=-1, start=bundle.pad_length, step=1)
    return merged
