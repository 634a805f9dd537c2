"""Counter-based random number streams.

Every random draw in the package is addressed by (seed, stream, period,
path index, slot).  Streams are built on the Philox 4x64 counter-based
generator, so the draw for a given address never depends on how many
paths are sampled, in what order, or in which process.  Splitting a
block of paths across workers and concatenating the results is
bit-identical to sampling the block in one call.

Philox advances in ticks of 4 output words, hence per-path strides are
rounded up to a multiple of 4 doubles.
"""

from __future__ import annotations

import numpy as np

# Stream tags keep logically distinct uses of the same user seed apart.
STREAM_SAA = 1
STREAM_SIM = 2

_TICK = 4  # Philox outputs per counter increment


def path_stride(n_uniforms: int) -> int:
    """Per-path stride in doubles, rounded up to a whole Philox tick."""
    if n_uniforms <= 0:
        raise ValueError(f"n_uniforms must be positive, got {n_uniforms}")
    return _TICK * ((n_uniforms + _TICK - 1) // _TICK)


def _key(seed: int, stream: int, period: int) -> np.ndarray:
    # 128-bit Philox key: user seed in the first word, the stream tag and
    # period packed into the second.
    if not 0 <= period < 2**32:
        raise ValueError(f"period out of range: {period}")
    return np.array([np.uint64(seed % 2**64),
                     np.uint64((stream << 32) | period)], dtype=np.uint64)


def uniform_block(seed: int, stream: int, period: int,
                  lo: int, hi: int, n_uniforms: int) -> np.ndarray:
    """Open-interval uniforms for paths [lo, hi) at one period.

    Returns an array of shape (hi - lo, n_uniforms) with entries in
    (0, 1).  Path p always receives the same numbers regardless of the
    block boundaries used to reach it.
    """
    if hi < lo:
        raise ValueError(f"empty block bounds: [{lo}, {hi})")
    stride = path_stride(n_uniforms)
    bg = np.random.Philox(key=_key(seed, stream, period))
    bg.advance(lo * (stride // _TICK))
    u = np.random.Generator(bg).random((hi - lo) * stride)
    u = u.reshape(hi - lo, stride)[:, :n_uniforms]
    # random() yields [0, 1); shift the lattice into the open interval so
    # inverse-CDF transforms never see an exact 0.
    return u + 2.0**-54
