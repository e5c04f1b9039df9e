"""Portable seeded random streams.

All randomness in the package flows through :class:`Xoshiro256`, a
xoshiro256** generator (Blackman & Vigna) whose 256-bit state is expanded from
an integer seed with SplitMix64. Uniform doubles take the top 53 bits of each
64-bit output; normals use the basic Box-Muller transform on consecutive
uniform pairs. Both choices are fixed so that a seed reproduces the same
stream on every platform and in any other implementation of the same recipe.
"""

from __future__ import annotations

import numpy as np

from rmtdetect import _kernels


class Xoshiro256:
    """xoshiro256** stream seeded through SplitMix64.

    Args:
        seed: Any Python integer; only its low 64 bits are used.
        backend: Kernel backend name (``"cython"`` or ``"python"``); defaults
            to the backend selected at import.
    """

    def __init__(self, seed: int, backend: str | None = None) -> None:
        self._k = _kernels.get_backend(backend)
        self.seed = int(seed)
        self.state = self._k.splitmix64_seed(self.seed)

    def integers(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        out = np.empty(n, dtype=np.uint64)
        self._k.fill_u64(self.state, out)
        return out

    def random(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Uniform doubles on [0, 1)."""
        n = int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        self._k.fill_uniform(self.state, out)
        return out.reshape(size)

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Standard normal doubles (Box-Muller)."""
        n = int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        self._k.fill_normal(self.state, out)
        return out.reshape(size)

    def complex_normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Circular complex normals with ``E|z|^2 = 1``.

        Real and imaginary parts are interleaved in the underlying stream.
        """
        n = int(np.prod(size))
        pairs = self.normal(2 * n).reshape(n, 2)
        z = (pairs[:, 0] + 1j * pairs[:, 1]) / np.sqrt(2.0)
        return z.reshape(size)

    def noise(self, size: int | tuple[int, ...], distribution: str) -> np.ndarray:
        """Zero-mean, unit-variance draws from a named distribution.

        ``gaussian`` uses Box-Muller; ``uniform`` maps to ``[-sqrt 3, sqrt 3)``;
        ``bernoulli-symmetric`` gives +1/-1 from the top bit of each output.
        """
        if distribution == "gaussian":
            return self.normal(size)
        if distribution == "uniform":
            return (2.0 * self.random(size) - 1.0) * np.sqrt(3.0)
        if distribution == "bernoulli-symmetric":
            n = int(np.prod(size))
            bits = self.integers(n) >> np.uint64(63)
            return np.where(bits == 1, 1.0, -1.0).reshape(size)
        raise ValueError(f"unknown noise distribution {distribution!r}")


NOISE_DISTRIBUTIONS = ("gaussian", "uniform", "bernoulli-symmetric")
