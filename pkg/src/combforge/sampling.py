"""Seeded random generators for unitaries, channels, states, and POVMs.

Everything draws from a caller-supplied ``numpy.random.Generator`` so that
identical seeds give bitwise-identical objects.
"""

from __future__ import annotations

import numpy as np


def ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Columns of a Haar-random unitary: QR of a Ginibre matrix with the
    phases of the R diagonal folded back into Q."""
    if rows < cols:
        raise ValueError(f"isometry needs rows >= cols, got {rows} x {cols}")
    q, r = np.linalg.qr(ginibre(rows, cols, rng))
    diag = np.diagonal(r)
    phases = diag / np.abs(diag)
    return q * phases[np.newaxis, :]


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    return haar_isometry(dim, dim, rng)


def random_channel_choi(
    d_in: int, d_out: int, rng: np.random.Generator, env_dim: int | None = None
) -> np.ndarray:
    """Choi operator of a Haar-random channel, on input (x) output order.

    The channel is Tr_env[V rho V*] for a Haar isometry V into output (x)
    environment; the environment dimension defaults to d_in * d_out, which
    is generic (a smaller value biases toward low Kraus rank).
    """
    env = d_in * d_out if env_dim is None else int(env_dim)
    v = haar_isometry(d_out * env, d_in, rng).reshape(d_out, env, d_in)
    choi = np.einsum("oei,pej->iojp", v, v.conj())
    side = d_in * d_out
    choi = choi.reshape(side, side)
    return (choi + choi.conj().T) / 2.0


def apply_choi(choi: np.ndarray, d_in: int, d_out: int, rho: np.ndarray) -> np.ndarray:
    """Act with a channel given as a Choi operator on input (x) output order."""
    t = choi.reshape(d_in, d_out, d_in, d_out)
    return np.einsum("ij,iajb->ab", rho.T, t)


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = ginibre(dim, dim, rng)
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_povm(dim: int, outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Full-rank random POVM from Wishart pieces renormalized by their sum."""
    pieces = []
    for _ in range(outcomes):
        g = ginibre(dim, dim, rng)
        pieces.append(g @ g.conj().T)
    total = sum(pieces)
    vals, vecs = np.linalg.eigh(total)
    isr = (vecs / np.sqrt(vals)) @ vecs.conj().T
    out = [isr @ p @ isr for p in pieces]
    return [(m + m.conj().T) / 2.0 for m in out]


def random_simplex(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(n))
