"""Quantum combs: Choi operators of causally ordered networks.

An n-slot comb lives on systems 0..2n+1, even labels inputs and odd labels
outputs. Validity means positivity plus the recursive trace conditions

    Tr_(2k+1) C^(k) = 1_(2k) (x) C^(k-1),   k = n, ..., 0,

with C^(n) the comb itself and C^(-1) the scalar 1. The reduced operators
C^(k-1) are recovered by tracing systems 2k and 2k+1 and dividing by the
dimension of system 2k.
"""

from __future__ import annotations

import math

import numpy as np

from . import sampling
from .errors import (
    BadProbability,
    CausalityViolation,
    NotAChannel,
    NotPositive,
    SignatureMismatch,
)
from .systems import (
    CombSignature,
    HermitianOperator,
    _reorder,
    frobenius_distance,
    identity,
    kron_compose,
    link_product,
    min_eigenvalue,
    partial_trace,
    scalar_operator,
)
from .tolerances import CHAIN_TOL, CHANNEL_TOL, PSD_FLOOR


class QuantumComb:
    """A validated comb: operator, slot count, and its reduction chain.

    ``chain`` holds C^(n-1), ..., C^(0) followed by the terminal scalar.
    Construct through :func:`validate_comb` or the network builders.
    """

    __slots__ = ("operator", "slots", "chain")

    def __init__(self, operator: HermitianOperator, slots: int, chain: list):
        self.operator = operator
        self.slots = int(slots)
        self.chain = list(chain)

    @property
    def signature(self) -> CombSignature:
        return self.operator.signature

    def __repr__(self):
        return f"QuantumComb(slots={self.slots}, dims={self.signature.dims})"


def validate_comb(op: HermitianOperator, slots: int) -> QuantumComb:
    """Check positivity and the trace conditions; return the comb with its
    reduction chain.

    Raises SignatureMismatch for a wrong label set, NotPositive below the
    eigenvalue floor, CausalityViolation(level) where the trace condition
    first fails (level 0 also covers overall trace normalization).
    """
    n = int(slots)
    if n < 0:
        raise SignatureMismatch("slot count must be non-negative")
    expected = tuple(range(2 * n + 2))
    if op.signature.indices != expected:
        raise SignatureMismatch(
            f"a {n}-slot comb needs systems {expected}, got {op.signature.indices}"
        )
    low = min_eigenvalue(op)
    if low < PSD_FLOOR:
        raise NotPositive(
            f"comb has eigenvalue {low:.3e} below the floor", witness=low
        )
    chain = []
    current = op
    for k in range(n, -1, -1):
        d_in = current.signature.dim_of(2 * k)
        reduced = partial_trace(current, [2 * k, 2 * k + 1]) * (1.0 / d_in)
        if k > 0:
            rhs = kron_compose(
                identity(current.signature.restrict([2 * k])), reduced
            )
        else:
            rhs = identity(current.signature.restrict([0]))
        lhs = partial_trace(current, [2 * k + 1])
        residual = frobenius_distance(lhs, rhs)
        if residual > CHAIN_TOL:
            raise CausalityViolation(
                f"trace condition fails at level {k} (residual {residual:.3e})",
                level=k,
                residual=residual,
            )
        if k > 0:
            chain.append(reduced)
        else:
            chain.append(scalar_operator(reduced.matrix[0, 0].real))
        current = reduced
    return QuantumComb(op, n, chain)


# -- network construction ------------------------------------------------


def wire_label(slots: int, j: int) -> int:
    """Label of the internal memory wire feeding tooth ``j`` (1-based)."""
    return 2 * slots + 2 + j


def tooth_signature(
    slots: int, k: int, d_in: int, d_out: int, mem_in: int = 1, mem_out: int = 1
) -> CombSignature:
    """Signature of tooth ``k`` of an n-slot comb network.

    The tooth is a channel from (system 2k (x) incoming wire) to
    (system 2k+1 (x) outgoing wire); trivial wires are omitted.
    """
    systems = [(2 * k, int(d_in)), (2 * k + 1, int(d_out))]
    if mem_in > 1:
        systems.append((wire_label(slots, k), int(mem_in)))
    if mem_out > 1:
        systems.append((wire_label(slots, k + 1), int(mem_out)))
    return CombSignature(tuple(sorted(systems)), role="comb")


def tooth_operator(
    slots: int,
    k: int,
    choi: np.ndarray,
    d_in: int,
    d_out: int,
    mem_in: int = 1,
    mem_out: int = 1,
) -> HermitianOperator:
    """Wrap a raw Choi matrix, given in (input block (x) output block) order
    with each block as (open wire (x) memory wire), as a tooth operator."""
    sig = tooth_signature(slots, k, d_in, d_out, mem_in, mem_out)
    raw_systems = []
    raw_systems.append((2 * k, d_in))
    if mem_in > 1:
        raw_systems.append((wire_label(slots, k), mem_in))
    raw_systems.append((2 * k + 1, d_out))
    if mem_out > 1:
        raw_systems.append((wire_label(slots, k + 1), mem_out))
    side = math.prod(d for _, d in raw_systems)
    if np.shape(choi) != (side, side):
        raise SignatureMismatch(
            f"tooth {k}: Choi side {np.shape(choi)} does not match dims {raw_systems}"
        )
    return HermitianOperator(sig, _reorder(np.asarray(choi, dtype=complex), raw_systems, sig.systems))


def comb_from_network(teeth: list[HermitianOperator], memory_dims: list[int]) -> QuantumComb:
    """Contract a sequence of channel teeth into a comb.

    ``teeth[k]`` must live on systems {2k, 2k+1} plus the wire labels from
    :func:`wire_label`; ``memory_dims[j-1]`` is the dimension of wire j.
    Each tooth is checked to be trace preserving (NotAChannel with the
    tooth index otherwise) before the wires are contracted; the assembled
    operator is then validated as a comb.
    """
    n = len(teeth) - 1
    if n < 0:
        raise SignatureMismatch("a network needs at least one tooth")
    if len(memory_dims) != n:
        raise SignatureMismatch(
            f"{n + 1} teeth need {n} wire dimensions, got {len(memory_dims)}"
        )
    mem = [int(m) for m in memory_dims]
    for k, tooth in enumerate(teeth):
        expected = {2 * k, 2 * k + 1}
        if k >= 1 and mem[k - 1] > 1:
            expected.add(wire_label(n, k))
        if k <= n - 1 and mem[k] > 1:
            expected.add(wire_label(n, k + 1))
        if set(tooth.signature.indices) != expected:
            raise SignatureMismatch(
                f"tooth {k} lives on {tooth.signature.indices}, expected {sorted(expected)}"
            )
        outputs = {2 * k + 1}
        if k <= n - 1 and mem[k] > 1:
            outputs.add(wire_label(n, k + 1))
        inputs = set(tooth.signature.indices) - outputs
        traced = partial_trace(tooth, outputs)
        eye = identity(tooth.signature.restrict(inputs))
        defect = frobenius_distance(traced, eye)
        if defect > CHANNEL_TOL:
            raise NotAChannel(
                f"tooth {k} is not trace preserving (defect {defect:.3e})", tooth=k
            )
    assembled = teeth[0]
    for tooth in teeth[1:]:
        assembled = link_product(assembled, tooth)
    sig = CombSignature(tuple(assembled.signature.systems), role="comb")
    return validate_comb(HermitianOperator(sig, assembled.matrix), n)


def random_comb(
    signature: CombSignature, memory_dims: list[int], seed: int
) -> QuantumComb:
    """Haar-random comb with the given open-system signature and wire sizes."""
    n = signature.slots
    if signature.role != "comb":
        raise SignatureMismatch("signature role must be 'comb'")
    if len(memory_dims) != n:
        raise SignatureMismatch(
            f"a {n}-slot comb needs {n} wire dimensions, got {len(memory_dims)}"
        )
    rng = np.random.default_rng(seed)
    dims = signature.dims
    mem = [int(m) for m in memory_dims]
    teeth = []
    for k in range(n + 1):
        m_in = mem[k - 1] if k >= 1 else 1
        m_out = mem[k] if k <= n - 1 else 1
        d_in = dims[2 * k] * m_in
        d_out = dims[2 * k + 1] * m_out
        raw = sampling.random_channel_choi(d_in, d_out, rng)
        teeth.append(
            tooth_operator(n, k, raw, dims[2 * k], dims[2 * k + 1], m_in, m_out)
        )
    return comb_from_network(teeth, mem)


def identity_comb(signature: CombSignature) -> QuantumComb:
    """The fully depolarizing comb: identity divided by the output dimension.

    Valid for any signature; a convenient full-rank reference point.
    """
    op = identity(signature) * (1.0 / signature.output_dim)
    return validate_comb(op, signature.slots)


# -- ensembles ------------------------------------------------------------


class CombEnsemble:
    """Combs with probability weights, all on one signature."""

    def __init__(self, weights, combs: list[QuantumComb]):
        w = np.asarray(weights, dtype=float)
        if len(combs) == 0 or w.shape != (len(combs),):
            raise BadProbability(
                f"{len(combs)} combs need {len(combs)} weights, got shape {w.shape}"
            )
        if np.any(w < -1e-12):
            raise BadProbability(f"negative ensemble weight {w.min():.3e}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise BadProbability(f"ensemble weights sum to {w.sum():.12f}")
        sig = combs[0].signature
        for c in combs[1:]:
            if not c.signature.same_dims(sig):
                raise SignatureMismatch("ensemble combs live on different signatures")
        self.weights = np.clip(w, 0.0, None)
        self.weights.setflags(write=False)
        self.combs = list(combs)

    @property
    def signature(self) -> CombSignature:
        return self.combs[0].signature

    def __len__(self):
        return len(self.combs)

    def average(self) -> HermitianOperator:
        acc = self.weights[0] * self.combs[0].operator
        for w, c in zip(self.weights[1:], self.combs[1:]):
            acc = acc + w * c.operator
        return acc


class EnsembleCollection:
    """Labeled ensembles with prior weights: the card deck of a comb game."""

    def __init__(self, weights, ensembles: list[CombEnsemble]):
        w = np.asarray(weights, dtype=float)
        if len(ensembles) == 0 or w.shape != (len(ensembles),):
            raise BadProbability(
                f"{len(ensembles)} ensembles need matching weights, got {w.shape}"
            )
        if np.any(w < -1e-12):
            raise BadProbability(f"negative collection weight {w.min():.3e}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise BadProbability(f"collection weights sum to {w.sum():.12f}")
        sig = ensembles[0].signature
        for e in ensembles[1:]:
            if not e.signature.same_dims(sig):
                raise SignatureMismatch("ensembles live on different signatures")
        self.weights = np.clip(w, 0.0, None)
        self.weights.setflags(write=False)
        self.ensembles = list(ensembles)

    @property
    def signature(self) -> CombSignature:
        return self.ensembles[0].signature

    def __len__(self):
        return len(self.ensembles)

    def joint_weight(self, label: int, which: int) -> float:
        """Probability of drawing ensemble ``which`` and comb ``label``."""
        return float(self.weights[which] * self.ensembles[which].weights[label])
