"""Quantum testers: the measurements performed on combs.

An n-slot tester measures an (n-1)-slot comb; both live on systems
0..2n-1 and the outcome probability is p(x) = Tr[T_x C]. The effects of a
valid tester are positive and sum to 1_(2n-1) (x) Xi^(n), where the
normalization operators satisfy their own recursion

    Tr_(2k-2) Xi^(k) = 1_(2k-3) (x) Xi^(k-1),   k = n, ..., 2,

terminating in a unit-trace Xi^(1) (the probe marginal).
"""

from __future__ import annotations

import math

import numpy as np

from . import sampling
from .errors import (
    BadProbability,
    NormalizationViolation,
    NotAChannel,
    NotAState,
    NotPositive,
    ProbeNotNormalized,
    SignatureMismatch,
)
from .systems import (
    CombSignature,
    HermitianOperator,
    _reorder,
    embed_identity,
    frobenius_distance,
    identity,
    inv_sqrt_support,
    kron_compose,
    link_product,
    min_eigenvalue,
    partial_trace,
    support_projector,
)
from .tolerances import (
    CHAIN_TOL,
    CHANNEL_TOL,
    PROBABILITY_ATOL,
    PROBABILITY_SUM_TOL,
    PSD_FLOOR,
    STATE_TOL,
    STOCHASTIC_ATOL,
)


class QuantumTester:
    """A validated tester: its effects and normalization chain.

    ``normalization_chain`` holds Xi^(n), ..., Xi^(1). Construct through
    :func:`validate_tester` or :func:`tester_from_network`.
    """

    __slots__ = ("effects", "slots", "normalization_chain")

    def __init__(self, effects, slots, normalization_chain):
        self.effects = list(effects)
        self.slots = int(slots)
        self.normalization_chain = list(normalization_chain)

    @property
    def signature(self) -> CombSignature:
        return self.effects[0].signature

    @property
    def outcomes(self) -> int:
        return len(self.effects)

    def effect_sum(self) -> HermitianOperator:
        acc = self.effects[0]
        for e in self.effects[1:]:
            acc = acc + e
        return acc

    def __repr__(self):
        return (
            f"QuantumTester(slots={self.slots}, outcomes={self.outcomes}, "
            f"dims={self.signature.dims})"
        )


def validate_tester(effects, slots: int) -> QuantumTester:
    """Check positivity and the normalization recursion of tester effects.

    NormalizationViolation(level=k) means the condition producing Xi^(k)
    failed (level n is the effect-sum condition itself); a chain that
    closes but with Tr Xi^(1) != 1 raises ProbeNotNormalized.
    """
    n = int(slots)
    if n < 1:
        raise SignatureMismatch("a tester has at least one slot")
    effects = list(effects)
    if not effects:
        raise SignatureMismatch("a tester needs at least one effect")
    expected = tuple(range(2 * n))
    sig = effects[0].signature
    if sig.indices != expected:
        raise SignatureMismatch(
            f"a {n}-slot tester needs systems {expected}, got {sig.indices}"
        )
    for x, eff in enumerate(effects):
        if not eff.signature.same_dims(sig):
            raise SignatureMismatch(f"effect {x} has a different signature")
        low = min_eigenvalue(eff)
        if low < PSD_FLOOR:
            raise NotPositive(
                f"effect {x} has eigenvalue {low:.3e} below the floor",
                witness=low,
                which=x,
            )
    total = effects[0]
    for eff in effects[1:]:
        total = total + eff
    chain = []
    current = total
    for k in range(n, 0, -1):
        # current lives on systems 0..2k-1; peel system 2k-1 to get Xi^(k)
        d_top = current.signature.dim_of(2 * k - 1)
        xi = partial_trace(current, [2 * k - 1]) * (1.0 / d_top)
        rebuilt = kron_compose(
            identity(current.signature.restrict([2 * k - 1])), xi
        )
        residual = frobenius_distance(current, rebuilt)
        if residual > CHAIN_TOL:
            raise NormalizationViolation(
                f"normalization fails at level {k} (residual {residual:.3e})",
                level=k,
                residual=residual,
            )
        chain.append(xi)
        if k > 1:
            current = partial_trace(xi, [2 * k - 2])
    probe_trace = chain[-1].trace()
    if abs(probe_trace - 1.0) > CHAIN_TOL:
        raise ProbeNotNormalized(
            f"terminal chain element has trace {probe_trace:.9f}"
        )
    return QuantumTester(effects, n, chain)


# -- network construction ------------------------------------------------


def tester_wire_label(slots: int, j: int) -> int:
    """Label of the tester-internal memory wire with 1-based index ``j``."""
    return 2 * slots + j


def probe_signature(slots: int, d0: int, mem: int = 1) -> CombSignature:
    systems = [(0, int(d0))]
    if mem > 1:
        systems.append((tester_wire_label(slots, 1), int(mem)))
    return CombSignature(tuple(systems), role="tester")


def crossing_channel_signature(
    slots: int, k: int, d_in: int, d_out: int, mem_in: int = 1, mem_out: int = 1
) -> CombSignature:
    """Signature of the k-th connecting channel (1-based), which routes the
    comb output 2k-1 plus the running memory into comb input 2k plus new
    memory."""
    systems = [(2 * k - 1, int(d_in)), (2 * k, int(d_out))]
    if mem_in > 1:
        systems.append((tester_wire_label(slots, k), int(mem_in)))
    if mem_out > 1:
        systems.append((tester_wire_label(slots, k + 1), int(mem_out)))
    return CombSignature(tuple(sorted(systems)), role="tester")


def povm_signature(slots: int, d_last: int, mem: int = 1) -> CombSignature:
    systems = [(2 * slots - 1, int(d_last))]
    if mem > 1:
        systems.append((tester_wire_label(slots, slots), int(mem)))
    return CombSignature(tuple(sorted(systems)), role="tester")


class Povm:
    """Measurement elements: positive operators summing to the identity.

    ``on_support=True`` relaxes the sum condition to a projector, which is
    what the canonical measurement of a rank-deficient tester produces.
    """

    def __init__(self, elements, on_support: bool = False):
        elements = list(elements)
        if not elements:
            raise SignatureMismatch("a POVM needs at least one element")
        sig = elements[0].signature
        for x, el in enumerate(elements):
            if not el.signature.same_dims(sig):
                raise SignatureMismatch(f"POVM element {x} has a different signature")
            low = min_eigenvalue(el)
            if low < PSD_FLOOR:
                raise NotPositive(
                    f"POVM element {x} has eigenvalue {low:.3e}",
                    witness=low,
                    which=x,
                )
        total = elements[0]
        for el in elements[1:]:
            total = total + el
        if on_support:
            defect = float(
                np.linalg.norm(total.matrix @ total.matrix - total.matrix)
            )
            if defect > CHAIN_TOL * max(1.0, float(np.linalg.norm(total.matrix))):
                raise NormalizationViolation(
                    f"POVM sum is not a projector (defect {defect:.3e})", level=0
                )
        else:
            defect = frobenius_distance(total, identity(sig))
            if defect > CHAIN_TOL:
                raise NormalizationViolation(
                    f"POVM elements sum to identity + {defect:.3e}", level=0
                )
        self.elements = elements
        self.on_support = bool(on_support)

    @property
    def signature(self) -> CombSignature:
        return self.elements[0].signature

    def __len__(self):
        return len(self.elements)


def tester_from_network(
    probe: HermitianOperator,
    channels: list[HermitianOperator],
    povm: Povm,
    slots: int | None = None,
) -> QuantumTester:
    """Assemble tester effects from a probe state, connecting channels, and
    a final measurement.

    The probe lives on system 0 plus (optionally) the first memory wire;
    channel k on systems {2k-1, 2k} plus its wires; the POVM on system
    2n-1 plus the last wire. Effects come out as the network's Choi with
    every open system transposed, which is exactly the operator paired
    with a comb under Tr[T_x C].
    """
    n = len(channels) + 1 if slots is None else int(slots)
    if len(channels) != n - 1:
        raise SignatureMismatch(
            f"a {n}-slot tester needs {n - 1} connecting channels, got {len(channels)}"
        )
    if 0 not in probe.signature.indices:
        raise SignatureMismatch("probe must cover system 0")
    low = min_eigenvalue(probe)
    if low < PSD_FLOOR:
        raise NotAState(f"probe has eigenvalue {low:.3e}")
    if abs(probe.trace() - 1.0) > STATE_TOL:
        raise NotAState(f"probe has trace {probe.trace():.9f}")
    for k, ch in enumerate(channels, start=1):
        out_labels = {2 * k} | (
            {tester_wire_label(n, k + 1)}
            if tester_wire_label(n, k + 1) in ch.signature.indices
            else set()
        )
        in_labels = set(ch.signature.indices) - out_labels
        if 2 * k - 1 not in in_labels or 2 * k not in out_labels:
            raise SignatureMismatch(
                f"channel {k} must route system {2 * k - 1} to {2 * k}"
            )
        traced = partial_trace(ch, out_labels)
        defect = frobenius_distance(traced, identity(ch.signature.restrict(in_labels)))
        if defect > CHANNEL_TOL:
            raise NotAChannel(
                f"connecting channel {k} is not trace preserving "
                f"(defect {defect:.3e})",
                tooth=k,
            )
    spine = probe
    for ch in channels:
        spine = link_product(spine, ch)
    effects = []
    for element in povm.elements:
        flipped = HermitianOperator(element.signature, element.matrix.T)
        net = link_product(spine, flipped)
        if net.signature.indices != tuple(range(2 * n)):
            raise SignatureMismatch(
                f"network leaves open systems {net.signature.indices}, "
                f"expected {tuple(range(2 * n))}"
            )
        effects.append(HermitianOperator(net.signature, net.matrix.T))
    return validate_tester(effects, n)


def random_tester(
    signature: CombSignature,
    memory_dims,
    outcomes: int,
    rng: np.random.Generator,
) -> QuantumTester:
    """Haar-random tester on the given signature with the given wire sizes."""
    if signature.role != "tester":
        raise SignatureMismatch("signature role must be 'tester'")
    n = signature.slots
    mem = [int(m) for m in memory_dims]
    if len(mem) != n:
        raise SignatureMismatch(f"a {n}-slot tester needs {n} wire dimensions")
    dims = signature.dims
    probe_sig = probe_signature(n, dims[0], mem[0])
    probe = HermitianOperator(
        probe_sig, sampling.random_density(probe_sig.total_dim, rng)
    )
    channels = []
    for k in range(1, n):
        d_in = dims[2 * k - 1] * mem[k - 1]
        d_out = dims[2 * k] * mem[k]
        raw = sampling.random_channel_choi(d_in, d_out, rng)
        raw_systems = [(2 * k - 1, dims[2 * k - 1])]
        if mem[k - 1] > 1:
            raw_systems.append((tester_wire_label(n, k), mem[k - 1]))
        raw_systems.append((2 * k, dims[2 * k]))
        if mem[k] > 1:
            raw_systems.append((tester_wire_label(n, k + 1), mem[k]))
        sig = crossing_channel_signature(
            n, k, dims[2 * k - 1], dims[2 * k], mem[k - 1], mem[k]
        )
        channels.append(
            HermitianOperator(sig, _reorder(raw, raw_systems, sig.systems))
        )
    pov_sig = povm_signature(n, dims[2 * n - 1], mem[n - 1])
    elements = [
        HermitianOperator(pov_sig, m)
        for m in sampling.random_povm(pov_sig.total_dim, outcomes, rng)
    ]
    return tester_from_network(probe, channels, Povm(elements), slots=n)


# -- measurement ----------------------------------------------------------


def born_probabilities(tester: QuantumTester, comb) -> np.ndarray:
    """Outcome distribution of measuring ``comb`` with ``tester``."""
    if tester.slots != comb.slots + 1:
        raise SignatureMismatch(
            f"a {tester.slots}-slot tester measures {tester.slots - 1}-slot "
            f"combs, got {comb.slots}"
        )
    if not tester.signature.same_dims(comb.signature):
        raise SignatureMismatch(
            f"tester dims {tester.signature.dims} do not pair with comb dims "
            f"{comb.signature.dims}"
        )
    probs = np.array([e.inner(comb.operator) for e in tester.effects])
    if probs.min() < -PROBABILITY_ATOL or probs.max() > 1.0 + PROBABILITY_ATOL:
        raise BadProbability(
            f"probability out of range: min {probs.min():.3e}, max {probs.max():.6f}"
        )
    if abs(probs.sum() - 1.0) > PROBABILITY_SUM_TOL:
        raise BadProbability(f"probabilities sum to {probs.sum():.12f}")
    return np.clip(probs, 0.0, 1.0)


def canonical_povm(tester: QuantumTester, tol: float = 1e-9) -> Povm:
    """The measurement the tester performs after its own normalization is
    undone: conjugate each effect by the pseudo-inverse square root of
    Xi^(n) (padded with identity on the last output)."""
    xi = tester.normalization_chain[0]
    isr = embed_identity(inv_sqrt_support(xi, tol), tester.signature)
    elements = [
        HermitianOperator(e.signature, isr.matrix @ e.matrix @ isr.matrix)
        for e in tester.effects
    ]
    return Povm(elements, on_support=True)


def mix_testers(weights, testers: list[QuantumTester]) -> QuantumTester:
    """Convex combination, effect by effect."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(testers),) or len(testers) == 0:
        raise BadProbability("weights must match the tester count")
    if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise BadProbability(f"mixing weights {w} are not a distribution")
    first = testers[0]
    for t in testers[1:]:
        if t.outcomes != first.outcomes or not t.signature.same_dims(first.signature):
            raise SignatureMismatch("mixed testers must share outcomes and signature")
        if t.slots != first.slots:
            raise SignatureMismatch("mixed testers must share the slot count")
    effects = []
    for x in range(first.outcomes):
        acc = float(w[0]) * testers[0].effects[x]
        for wk, t in zip(w[1:], testers[1:]):
            acc = acc + float(wk) * t.effects[x]
        effects.append(acc)
    return validate_tester(effects, first.slots)


# -- collections and classical processing ---------------------------------


class PostProcessing:
    """A classical channel: column-stochastic table p(out | in)."""

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise BadProbability(f"table must be a 2d array, got shape {m.shape}")
        if m.min() < -STOCHASTIC_ATOL:
            raise BadProbability(f"table has negative entry {m.min():.3e}")
        colsums = m.sum(axis=0)
        if np.max(np.abs(colsums - 1.0)) > STOCHASTIC_ATOL:
            raise BadProbability(
                f"table columns sum to {colsums} instead of one"
            )
        self.matrix = np.clip(m, 0.0, None)
        self.matrix.setflags(write=False)

    @classmethod
    def deterministic(cls, assignment, n_out: int) -> "PostProcessing":
        """Delta table sending input j to output assignment[j]."""
        m = np.zeros((int(n_out), len(assignment)))
        for j, out in enumerate(assignment):
            m[int(out), j] = 1.0
        return cls(m)

    @property
    def n_out(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_in(self) -> int:
        return self.matrix.shape[1]


class TesterCollection:
    """Testers on one signature, padded to a common outcome count.

    Padding appends zero effects, which leaves every normalization chain
    untouched; members are re-validated after padding.
    """

    def __init__(self, members: list[QuantumTester]):
        if not members:
            raise SignatureMismatch("a collection needs at least one tester")
        sig = members[0].signature
        slots = members[0].slots
        for t in members[1:]:
            if not t.signature.same_dims(sig):
                raise SignatureMismatch("collection members live on different systems")
            if t.slots != slots:
                raise SignatureMismatch("collection members disagree on slots")
        o = max(t.outcomes for t in members)
        zero = HermitianOperator(sig, np.zeros((sig.total_dim, sig.total_dim)))
        padded = []
        for t in members:
            effects = list(t.effects) + [zero] * (o - t.outcomes)
            padded.append(validate_tester(effects, slots))
        self.members = padded

    @property
    def signature(self) -> CombSignature:
        return self.members[0].signature

    @property
    def slots(self) -> int:
        return self.members[0].slots

    @property
    def outcomes(self) -> int:
        return self.members[0].outcomes

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self):
        return len(self.members)

    def chain_spread(self) -> float:
        """Largest pairwise distance between members' top chain elements."""
        tops = [t.normalization_chain[0] for t in self.members]
        worst = 0.0
        for i in range(len(tops)):
            for j in range(i + 1, len(tops)):
                worst = max(worst, frobenius_distance(tops[i], tops[j]))
        return worst

    def shared_chain_top(self) -> HermitianOperator:
        """Average of the members' Xi^(n); meaningful when chain_spread is
        within tolerance."""
        tops = [t.normalization_chain[0] for t in self.members]
        acc = tops[0] * (1.0 / len(tops))
        for t in tops[1:]:
            acc = acc + t * (1.0 / len(tops))
        return acc


def simulate_collection(
    source: TesterCollection,
    prior,
    selection: list[PostProcessing],
    relabeling: list[list[PostProcessing]],
) -> TesterCollection:
    """Classically simulate a new collection from ``source``.

    ``prior[l]`` is the probability of branch l; ``selection[l]`` maps the
    requested label beta to a source tester alpha; ``relabeling[l][beta]``
    maps the source outcome a to the reported outcome b. The simulated
    effects are T'_{b|beta} = sum_l prior[l] sum_{alpha,a}
    selection[l][alpha,beta] relabeling[l][beta][b,a] T_{a|alpha}.
    """
    p = np.asarray(prior, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise BadProbability(f"branch prior {p} is not a distribution")
    if len(selection) != p.size or len(relabeling) != p.size:
        raise BadProbability("need one selection and relabeling table per branch")
    s_out = selection[0].n_in
    o_out = relabeling[0][0].n_out
    for table in selection:
        if table.n_out != source.size or table.n_in != s_out:
            raise BadProbability("selection table shape mismatch")
    for branch in relabeling:
        if len(branch) != s_out:
            raise BadProbability("need one relabeling table per requested label")
        for table in branch:
            if table.n_in != source.outcomes or table.n_out != o_out:
                raise BadProbability("relabeling table shape mismatch")
    sig = source.signature
    side = sig.total_dim
    members = []
    for beta in range(s_out):
        effects = [np.zeros((side, side), dtype=complex) for _ in range(o_out)]
        for ell in range(p.size):
            sel = selection[ell].matrix  # (source.size, s_out)
            rel = relabeling[ell][beta].matrix  # (o_out, source.outcomes)
            for alpha in range(source.size):
                weight_branch = p[ell] * sel[alpha, beta]
                if weight_branch == 0.0:
                    continue
                for a in range(source.outcomes):
                    t = source.members[alpha].effects[a].matrix
                    for b in range(o_out):
                        w = weight_branch * rel[b, a]
                        if w != 0.0:
                            effects[b] = effects[b] + w * t
        ops = [HermitianOperator(sig, e) for e in effects]
        members.append(validate_tester(ops, source.slots))
    return TesterCollection(members)


def random_tester_collection(
    size: int,
    signature: CombSignature,
    memory_dims,
    outcomes: int,
    seed: int,
) -> TesterCollection:
    rng = np.random.default_rng(seed)
    return TesterCollection(
        [random_tester(signature, memory_dims, outcomes, rng) for _ in range(size)]
    )


def mub_pair() -> TesterCollection:
    """The sharp qubit pair measured in two unbiased bases, as single-slot
    testers with a trivial input (systems (0:1, 1:2))."""
    sig = CombSignature.tester([1, 2])
    z0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    z1 = np.array([[0.0, 0.0], [0.0, 1.0]])
    xp = np.array([[0.5, 0.5], [0.5, 0.5]])
    xm = np.array([[0.5, -0.5], [-0.5, 0.5]])
    t_z = validate_tester(
        [HermitianOperator(sig, z0), HermitianOperator(sig, z1)], 1
    )
    t_x = validate_tester(
        [HermitianOperator(sig, xp), HermitianOperator(sig, xm)], 1
    )
    return TesterCollection([t_z, t_x])
