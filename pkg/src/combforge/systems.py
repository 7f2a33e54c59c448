"""Labeled tensor factors and dense Hermitian operators on them.

Systems are labeled by non-negative integers and carry a finite dimension.
The parity of a label encodes its direction: even labels are input wires,
odd labels are output wires. Operators always store their matrix in the
canonical basis ordering where system labels increase left to right in the
Kronecker product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IndexCollision, IndexNotFound, NotPositive, SignatureMismatch
from .tolerances import HERMITICITY_RTOL, PSD_FLOOR  # noqa: F401  (re-exported)


@dataclass(frozen=True)
class CombSignature:
    """Ordered labeled system dimensions.

    ``systems`` is a tuple of ``(index, dimension)`` pairs sorted by index.
    ``role`` records what the full label set describes: a comb on systems
    ``0..2n+1`` (n slots) or a tester on systems ``0..2n-1`` (n slots).
    Partial signatures (reduced operators, chain elements) reuse the class
    with the role of the object they came from; the consecutive-label
    requirement is enforced only by the comb and tester validators.
    """

    systems: tuple[tuple[int, int], ...]
    role: str = "comb"

    def __post_init__(self):
        systems = tuple((int(i), int(d)) for i, d in self.systems)
        object.__setattr__(self, "systems", systems)
        if self.role not in ("comb", "tester"):
            raise ValueError(f"unknown role {self.role!r}")
        seen = set()
        for idx, dim in systems:
            if idx < 0:
                raise ValueError(f"system index {idx} is negative")
            if dim < 1:
                raise ValueError(f"system {idx} has dimension {dim}")
            if idx in seen:
                raise IndexCollision(f"system index {idx} appears twice")
            seen.add(idx)
        if any(systems[i][0] >= systems[i + 1][0] for i in range(len(systems) - 1)):
            raise ValueError("system indices must be strictly increasing")

    @classmethod
    def comb(cls, dims) -> "CombSignature":
        """Signature of a comb on consecutive systems ``0..len(dims)-1``."""
        dims = tuple(int(d) for d in dims)
        if len(dims) % 2 != 0 or len(dims) < 2:
            raise SignatureMismatch(
                f"a comb needs an even number >= 2 of systems, got {len(dims)}"
            )
        return cls(tuple(enumerate(dims)), role="comb")

    @classmethod
    def tester(cls, dims) -> "CombSignature":
        """Signature of a tester on consecutive systems ``0..len(dims)-1``."""
        dims = tuple(int(d) for d in dims)
        if len(dims) % 2 != 0 or len(dims) < 2:
            raise SignatureMismatch(
                f"a tester needs an even number >= 2 of systems, got {len(dims)}"
            )
        return cls(tuple(enumerate(dims)), role="tester")

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(idx for idx, _ in self.systems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.systems)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims) if self.systems else 1

    def dim_of(self, index: int) -> int:
        for idx, dim in self.systems:
            if idx == index:
                return dim
        raise IndexNotFound(f"system {index} not in signature {self.indices}")

    @property
    def is_consecutive(self) -> bool:
        return self.indices == tuple(range(len(self.systems)))

    @property
    def slots(self) -> int:
        """Slot count implied by the label set, per role.

        A comb on 2n+2 systems has n slots; a tester on 2n systems has n.
        Only meaningful for consecutive complete signatures.
        """
        if not self.is_consecutive or len(self.systems) % 2 != 0:
            raise SignatureMismatch(
                f"slot count undefined for partial signature {self.indices}"
            )
        if self.role == "comb":
            return len(self.systems) // 2 - 1
        return len(self.systems) // 2

    @property
    def input_dim(self) -> int:
        """Product of even-labeled (input) dimensions."""
        return math.prod(d for i, d in self.systems if i % 2 == 0) if self.systems else 1

    @property
    def output_dim(self) -> int:
        """Product of odd-labeled (output) dimensions."""
        return math.prod(d for i, d in self.systems if i % 2 == 1) if self.systems else 1

    def restrict(self, keep) -> "CombSignature":
        keep = set(keep)
        missing = keep - set(self.indices)
        if missing:
            raise IndexNotFound(f"systems {sorted(missing)} not in {self.indices}")
        return CombSignature(
            tuple(s for s in self.systems if s[0] in keep), role=self.role
        )

    def drop(self, remove) -> "CombSignature":
        remove = set(remove)
        missing = remove - set(self.indices)
        if missing:
            raise IndexNotFound(f"systems {sorted(missing)} not in {self.indices}")
        return CombSignature(
            tuple(s for s in self.systems if s[0] not in remove), role=self.role
        )

    def same_dims(self, other: "CombSignature") -> bool:
        return self.systems == other.systems


class HermitianOperator:
    """A Hermitian matrix together with the signature it acts on.

    The matrix is stored dense and complex, frozen after construction.
    Hermiticity is checked to relative tolerance 1e-9 at construction;
    positivity is a property of particular objects (effects, combs) and is
    checked by their validators, not here.
    """

    __slots__ = ("signature", "matrix")

    def __init__(self, signature: CombSignature, matrix):
        m = np.array(matrix, dtype=complex)
        side = signature.total_dim
        if m.shape != (side, side):
            raise SignatureMismatch(
                f"matrix shape {m.shape} does not match signature dimension {side}"
            )
        scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
        if float(np.max(np.abs(m - m.conj().T))) > HERMITICITY_RTOL * scale:
            raise ValueError("matrix is not Hermitian within tolerance")
        m = (m + m.conj().T) / 2.0
        m.setflags(write=False)
        self.signature = signature
        self.matrix = m

    # -- arithmetic; results share the signature ------------------------

    def _check_same(self, other: "HermitianOperator"):
        if not self.signature.same_dims(other.signature):
            raise SignatureMismatch(
                f"operands live on {self.signature.indices} vs "
                f"{other.signature.indices}"
            )

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        self._check_same(other)
        return HermitianOperator(self.signature, self.matrix + other.matrix)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        self._check_same(other)
        return HermitianOperator(self.signature, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "HermitianOperator":
        return HermitianOperator(self.signature, self.matrix * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "HermitianOperator":
        return HermitianOperator(self.signature, -self.matrix)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def inner(self, other: "HermitianOperator") -> float:
        """Hilbert-Schmidt inner product Tr[A B], real for Hermitian pairs."""
        self._check_same(other)
        return float(np.sum(self.matrix.conj() * other.matrix).real)

    def __repr__(self):
        return (
            f"HermitianOperator(systems={self.signature.indices}, "
            f"dims={self.signature.dims})"
        )


def identity(signature: CombSignature) -> HermitianOperator:
    return HermitianOperator(signature, np.eye(signature.total_dim))


def scalar_operator(value: float, role: str = "comb") -> HermitianOperator:
    """Operator on the empty signature; the terminal element of chains."""
    return HermitianOperator(CombSignature((), role=role), [[float(value)]])


def frobenius_distance(a: HermitianOperator, b: HermitianOperator) -> float:
    a._check_same(b)
    return float(np.linalg.norm(a.matrix - b.matrix))


# -- axis bookkeeping ----------------------------------------------------


def _tensor_view(op: HermitianOperator) -> np.ndarray:
    dims = op.signature.dims
    return op.matrix.reshape(dims + dims) if dims else op.matrix.reshape(())


def _reorder(matrix: np.ndarray, src_systems, dst_systems) -> np.ndarray:
    """Permute an operator from kron order ``src_systems`` to ``dst_systems``."""
    if tuple(src_systems) == tuple(dst_systems):
        return matrix
    src_dims = tuple(d for _, d in src_systems)
    side = math.prod(src_dims) if src_dims else 1
    t = matrix.reshape(src_dims + src_dims)
    pos = {idx: k for k, (idx, _) in enumerate(src_systems)}
    perm = [pos[idx] for idx, _ in dst_systems]
    n = len(src_systems)
    t = t.transpose(perm + [p + n for p in perm])
    return t.reshape(side, side)


def kron_compose(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Tensor two operators on disjoint label sets; output order is by index."""
    shared = set(a.signature.indices) & set(b.signature.indices)
    if shared:
        raise IndexCollision(f"operands share system indices {sorted(shared)}")
    combined = a.signature.systems + b.signature.systems
    out_sig = CombSignature(
        tuple(sorted(combined)), role=a.signature.role
    )
    raw = np.kron(a.matrix, b.matrix)
    return HermitianOperator(out_sig, _reorder(raw, combined, out_sig.systems))


def partial_trace(op: HermitianOperator, traced) -> HermitianOperator:
    """Trace out the listed system indices."""
    traced = set(traced)
    missing = traced - set(op.signature.indices)
    if missing:
        raise IndexNotFound(
            f"cannot trace systems {sorted(missing)}; have {op.signature.indices}"
        )
    if not traced:
        return op
    keep_sig = op.signature.drop(traced)
    n = len(op.signature.systems)
    t = _tensor_view(op)
    # einsum with repeated letters on the traced row/column axis pairs
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise SignatureMismatch("too many systems for dense partial trace")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    out_row, out_col = [], []
    for k, (idx, _) in enumerate(op.signature.systems):
        if idx in traced:
            col[k] = row[k]
        else:
            out_row.append(row[k])
            out_col.append(col[k])
    spec = "".join(row + col) + "->" + "".join(out_row + out_col)
    side = keep_sig.total_dim
    reduced = np.einsum(spec, t).reshape(side, side)
    return HermitianOperator(keep_sig, reduced)


def embed_identity(op: HermitianOperator, full: CombSignature) -> HermitianOperator:
    """Tensor ``op`` with identity on the systems of ``full`` it does not cover."""
    have = dict(op.signature.systems)
    for idx, dim in full.systems:
        if idx in have and have[idx] != dim:
            raise SignatureMismatch(
                f"system {idx} has dimension {have[idx]} in the operand "
                f"but {dim} in the target"
            )
    extra = [s for s in full.systems if s[0] not in have]
    stray = set(have) - set(full.indices)
    if stray:
        raise SignatureMismatch(
            f"operand systems {sorted(stray)} are absent from the target"
        )
    if not extra:
        return HermitianOperator(full, op.matrix)
    eye = HermitianOperator(
        CombSignature(tuple(extra), role=full.role),
        np.eye(math.prod(d for _, d in extra)),
    )
    out = kron_compose(op, eye)
    return HermitianOperator(full, out.matrix)


def partial_transpose(op: HermitianOperator, systems) -> np.ndarray:
    """Transpose the listed tensor factors; returns a bare ndarray since the
    result of a partial transpose need not be Hermitian-symmetric in any
    useful sense for our callers (it feeds straight into contractions)."""
    systems = set(systems)
    missing = systems - set(op.signature.indices)
    if missing:
        raise IndexNotFound(f"systems {sorted(missing)} not in {op.signature.indices}")
    n = len(op.signature.systems)
    t = _tensor_view(op)
    perm = list(range(2 * n))
    for k, (idx, _) in enumerate(op.signature.systems):
        if idx in systems:
            perm[k], perm[k + n] = perm[k + n], perm[k]
    side = op.signature.total_dim
    return t.transpose(perm).reshape(side, side)


def link_product(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Contract two network elements over their shared systems.

    Computes Tr_shared[(A partially transposed on the shared systems) B]
    with both operands embedded into the union label set. The result lives
    on the symmetric difference of the label sets. For disjoint labels this
    reduces to the ordered tensor product.
    """
    a_idx, b_idx = set(a.signature.indices), set(b.signature.indices)
    shared = a_idx & b_idx
    for idx in shared:
        if a.signature.dim_of(idx) != b.signature.dim_of(idx):
            raise SignatureMismatch(
                f"shared system {idx} has mismatched dimensions "
                f"{a.signature.dim_of(idx)} vs {b.signature.dim_of(idx)}"
            )
    union_systems = sorted(set(a.signature.systems) | set(b.signature.systems))
    union = CombSignature(tuple(union_systems), role=a.signature.role)
    a_t = np.asarray(partial_transpose(a, shared)) if shared else a.matrix
    a_full = _embed_raw(a_t, a.signature, union)
    b_full = _embed_raw(b.matrix, b.signature, union)
    prod = a_full @ b_full
    if not shared:
        out, out_sig = prod, union
    else:
        out_sig = union.drop(shared)
        out = _trace_raw(prod, union, shared)
    return HermitianOperator(out_sig, (out + out.conj().T) / 2.0)


def _embed_raw(matrix: np.ndarray, sig: CombSignature, full: CombSignature) -> np.ndarray:
    """Identity embedding for a bare matrix (no hermiticity requirement)."""
    extra = [s for s in full.systems if s[0] not in set(sig.indices)]
    if not extra:
        return matrix
    combined = sig.systems + tuple(extra)
    raw = np.kron(matrix, np.eye(math.prod(d for _, d in extra)))
    return _reorder(raw, combined, full.systems)


def _trace_raw(matrix: np.ndarray, sig: CombSignature, traced) -> np.ndarray:
    traced = set(traced)
    n = len(sig.systems)
    dims = sig.dims
    t = matrix.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    out_row, out_col = [], []
    for k, (idx, _) in enumerate(sig.systems):
        if idx in traced:
            col[k] = row[k]
        else:
            out_row.append(row[k])
            out_col.append(col[k])
    spec = "".join(row + col) + "->" + "".join(out_row + out_col)
    side = sig.drop(traced).total_dim
    return np.einsum(spec, t).reshape(side, side)


def min_eigenvalue(op: HermitianOperator) -> float:
    return float(np.linalg.eigvalsh(op.matrix)[0])


def inv_sqrt_support(op: HermitianOperator, tol: float = 1e-9) -> HermitianOperator:
    """Inverse square root on the support; kernel directions map to zero.

    Raises NotPositive if any eigenvalue is below ``-tol``.
    """
    vals, vecs = np.linalg.eigh(op.matrix)
    if vals[0] < -tol:
        raise NotPositive(
            f"operator has eigenvalue {vals[0]:.3e} below -{tol:.1e}",
            witness=float(vals[0]),
        )
    inv = np.where(vals > tol, 1.0 / np.sqrt(np.maximum(vals, tol)), 0.0)
    return HermitianOperator(op.signature, (vecs * inv) @ vecs.conj().T)


def support_projector(op: HermitianOperator, tol: float = 1e-9) -> HermitianOperator:
    vals, vecs = np.linalg.eigh(op.matrix)
    mask = (vals > tol).astype(float)
    return HermitianOperator(op.signature, (vecs * mask) @ vecs.conj().T)
