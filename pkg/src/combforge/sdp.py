"""Semidefinite programs over complex Hermitian blocks.

Variables are Hermitian PSD matrices. Linear maps between Hermitian spaces
are stored as real matrices in an orthonormal Hermitian basis, so arbitrary
completely-positive-free algebra (partial traces, embeddings, reshuffles)
enters through plain callables. Problems are lowered to a real symmetric
standard form through the [[Re, -Im], [Im, Re]] embedding and handed to a
backend solver; the default backend is the dense interior point method in
:mod:`combforge.ipm`.

Dual information is mapped back to the complex level: every constraint gets
a Hermitian multiplier, and multipliers of ``>=`` constraints are positive
semidefinite. All duals follow the minimization-form convention, i.e. for a
``max`` objective they certify the negated problem; values and the reported
bounds are sense-corrected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np

from .errors import CapExceeded, SolverFailure
from .ipm import ConeLayout, IpmResult, solve_standard_form

# the dense standard form is the solver's real size limit: refuse to
# materialize a constraint matrix beyond this many bytes
MAX_STANDARD_FORM_BYTES = 2**30

__all__ = [
    "LinearMap",
    "MatrixConstraint",
    "SdpProblem",
    "SdpSolution",
    "FeasibilityReport",
    "SdpBackend",
    "DenseIpmBackend",
    "hbasis",
    "hvec",
    "hmat",
    "solve_sdp",
    "check_feasibility",
]


@lru_cache(maxsize=None)
def hbasis(side: int) -> np.ndarray:
    """Orthonormal basis of the side x side Hermitian matrices.

    Ordered as: for i <= j, the diagonal unit E_ii, then the symmetric and
    antisymmetric combinations of E_ij and E_ji. Returned read-only with
    shape (side**2, side, side).
    """
    mats = np.zeros((side * side, side, side), dtype=complex)
    k = 0
    inv = 1.0 / np.sqrt(2.0)
    for i in range(side):
        for j in range(i, side):
            if i == j:
                mats[k, i, i] = 1.0
                k += 1
            else:
                mats[k, i, j] = inv
                mats[k, j, i] = inv
                k += 1
                mats[k, i, j] = 1j * inv
                mats[k, j, i] = -1j * inv
                k += 1
    mats.flags.writeable = False
    return mats


def hvec(matrix: np.ndarray) -> np.ndarray:
    """Coordinates of a Hermitian matrix in the hbasis, a real vector."""
    side = matrix.shape[0]
    return np.einsum("kij,ij->k", hbasis(side).conj(), matrix).real


def hmat(coords: np.ndarray, side: int) -> np.ndarray:
    """Inverse of :func:`hvec`."""
    return np.einsum("k,kij->ij", np.asarray(coords, dtype=float), hbasis(side))


def _embed(mats: np.ndarray) -> np.ndarray:
    """Batched [[Re, -Im], [Im, Re]] embedding, (..., d, d) -> (..., 2d, 2d)."""
    d = mats.shape[-1]
    out = np.zeros(mats.shape[:-2] + (2 * d, 2 * d))
    re, im = mats.real, mats.imag
    out[..., :d, :d] = re
    out[..., :d, d:] = -im
    out[..., d:, :d] = im
    out[..., d:, d:] = re
    return out


def _unembed(mat: np.ndarray) -> np.ndarray:
    """Complex matrix whose embedding is the J-invariant part of ``mat``."""
    d = mat.shape[-1] // 2
    re = 0.5 * (mat[..., :d, :d] + mat[..., d:, d:])
    im = 0.5 * (mat[..., d:, :d] - mat[..., :d, d:])
    return re + 1j * im


@lru_cache(maxsize=None)
def _tril_cache(side: int):
    i, j = np.tril_indices(side)
    scale = np.where(i == j, 1.0, np.sqrt(2.0))
    return i, j, scale


def _svec_batch(mats: np.ndarray) -> np.ndarray:
    i, j, scale = _tril_cache(mats.shape[-1])
    return mats[..., i, j] * scale


def _smat(vec: np.ndarray, side: int) -> np.ndarray:
    i, j, scale = _tril_cache(side)
    out = np.zeros((side, side))
    out[i, j] = vec / scale
    out[j, i] = out[i, j]
    return out


class LinearMap:
    """Real-linear map between Hermitian spaces, in hbasis coordinates."""

    __slots__ = ("src_side", "dst_side", "matrix")

    def __init__(self, src_side: int, dst_side: int, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (dst_side * dst_side, src_side * src_side):
            raise ValueError(
                f"map matrix has shape {matrix.shape}, expected "
                f"({dst_side * dst_side}, {src_side * src_side})"
            )
        self.src_side = src_side
        self.dst_side = dst_side
        self.matrix = matrix

    @classmethod
    def identity(cls, side: int, factor: float = 1.0) -> LinearMap:
        return cls(side, side, np.eye(side * side) * factor)

    @classmethod
    def from_callable(
        cls, fn: Callable[[np.ndarray], np.ndarray], src_side: int, dst_side: int
    ) -> LinearMap:
        """Sample ``fn`` on the Hermitian basis. ``fn`` maps matrices to
        matrices and must be real-linear and Hermiticity preserving."""
        basis = hbasis(src_side)
        cols = np.empty((dst_side * dst_side, src_side * src_side))
        for k in range(src_side * src_side):
            out = np.asarray(fn(basis[k]), dtype=complex)
            if out.shape != (dst_side, dst_side):
                raise ValueError(
                    f"callable returned shape {out.shape}, expected "
                    f"({dst_side}, {dst_side})"
                )
            cols[:, k] = hvec(out)
        return cls(src_side, dst_side, cols)

    def scaled(self, factor: float) -> LinearMap:
        return LinearMap(self.src_side, self.dst_side, self.matrix * factor)

    def __neg__(self) -> LinearMap:
        return self.scaled(-1.0)

    def __add__(self, other: LinearMap) -> LinearMap:
        if (self.src_side, self.dst_side) != (other.src_side, other.dst_side):
            raise ValueError("cannot add maps with different spaces")
        return LinearMap(self.src_side, self.dst_side, self.matrix + other.matrix)

    def compose(self, inner: LinearMap) -> LinearMap:
        """self after inner."""
        if inner.dst_side != self.src_side:
            raise ValueError("composition spaces do not match")
        return LinearMap(inner.src_side, self.dst_side, self.matrix @ inner.matrix)

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(
            np.einsum(
                "k,kij->ij", self.matrix @ hvec(matrix), hbasis(self.dst_side)
            )
        )

    def adjoint_apply(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(
            np.einsum(
                "k,kij->ij", self.matrix.T @ hvec(matrix), hbasis(self.src_side)
            )
        )


@dataclass
class MatrixConstraint:
    """sum_b terms[b](X_b)  (== | >=)  rhs, as Hermitian matrices."""

    terms: dict[str, LinearMap]
    rhs: np.ndarray
    kind: str  # "eq" or "geq"
    name: str = ""

    @property
    def side(self) -> int:
        return self.rhs.shape[0]


@dataclass
class _StandardForm:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    groups: list[tuple[int, int]]
    columns: dict[str, tuple[slice, int]]  # name -> (cols, complex side)
    user_blocks: list[str]
    slack_names: list[str]
    row_slices: list[slice]
    sign: float
    constant: float


class SdpProblem:
    """A block-structured Hermitian SDP."""

    def __init__(self) -> None:
        self.block_sides: dict[str, int] = {}
        self.block_order: list[str] = []
        self.constraints: list[MatrixConstraint] = []
        self.sense: str = "min"
        self.objective_terms: dict[str, np.ndarray] = {}
        self.objective_constant: float = 0.0

    def add_block(self, name: str, side: int) -> str:
        if name in self.block_sides:
            raise ValueError(f"block {name!r} already declared")
        if side < 1:
            raise ValueError("block side must be positive")
        self.block_sides[name] = side
        self.block_order.append(name)
        return name

    def _check_terms(self, terms: dict[str, LinearMap], side: int) -> None:
        if not terms:
            raise ValueError("constraint needs at least one term")
        for name, lin in terms.items():
            if name not in self.block_sides:
                raise ValueError(f"unknown block {name!r}")
            if lin.src_side != self.block_sides[name]:
                raise ValueError(
                    f"map for block {name!r} expects side {lin.src_side}, "
                    f"block has side {self.block_sides[name]}"
                )
            if lin.dst_side != side:
                raise ValueError(
                    f"map for block {name!r} targets side {lin.dst_side}, "
                    f"constraint has side {side}"
                )

    def _add(self, terms, rhs, kind, name):
        rhs = np.asarray(rhs, dtype=complex)
        if rhs.ndim == 0:
            rhs = rhs.reshape(1, 1)
        if rhs.ndim != 2 or rhs.shape[0] != rhs.shape[1]:
            raise ValueError("constraint right-hand side must be square")
        if np.abs(rhs - rhs.conj().T).max() > 1e-9 * (1.0 + np.abs(rhs).max()):
            raise ValueError("constraint right-hand side must be Hermitian")
        rhs = 0.5 * (rhs + rhs.conj().T)
        self._check_terms(terms, rhs.shape[0])
        self.constraints.append(MatrixConstraint(dict(terms), rhs, kind, name))

    def add_equality(self, terms: dict[str, LinearMap], rhs, name: str = "") -> None:
        self._add(terms, rhs, "eq", name)

    def add_inequality(self, terms: dict[str, LinearMap], rhs, name: str = "") -> None:
        """sum of terms >= rhs in the semidefinite order."""
        self._add(terms, rhs, "geq", name)

    def set_objective(
        self, sense: str, terms: dict[str, np.ndarray], constant: float = 0.0
    ) -> None:
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        clean: dict[str, np.ndarray] = {}
        for name, coeff in terms.items():
            if name not in self.block_sides:
                raise ValueError(f"unknown block {name!r}")
            coeff = np.asarray(coeff, dtype=complex)
            side = self.block_sides[name]
            if coeff.shape != (side, side):
                raise ValueError(f"objective matrix for {name!r} has wrong shape")
            clean[name] = 0.5 * (coeff + coeff.conj().T)
        self.sense = sense
        self.objective_terms = clean
        self.objective_constant = float(constant)

    # lowering -----------------------------------------------------------

    def standard_form(self) -> _StandardForm:
        sides: dict[str, int] = dict(self.block_sides)
        names = list(self.block_order)
        slack_names: list[str] = []
        for idx, con in enumerate(self.constraints):
            if con.kind == "geq":
                sl = f"__slack_{idx}"
                sides[sl] = con.side
                names.append(sl)
                slack_names.append(sl)
            else:
                slack_names.append("")

        # group blocks of equal embedded side, first appearance order
        group_sides: list[int] = []
        members: dict[int, list[str]] = {}
        for name in names:
            s = sides[name]
            if s not in members:
                members[s] = []
                group_sides.append(s)
            members[s].append(name)

        groups: list[tuple[int, int]] = []
        columns: dict[str, tuple[slice, int]] = {}
        pos = 0
        for s in group_sides:
            emb = 2 * s
            sd = emb * (emb + 1) // 2
            groups.append((emb, len(members[s])))
            for name in members[s]:
                columns[name] = (slice(pos, pos + sd), s)
                pos += sd
        total = pos

        n_rows = sum(con.side * con.side for con in self.constraints)
        footprint = 8 * n_rows * total
        if footprint > MAX_STANDARD_FORM_BYTES:
            raise CapExceeded(
                f"dense standard form needs {footprint / 2**30:.1f} GiB "
                f"({n_rows} rows x {total} columns); the problem is too "
                f"large for the dense solver"
            )
        A = np.zeros((n_rows, total))
        b = np.empty(n_rows)
        row_slices: list[slice] = []
        row = 0
        for idx, con in enumerate(self.constraints):
            t = con.side
            rows = slice(row, row + t * t)
            row_slices.append(rows)
            b[rows] = hvec(con.rhs)
            for name, lin in con.terms.items():
                cols = columns[name][0]
                funcs = np.einsum(
                    "kj,jab->kab", lin.matrix, hbasis(lin.src_side)
                )
                A[rows, cols] += 0.5 * _svec_batch(_embed(funcs))
            if con.kind == "geq":
                cols = columns[slack_names[idx]][0]
                A[rows, cols] = -0.5 * _svec_batch(_embed(hbasis(t)))
            row += t * t

        sign = 1.0 if self.sense == "min" else -1.0
        c = np.zeros(total)
        for name, coeff in self.objective_terms.items():
            cols = columns[name][0]
            c[cols] = sign * 0.5 * _svec_batch(_embed(coeff[None])[0])

        return _StandardForm(
            A,
            b,
            c,
            groups,
            columns,
            list(self.block_order),
            slack_names,
            row_slices,
            sign,
            self.objective_constant,
        )


@dataclass
class SdpSolution:
    status: str
    value: float
    dual_value: float
    gap: float
    iterations: int
    blocks: dict[str, np.ndarray]
    duals: list[np.ndarray]
    dual_slacks: dict[str, np.ndarray]
    diagnostics: dict = field(default_factory=dict)


class SdpBackend(Protocol):
    def solve(self, A, b, c, groups, **options) -> IpmResult: ...


class DenseIpmBackend:
    def solve(self, A, b, c, groups, **options) -> IpmResult:
        return solve_standard_form(A, b, c, groups, **options)


def _extract_blocks(form: _StandardForm, x: np.ndarray, names) -> dict[str, np.ndarray]:
    out = {}
    for name in names:
        cols, side = form.columns[name]
        out[name] = _unembed(_smat(x[cols], 2 * side))
    return out


def solve_sdp(
    problem: SdpProblem,
    backend: SdpBackend | None = None,
    **options,
) -> SdpSolution:
    """Solve the problem, returning sense-corrected values and complex duals.

    Raises :class:`SolverFailure` when the backend cannot reach an optimal,
    infeasible or unbounded verdict.
    """
    backend = backend or DenseIpmBackend()
    form = problem.standard_form()
    res = backend.solve(form.A, form.b, form.c, form.groups, **options)

    diagnostics = {
        "ipm_status": res.status,
        "iterations": res.iterations,
        "primal_infeasibility": res.primal_infeasibility,
        "dual_infeasibility": res.dual_infeasibility,
        "relative_gap": res.relative_gap,
        "message": res.message,
    }
    if res.status == "numerical_failure":
        raise SolverFailure(diagnostics)

    if res.status != "optimal":
        duals = []
        if res.status == "infeasible" and res.certificate is not None:
            ray = res.certificate.get("ray")
            if ray is not None:
                duals = [
                    hmat(_dual_rows(form, ray, k), con.side)
                    for k, con in enumerate(problem.constraints)
                ]
                diagnostics["certificate"] = res.certificate
        return SdpSolution(
            res.status,
            np.nan,
            np.nan,
            np.inf,
            res.iterations,
            {},
            duals,
            {},
            diagnostics,
        )

    blocks = _extract_blocks(form, res.x, form.user_blocks)
    dual_slacks = _extract_blocks(form, res.z, form.user_blocks)
    for name in dual_slacks:
        dual_slacks[name] = 2.0 * dual_slacks[name]

    duals = []
    for k, con in enumerate(problem.constraints):
        if con.kind == "geq":
            sl = form.slack_names[k]
            cols, side = form.columns[sl]
            duals.append(2.0 * _unembed(_smat(res.z[cols], 2 * side)))
        else:
            duals.append(hmat(_dual_rows(form, res.y, k), con.side))

    value = form.sign * res.primal_objective + form.constant
    dual_value = form.sign * res.dual_objective + form.constant
    gap = abs(value - dual_value) / (1.0 + max(abs(value), abs(dual_value)))
    return SdpSolution(
        "optimal",
        value,
        dual_value,
        gap,
        res.iterations,
        blocks,
        duals,
        dual_slacks,
        diagnostics,
    )


def _dual_rows(form: _StandardForm, y: np.ndarray, k: int) -> np.ndarray:
    return y[form.row_slices[k]]


@dataclass
class FeasibilityReport:
    feasible: bool | None
    strict: bool
    margin: float
    attainment: float | None
    witness: dict[str, np.ndarray] | None
    certificate: dict | None
    message: str


def check_feasibility(
    problem: SdpProblem,
    backend: SdpBackend | None = None,
    *,
    cap: float = 1.0,
    tol: float = 1e-7,
    **options,
) -> FeasibilityReport:
    """Decide feasibility of the constraint system of ``problem``.

    Two phases. The margin phase maximizes t (up to ``cap``) such that
    shifting every block by t keeps the affine system solvable with blocks
    >= t; a margin above ``tol`` certifies strict feasibility, a margin
    below ``-tol`` certifies infeasibility. In the borderline band an
    attainment phase decides whether the boundary is reached.
    """
    backend = backend or DenseIpmBackend()
    form = problem.standard_form()
    cone = ConeLayout(form.groups)
    e = cone.identity_vec()
    ae = form.A @ e
    n = form.A.shape[1]

    # margin phase: x = x' + (cap - u) e, minimize u >= 0
    A1 = np.hstack([form.A, -ae[:, None]])
    b1 = form.b - cap * ae
    c1 = np.zeros(n + 1)
    c1[-1] = 1.0
    groups1 = form.groups + [(1, 1)]
    res1 = backend.solve(A1, b1, c1, groups1, **options)
    if res1.status == "infeasible":
        return FeasibilityReport(
            False,
            False,
            -np.inf,
            None,
            None,
            res1.certificate,
            "affine system inconsistent",
        )
    if res1.status != "optimal":
        raise SolverFailure(
            {
                "phase": "margin",
                "ipm_status": res1.status,
                "message": res1.message,
                "iterations": res1.iterations,
            }
        )
    u_star = res1.x[-1]
    t_star = cap - u_star

    if t_star > tol:
        x_full = res1.x[:n] + t_star * e
        witness = _extract_blocks(form, x_full, form.user_blocks)
        return FeasibilityReport(
            True,
            True,
            t_star,
            None,
            witness,
            None,
            f"strictly feasible, margin {t_star:.3e}",
        )
    if t_star < -tol:
        y = res1.y
        cert = {
            "ray": y,
            "objective": float(form.b @ y),
        }
        return FeasibilityReport(
            False,
            False,
            t_star,
            None,
            None,
            cert,
            f"infeasible, margin {t_star:.3e}",
        )

    # attainment phase: A x + u r0 = b with r0 = b - A e, interior at (e, 1)
    r0 = form.b - ae
    A2 = np.hstack([form.A, r0[:, None]])
    c2 = np.zeros(n + 1)
    c2[-1] = 1.0
    res2 = backend.solve(A2, form.b, c2, form.groups + [(1, 1)], **options)
    if res2.status != "optimal":
        raise SolverFailure(
            {
                "phase": "attainment",
                "ipm_status": res2.status,
                "message": res2.message,
                "iterations": res2.iterations,
            }
        )
    u_att = res2.x[-1]
    if u_att <= tol:
        witness = _extract_blocks(form, res2.x[:n], form.user_blocks)
        return FeasibilityReport(
            True,
            False,
            t_star,
            u_att,
            witness,
            None,
            f"feasible on the boundary, attainment gap {u_att:.3e}",
        )
    if u_att > 10.0 * tol:
        return FeasibilityReport(
            False,
            False,
            t_star,
            u_att,
            None,
            None,
            f"infeasible, attainment gap {u_att:.3e}",
        )
    return FeasibilityReport(
        None,
        False,
        t_star,
        u_att,
        None,
        None,
        f"undecided, margin {t_star:.3e}, attainment gap {u_att:.3e}",
    )
