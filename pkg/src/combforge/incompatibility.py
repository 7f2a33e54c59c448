"""Compatibility of tester collections and its convex quantifiers.

A collection {T_{a|alpha}} is compatible when a single parent tester
produces every member by classical post-processing of its outcome. For
finitely many members it suffices to search over parents labeled by
deterministic assignment vectors (one outcome per setting), which turns
compatibility into a semidefinite feasibility problem and yields two
natural quantifiers:

* the robustness: how much admixture of an arbitrary noise collection is
  needed before the collection becomes compatible, and
* the convex weight: the largest probability mass a compatible collection
  can carry in a convex split of the given one.

Both optimal values come with dual certificates, the building blocks of
the operational advantages in :mod:`combforge.games`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, DegenerateRobustness, SolverFailure
from .sdp import LinearMap, SdpProblem, check_feasibility, solve_sdp
from .systems import HermitianOperator
from .testers import (
    PostProcessing,
    QuantumTester,
    TesterCollection,
    validate_tester,
)
from .tolerances import CHAIN_TOL, SDP_FEAS_TOL

__all__ = [
    "DEFAULT_ASSIGNMENT_CAP",
    "deterministic_assignments",
    "CompatibilityReport",
    "RobustnessCertificate",
    "WeightCertificate",
    "NoiseDecomposition",
    "is_compatible_collection",
    "robustness",
    "reconstruct_noise_testers",
    "convex_weight",
]

DEFAULT_ASSIGNMENT_CAP = 64


def deterministic_assignments(
    settings: int, outcomes: int, cap: int = DEFAULT_ASSIGNMENT_CAP
) -> list[tuple[int, ...]]:
    """All maps from settings to outcomes, in lexicographic order."""
    total = outcomes**settings
    if total > cap:
        raise CapExceeded(
            f"{total} deterministic assignments ({outcomes}^{settings}) "
            f"exceed the cap {cap}"
        )
    return list(itertools.product(range(outcomes), repeat=settings))


def _trace_last(keep: int, last: int):
    def fn(m):
        return np.trace(m.reshape(keep, last, keep, last), axis1=1, axis2=3)

    return fn


def _kron_last(last: int):
    eye = np.eye(last)

    def fn(m):
        return np.kron(m, eye)

    return fn


def _chain_sides(dims: tuple[int, ...]) -> list[int]:
    """Side of each normalization level, bottom (k=1) to top (k=n)."""
    n = len(dims) // 2
    return [int(math.prod(dims[: 2 * k - 1])) for k in range(1, n + 1)]


def _add_parent_structure(
    problem: SdpProblem,
    dims: tuple[int, ...],
    n_parents: int,
) -> None:
    """PSD parent blocks q0.. plus a shared normalization chain.

    Adds the constraint sum_i q_i = identity (x) chain_n and the tower
    linking chain_k to chain_{k-1} by a partial trace; chain_1 lives on
    the first system and its trace is the overall scale of the parent.
    """
    n = len(dims) // 2
    sides = _chain_sides(dims)
    big = int(math.prod(dims))
    for i in range(n_parents):
        problem.add_block(f"q{i}", big)
    for k in range(1, n + 1):
        problem.add_block(f"chain{k}", sides[k - 1])

    terms: dict[str, LinearMap] = {
        f"q{i}": LinearMap.identity(big) for i in range(n_parents)
    }
    terms[f"chain{n}"] = -LinearMap.from_callable(
        _kron_last(dims[-1]), sides[n - 1], big
    )
    problem.add_equality(terms, np.zeros((big, big)), name="parent_normalization")

    for k in range(n, 1, -1):
        traced = dims[2 * k - 2]
        keep = sides[k - 1] // traced
        tr = LinearMap.from_callable(_trace_last(keep, traced), sides[k - 1], keep)
        emb = LinearMap.from_callable(
            _kron_last(dims[2 * k - 3]), sides[k - 2], keep
        )
        problem.add_equality(
            {f"chain{k}": tr, f"chain{k - 1}": -emb},
            np.zeros((keep, keep)),
            name=f"chain_level_{k}",
        )


def _marginal_terms(
    assignments: list[tuple[int, ...]], alpha: int, a: int, side: int, sign: float
) -> dict[str, LinearMap]:
    ident = LinearMap.identity(side, sign)
    return {
        f"q{i}": ident
        for i, vec in enumerate(assignments)
        if vec[alpha] == a
    }


def _collection_data(collection: TesterCollection, cap: int):
    members = collection.members
    settings = len(members)
    outcomes = members[0].outcomes
    dims = members[0].signature.dims
    assignments = deterministic_assignments(settings, outcomes, cap)
    effects = [
        [members[alpha].effects[a].matrix for a in range(outcomes)]
        for alpha in range(settings)
    ]
    return settings, outcomes, dims, assignments, effects


@dataclass
class CompatibilityReport:
    compatible: bool | None
    margin: float
    parent: QuantumTester | None
    post_processings: list[PostProcessing] | None
    assignments: list[tuple[int, ...]]
    message: str


def _deterministic_tables(
    assignments: list[tuple[int, ...]], settings: int, outcomes: int
) -> list[PostProcessing]:
    tables = []
    for alpha in range(settings):
        mat = np.zeros((outcomes, len(assignments)))
        for i, vec in enumerate(assignments):
            mat[vec[alpha], i] = 1.0
        tables.append(PostProcessing(mat))
    return tables


def is_compatible_collection(
    collection: TesterCollection,
    *,
    cap: int = DEFAULT_ASSIGNMENT_CAP,
    tol: float = SDP_FEAS_TOL,
    **solver_options,
) -> CompatibilityReport:
    """Decide whether one parent tester reproduces the whole collection.

    First the normalization chains of the members must agree: a parent
    forces every member to sum to the same identity (x) chain operator.
    Then existence of positive parent effects with the prescribed
    marginals is a semidefinite feasibility problem over deterministic
    assignments.
    """
    spread = collection.chain_spread()
    if spread > CHAIN_TOL:
        return CompatibilityReport(
            False,
            -np.inf,
            None,
            None,
            [],
            f"members do not share one normalization chain "
            f"(spread {spread:.3e})",
        )

    settings, outcomes, dims, assignments, effects = _collection_data(
        collection, cap
    )
    big = int(math.prod(dims))
    problem = SdpProblem()
    for i in range(len(assignments)):
        problem.add_block(f"q{i}", big)
    for alpha in range(settings):
        for a in range(outcomes):
            problem.add_equality(
                _marginal_terms(assignments, alpha, a, big, 1.0),
                effects[alpha][a],
                name=f"marginal_{alpha}_{a}",
            )

    report = check_feasibility(problem, tol=max(tol, 1e-9), **solver_options)
    if report.feasible is None:
        return CompatibilityReport(
            None, report.margin, None, None, assignments, report.message
        )
    if not report.feasible:
        return CompatibilityReport(
            False, report.margin, None, None, assignments, report.message
        )

    signature = collection.members[0].signature
    parent_effects = []
    for i in range(len(assignments)):
        mat = report.witness[f"q{i}"]
        mat = 0.5 * (mat + mat.conj().T)
        w, v = np.linalg.eigh(mat)
        mat = (v * np.maximum(w, 0.0)) @ v.conj().T
        parent_effects.append(HermitianOperator(signature, mat))
    message = report.message
    try:
        parent = validate_tester(parent_effects, collection.members[0].slots)
    except Exception as exc:  # verdict stands on the feasibility phases
        parent = None
        message = f"{message}; parent cleanup failed validation: {exc}"
    tables = _deterministic_tables(assignments, settings, outcomes)
    return CompatibilityReport(
        True, report.margin, parent, tables, assignments, message
    )


@dataclass
class RobustnessCertificate:
    value: float
    scale: float
    dims: tuple[int, ...]
    parent_effects: list[np.ndarray]
    chain: list[np.ndarray]
    dual_effects: dict[tuple[int, int], np.ndarray]
    dual_value: float
    gap: float
    assignments: list[tuple[int, ...]]
    diagnostics: dict = field(default_factory=dict)


def robustness(
    collection: TesterCollection,
    *,
    cap: int = DEFAULT_ASSIGNMENT_CAP,
    **solver_options,
) -> RobustnessCertificate:
    """Generalized incompatibility robustness with dual certificate.

    Minimizes the scale s of a parent whose marginals dominate every
    effect; the optimal mixture (T + R N) / (1 + R) with R = s - 1 is
    compatible, and the dual effects certify optimality through
    sum Tr[omega T] = 1 + R.
    """
    settings, outcomes, dims, assignments, effects = _collection_data(
        collection, cap
    )
    n = len(dims) // 2
    big = int(math.prod(dims))
    problem = SdpProblem()
    _add_parent_structure(problem, dims, len(assignments))
    lmi_index: dict[tuple[int, int], int] = {}
    for alpha in range(settings):
        for a in range(outcomes):
            lmi_index[(alpha, a)] = len(problem.constraints)
            problem.add_inequality(
                _marginal_terms(assignments, alpha, a, big, 1.0),
                effects[alpha][a],
                name=f"dominates_{alpha}_{a}",
            )
    problem.set_objective("min", {"chain1": np.eye(dims[0])})
    sol = solve_sdp(problem, **solver_options)
    if sol.status != "optimal":
        raise SolverFailure(
            {"stage": "robustness", "status": sol.status, **sol.diagnostics}
        )

    duals = {
        key: sol.duals[idx] for key, idx in lmi_index.items()
    }
    return RobustnessCertificate(
        value=sol.value - 1.0,
        scale=sol.value,
        dims=tuple(dims),
        parent_effects=[sol.blocks[f"q{i}"] for i in range(len(assignments))],
        chain=[sol.blocks[f"chain{k}"] for k in range(n, 0, -1)],
        dual_effects=duals,
        dual_value=sol.dual_value,
        gap=sol.gap,
        assignments=assignments,
        diagnostics=sol.diagnostics,
    )


@dataclass
class NoiseDecomposition:
    noise: TesterCollection
    mixture: TesterCollection
    parent: QuantumTester


def reconstruct_noise_testers(
    collection: TesterCollection, certificate: RobustnessCertificate
) -> NoiseDecomposition:
    """Rebuild the optimal noise: T = (1 + R) M - R N with M compatible.

    Requires R decisively above the numerical floor, otherwise dividing
    the tiny slack by R amplifies solver noise beyond validity.
    """
    r = certificate.value
    if r <= 1e-6:
        raise DegenerateRobustness(
            f"robustness {r:.3e} is too small to divide the slack by"
        )
    settings, outcomes, dims, assignments, effects = _collection_data(
        collection, cap=len(certificate.assignments)
    )
    signature = collection.members[0].signature
    slots = collection.members[0].slots
    scale = 1.0 + r

    noise_members = []
    mixture_members = []
    for alpha in range(settings):
        noise_effects = []
        mixture_effects = []
        for a in range(outcomes):
            marg = sum(
                certificate.parent_effects[i]
                for i, vec in enumerate(assignments)
                if vec[alpha] == a
            )
            noise_effects.append(
                HermitianOperator(signature, (marg - effects[alpha][a]) / r)
            )
            mixture_effects.append(HermitianOperator(signature, marg / scale))
        noise_members.append(validate_tester(noise_effects, slots))
        mixture_members.append(validate_tester(mixture_effects, slots))

    parent_effects = [
        HermitianOperator(signature, q / scale) for q in certificate.parent_effects
    ]
    parent = validate_tester(parent_effects, slots)
    return NoiseDecomposition(
        TesterCollection(noise_members),
        TesterCollection(mixture_members),
        parent,
    )


@dataclass
class WeightCertificate:
    value: float
    gamma: float
    dims: tuple[int, ...]
    free_effects: list[np.ndarray]
    chain: list[np.ndarray]
    witness: dict[tuple[int, int], np.ndarray]
    dual_value: float
    gap: float
    assignments: list[tuple[int, ...]]
    diagnostics: dict = field(default_factory=dict)


def convex_weight(
    collection: TesterCollection,
    *,
    cap: int = DEFAULT_ASSIGNMENT_CAP,
    **solver_options,
) -> WeightCertificate:
    """Convex incompatibility weight with dual witness.

    Maximizes the scale gamma of a compatible part fitting under every
    effect; W = 1 - gamma. The witness Y pairs to gamma on the collection
    itself, sum Tr[Y T] = 1 - W, while every compatible collection pays
    at least one, which makes Y an incompatibility witness.
    """
    settings, outcomes, dims, assignments, effects = _collection_data(
        collection, cap
    )
    n = len(dims) // 2
    big = int(math.prod(dims))
    problem = SdpProblem()
    _add_parent_structure(problem, dims, len(assignments))
    lmi_index: dict[tuple[int, int], int] = {}
    for alpha in range(settings):
        for a in range(outcomes):
            lmi_index[(alpha, a)] = len(problem.constraints)
            problem.add_inequality(
                _marginal_terms(assignments, alpha, a, big, -1.0),
                -effects[alpha][a],
                name=f"fits_under_{alpha}_{a}",
            )
    problem.set_objective("max", {"chain1": np.eye(dims[0])})
    sol = solve_sdp(problem, **solver_options)
    if sol.status != "optimal":
        raise SolverFailure(
            {"stage": "convex_weight", "status": sol.status, **sol.diagnostics}
        )

    witness = {key: sol.duals[idx] for key, idx in lmi_index.items()}
    gamma = sol.value
    return WeightCertificate(
        value=1.0 - gamma,
        gamma=gamma,
        dims=tuple(dims),
        free_effects=[sol.blocks[f"q{i}"] for i in range(len(assignments))],
        chain=[sol.blocks[f"chain{k}"] for k in range(n, 0, -1)],
        witness=witness,
        dual_value=1.0 - sol.dual_value,
        gap=sol.gap,
        assignments=assignments,
        diagnostics=sol.diagnostics,
    )
