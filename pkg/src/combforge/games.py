"""Operational games that separate incompatible tester collections.

Discrimination: a referee announces an ensemble label beta, draws a comb
from that ensemble, and the player measures it, choosing a tester per
label and a guess per outcome. The best compatible team is limited to
one parent tester with vector-valued outcomes (a guess for every label
at once), an SDP; the deck built from the robustness dual makes the
given collection beat that team by exactly the factor 1 + R.

Exclusion: the player must name a comb that was NOT prepared, applying
the tester indexed by the announced label, and pays the probability of
naming the prepared comb. On the deck built from the weight witness the
collection pays only the fraction 1 - W of the compatible floor.

Dual effects rescaled to unit normalization need not satisfy the causal
chain of a comb, so every constructed ensemble carries a validity flag
and, when invalid, the residuals of the failed constraints. The value
identities rest on conic duality alone and hold either way.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .combs import (
    CombEnsemble,
    EnsembleCollection,
    QuantumComb,
    random_comb,
    validate_comb,
)
from .errors import CapExceeded, SignatureMismatch, SolverFailure, ZeroDual
from .incompatibility import (
    RobustnessCertificate,
    WeightCertificate,
    _add_parent_structure,
    convex_weight,
    robustness,
)
from .sdp import LinearMap, SdpProblem, solve_sdp
from .systems import CombSignature, HermitianOperator
from .testers import TesterCollection
from .tolerances import THEOREM_RTOL

__all__ = [
    "DEFAULT_VECTOR_CAP",
    "GameReport",
    "qcd_value_incompatible",
    "qcd_value_compatible",
    "exclusion_value",
    "exclusion_value_compatible",
    "ensemble_from_robustness_dual",
    "ensemble_from_weight_witness",
    "random_comb_deck",
    "verify_theorem1",
    "verify_theorem2",
]

DEFAULT_VECTOR_CAP = 81
DEFAULT_BOUND_SAMPLES = 20


# --- decks -------------------------------------------------------------------


def _deck_rows(games: EnsembleCollection):
    """Joint weights and raw operator matrices, row per ensemble label."""
    weights = []
    targets = []
    for beta, ens in enumerate(games.ensembles):
        weights.append(
            np.array([games.joint_weight(b, beta) for b in range(len(ens))])
        )
        targets.append([c.operator.matrix for c in ens.combs])
    return weights, targets


def random_comb_deck(
    dims,
    counts,
    seed: int,
    memory_dims=None,
) -> EnsembleCollection:
    """Haar-random deck: ``counts[beta]`` combs in ensemble beta, Dirichlet
    weights throughout."""
    sig = CombSignature.comb(list(dims))
    slots = sig.slots
    mem = list(memory_dims) if memory_dims is not None else [2] * slots
    rng = np.random.default_rng(seed)
    ensembles = []
    for count in counts:
        combs = [
            random_comb(sig, mem, int(rng.integers(2**31)))
            for _ in range(count)
        ]
        ensembles.append(CombEnsemble(rng.dirichlet(np.ones(count)), combs))
    return EnsembleCollection(rng.dirichlet(np.ones(len(counts))), ensembles)


def _check_pairing(testers: TesterCollection, targets) -> None:
    side = int(math.prod(testers.signature.dims))
    for row in targets:
        for mat in row:
            if mat.shape != (side, side):
                raise SignatureMismatch(
                    f"ensemble operator side {mat.shape[0]} does not match "
                    f"the tester space side {side}"
                )


# --- the games ---------------------------------------------------------------


def qcd_value_incompatible(
    games: EnsembleCollection, testers: TesterCollection
) -> float:
    """Best discrimination payoff of a player holding the collection.

    The player learns the label, so the tester choice and the guess per
    outcome decouple into nested maxima over deterministic strategies;
    stochastic strategies cannot do better because the payoff is linear
    in each table. Ties go to the lowest index.
    """
    weights, targets = _deck_rows(games)
    _check_pairing(testers, targets)
    value = 0.0
    for beta in range(len(games)):
        w = weights[beta]
        mats = targets[beta]
        best = -np.inf
        for member in testers.members:
            s = 0.0
            for effect in member.effects:
                s += max(
                    w[b] * np.trace(effect.matrix @ mats[b]).real
                    for b in range(len(mats))
                )
            best = max(best, s)
        value += best
    return value


def _vector_outcomes(counts, cap):
    total = math.prod(counts)
    if total > cap:
        raise CapExceeded(f"{total} guess vectors exceed the cap {cap}")
    return list(itertools.product(*[range(c) for c in counts]))


def _parent_game_value(
    dims,
    weights,
    targets,
    sense: str,
    cap: int,
    **solver_options,
) -> float:
    """Optimal payoff over compatible teams: one normalized parent tester
    answering every label at once through a guess vector."""
    big = int(math.prod(dims))
    counts = [len(row) for row in targets]
    vectors = _vector_outcomes(counts, cap)
    problem = SdpProblem()
    _add_parent_structure(problem, tuple(dims), len(vectors))
    tr = LinearMap.from_callable(
        lambda m: np.array([[np.trace(m)]]), dims[0], 1
    )
    problem.add_equality({"chain1": tr}, np.array([[1.0]]), name="unit_scale")

    objective = {}
    for i, vec in enumerate(vectors):
        f = np.zeros((big, big), dtype=complex)
        for beta, b in enumerate(vec):
            f = f + weights[beta][b] * targets[beta][b]
        objective[f"q{i}"] = f
    problem.set_objective(sense, objective)
    sol = solve_sdp(problem, **solver_options)
    if sol.status != "optimal":
        raise SolverFailure(
            {"stage": f"game_{sense}", "status": sol.status, **sol.diagnostics}
        )
    return sol.value


def qcd_value_compatible(
    games: EnsembleCollection,
    *,
    cap: int = DEFAULT_VECTOR_CAP,
    **solver_options,
) -> float:
    weights, targets = _deck_rows(games)
    dims = games.signature.dims
    return _parent_game_value(dims, weights, targets, "max", cap, **solver_options)


def exclusion_value(
    games: EnsembleCollection,
    testers: TesterCollection,
    *,
    assignment=None,
    relaxed: bool = False,
) -> float:
    """Probability of naming the prepared comb, outcome b excluding comb b.

    The standard reading applies member beta when label beta is announced;
    ``assignment`` maps labels to member indices instead when given.
    ``relaxed`` lets the player pick the member with the smallest penalty
    per label, which is a different (nonstandard) game.
    """
    weights, targets = _deck_rows(games)
    _check_pairing(testers, targets)
    labels = len(games)
    if assignment is None:
        if labels != len(testers.members):
            raise SignatureMismatch(
                f"exclusion pairs {labels} ensemble labels with "
                f"{len(testers.members)} members; give an assignment map "
                f"to override"
            )
        assignment = list(range(labels))
    elif len(assignment) != labels:
        raise SignatureMismatch(
            f"assignment maps {len(assignment)} labels, the deck has {labels}"
        )
    value = 0.0
    for beta in range(labels):
        w = weights[beta]
        mats = targets[beta]
        if len(mats) > testers.outcomes:
            raise SignatureMismatch(
                f"ensemble {beta} holds {len(mats)} combs but the testers "
                f"only have {testers.outcomes} outcomes"
            )

        def penalty(member):
            return sum(
                w[b] * np.trace(member.effects[b].matrix @ mats[b]).real
                for b in range(len(mats))
            )

        if relaxed:
            value += min(penalty(m) for m in testers.members)
        else:
            value += penalty(testers.members[assignment[beta]])
    return value


def exclusion_value_compatible(
    games: EnsembleCollection,
    *,
    cap: int = DEFAULT_VECTOR_CAP,
    **solver_options,
) -> float:
    weights, targets = _deck_rows(games)
    dims = games.signature.dims
    return _parent_game_value(dims, weights, targets, "min", cap, **solver_options)


# --- witness ensembles from dual certificates ---------------------------------


def _comb_trace(dims) -> float:
    return float(math.prod(dims[0::2]))


def _placeholder_comb(dims) -> np.ndarray:
    side = int(math.prod(dims))
    return np.eye(side) / math.prod(dims[1::2])


def _ensemble_from_duals(
    duals: dict[tuple[int, int], np.ndarray],
    dims,
) -> tuple[EnsembleCollection, bool, dict[str, float]]:
    """Normalize dual effects into a labeled deck.

    Joint weights are the dual trace fractions; each positively weighted
    dual is rescaled to the comb trace of the signature. Operators that
    fail comb validation are kept as they are (their pairings are what
    the theorems need) with the failure residuals recorded.
    """
    settings = 1 + max(k[0] for k in duals)
    outcomes = 1 + max(k[1] for k in duals)
    traces = np.zeros((settings, outcomes))
    for (alpha, a), y in duals.items():
        traces[alpha, a] = np.trace(y).real
    total = traces.sum()
    if total < 1e-12:
        raise ZeroDual(
            "the dual certificate carries no trace to build a deck from"
        )
    sig = CombSignature.comb(list(dims))
    slots = sig.slots
    scale = _comb_trace(dims)
    residuals: dict[str, float] = {}
    label_weights = []
    ensembles = []
    for alpha in range(settings):
        w = traces[alpha] / total
        combs = []
        for a in range(outcomes):
            if traces[alpha, a] < 1e-12 * total:
                mat = _placeholder_comb(dims)
            else:
                y = duals[(alpha, a)]
                mat = 0.5 * (y + y.conj().T) * (scale / traces[alpha, a])
            op = HermitianOperator(sig, mat)
            try:
                combs.append(validate_comb(op, slots))
            except Exception as err:
                residual = getattr(err, "residual", None)
                if residual is None:
                    residual = getattr(err, "witness", np.nan)
                residuals[f"{alpha},{a}"] = float(residual)
                combs.append(QuantumComb(op, slots, []))
        total_w = w.sum()
        label_weights.append(total_w)
        ensembles.append(
            CombEnsemble(
                w / total_w if total_w > 0 else np.ones(outcomes) / outcomes,
                combs,
            )
        )
    collection = EnsembleCollection(np.array(label_weights), ensembles)
    return collection, not residuals, residuals


def ensemble_from_robustness_dual(
    cert: RobustnessCertificate,
) -> tuple[EnsembleCollection, bool]:
    """Discrimination deck on which the certified collection beats every
    compatible team by exactly the factor 1 + R."""
    ensemble, valid, _ = _ensemble_from_duals(cert.dual_effects, cert.dims)
    return ensemble, valid


def ensemble_from_weight_witness(
    cert: WeightCertificate,
) -> tuple[EnsembleCollection, bool]:
    """Exclusion deck on which the certified collection pays only the
    fraction 1 - W of the compatible floor."""
    ensemble, valid, _ = _ensemble_from_duals(cert.witness, cert.dims)
    return ensemble, valid


# --- theorem-level verification ------------------------------------------------


@dataclass
class GameReport:
    """Both game values on a witness deck, against the quantifier target.

    ``ok`` folds the exact-ratio check (asserted only when the witness
    deck passed comb validation) with the bound-direction spot checks on
    random decks; ``details`` keeps every individual number.
    """

    game: str
    incompatible_value: float
    compatible_value: float
    ratio: float
    predicted_ratio: float
    deviation: float
    ok: bool
    witness_valid: bool
    quantifier: float
    ensemble: EnsembleCollection
    diagnostics: str
    details: dict = field(default_factory=dict)


def _bound_ratio_checks(
    testers: TesterCollection,
    dims,
    counts,
    game: str,
    predicted: float,
    samples: int,
    seed: int,
    cap: int,
    workers: int = 1,
    **solver_options,
):
    def check(k: int) -> dict:
        deck = random_comb_deck(dims, counts, seed + 7919 * k)
        weights, targets = _deck_rows(deck)
        if game == "discrimination":
            v = qcd_value_incompatible(deck, testers)
            team = _parent_game_value(
                dims, weights, targets, "max", cap, **solver_options
            )
            ratio = v / team
            ok = ratio <= predicted + THEOREM_RTOL * max(1.0, predicted)
        else:
            v = exclusion_value(deck, testers)
            team = _parent_game_value(
                dims, weights, targets, "min", cap, **solver_options
            )
            ratio = v / team if team > 1e-12 else np.inf
            ok = ratio >= predicted - THEOREM_RTOL * max(1.0, predicted)
        return {"ratio": float(ratio), "ok": bool(ok)}

    if workers > 1 and samples > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(check, range(samples)))
    return [check(k) for k in range(samples)]


def _theorem_report(
    game: str,
    testers: TesterCollection,
    duals: dict[tuple[int, int], np.ndarray],
    predicted: float,
    quantifier: float,
    certificate_gap: float,
    cap: int,
    bound_samples: int,
    seed: int,
    workers: int,
    solver_options: dict,
) -> GameReport:
    dims = testers.signature.dims
    ensemble, valid, residuals = _ensemble_from_duals(duals, dims)
    weights, targets = _deck_rows(ensemble)
    if game == "discrimination":
        value = qcd_value_incompatible(ensemble, testers)
        team = _parent_game_value(
            dims, weights, targets, "max", cap, **solver_options
        )
    else:
        value = exclusion_value(ensemble, testers)
        team = _parent_game_value(
            dims, weights, targets, "min", cap, **solver_options
        )
    ratio = value / team if team > 1e-12 else np.nan
    deviation = abs(ratio - predicted)
    exact_ok = bool(
        np.isfinite(ratio) and deviation <= THEOREM_RTOL * max(1.0, predicted)
    )
    details: dict = {
        "exact_ok": exact_ok,
        "residuals": residuals,
        "certificate_gap": certificate_gap,
    }
    ok = exact_ok if valid else True
    if bound_samples:
        counts = [testers.outcomes] * len(testers.members)
        checks = _bound_ratio_checks(
            testers,
            dims,
            counts,
            game,
            predicted,
            bound_samples,
            seed,
            cap,
            workers,
            **solver_options,
        )
        details["bound_checks"] = checks
        ok = ok and all(c["ok"] for c in checks)
    parts = [
        f"ratio deviates from the prediction by {deviation:.3e}",
        "witness deck is comb-valid"
        if valid
        else f"witness deck violates comb constraints (max residual "
        f"{max(residuals.values()):.3e})",
    ]
    if bound_samples:
        good = sum(c["ok"] for c in details["bound_checks"])
        parts.append(f"bound direction held on {good}/{bound_samples} random decks")
    return GameReport(
        game=game,
        incompatible_value=value,
        compatible_value=team,
        ratio=ratio,
        predicted_ratio=predicted,
        deviation=deviation,
        ok=ok,
        witness_valid=valid,
        quantifier=quantifier,
        ensemble=ensemble,
        diagnostics="; ".join(parts),
        details=details,
    )


def verify_theorem1(
    testers: TesterCollection,
    certificate: RobustnessCertificate | None = None,
    *,
    cap: int = DEFAULT_VECTOR_CAP,
    bound_samples: int = DEFAULT_BOUND_SAMPLES,
    seed: int = 0,
    workers: int = 1,
    **solver_options,
) -> GameReport:
    """Discrimination advantage of the collection equals 1 + robustness.

    Builds the optimal deck from the robustness dual, evaluates both
    sides of the game, and spot-checks that random decks never push the
    advantage above the predicted ratio. ``workers`` fans the spot checks
    out over threads; results are assembled by index either way.
    """
    cert = certificate if certificate is not None else robustness(testers)
    return _theorem_report(
        "discrimination",
        testers,
        cert.dual_effects,
        cert.scale,
        cert.value,
        cert.gap,
        cap,
        bound_samples,
        seed,
        workers,
        solver_options,
    )


def verify_theorem2(
    testers: TesterCollection,
    certificate: WeightCertificate | None = None,
    *,
    cap: int = DEFAULT_VECTOR_CAP,
    bound_samples: int = DEFAULT_BOUND_SAMPLES,
    seed: int = 0,
    workers: int = 1,
    **solver_options,
) -> GameReport:
    """Exclusion advantage of the collection equals 1 - weight.

    On the deck built from the weight witness the collection pays the
    fraction 1 - W of the compatible exclusion floor; random decks never
    let it pay a smaller fraction. ``workers`` fans the spot checks out
    over threads; results are assembled by index either way.
    """
    cert = certificate if certificate is not None else convex_weight(testers)
    return _theorem_report(
        "exclusion",
        testers,
        cert.witness,
        cert.gamma,
        cert.value,
        cert.gap,
        cap,
        bound_samples,
        seed,
        workers,
        solver_options,
    )
