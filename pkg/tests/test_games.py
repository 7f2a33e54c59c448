"""Discrimination and exclusion games against their quantifier targets.

Closed-form game values are cross-checked by explicit strategy
enumeration over Born probabilities; compatible-team SDP values against
an independent reference solver; the theorem-level identities (advantage
1 + R, penalty fraction 1 - W) on unbiased pairs with known closed
forms, on depolarized pairs with an analytic weight line, on compatible
collections where both ratios collapse to one, on genuine probe pairs
where the witness deck is honestly flagged invalid, and on two-slot
testers where the full normalization tower enters.
"""

from __future__ import annotations

import itertools
import math

import cvxpy as cp
import numpy as np
import pytest

from combforge.combs import CombEnsemble, EnsembleCollection, validate_comb
from combforge.errors import CapExceeded, SignatureMismatch, ZeroDual
from combforge.games import (
    _deck_rows,
    _ensemble_from_duals,
    ensemble_from_robustness_dual,
    ensemble_from_weight_witness,
    exclusion_value,
    exclusion_value_compatible,
    qcd_value_compatible,
    qcd_value_incompatible,
    random_comb_deck,
    verify_theorem1,
    verify_theorem2,
)
from combforge.incompatibility import (
    convex_weight,
    is_compatible_collection,
    robustness,
)
from combforge.sampling import random_density, random_povm
from combforge.systems import CombSignature, HermitianOperator
from combforge.testers import (
    Povm,
    PostProcessing,
    TesterCollection as Collection,
    born_probabilities,
    mix_testers,
    mub_pair,
    povm_signature,
    probe_signature,
    random_tester_collection,
    simulate_collection,
    tester_from_network as build_from_network,
    validate_tester,
)

QUBIT_SIG = CombSignature.tester([1, 2])
STATE_SIG = CombSignature.comb([1, 2])


def trivial_qubit_tester(outcomes=2):
    eff = [HermitianOperator(QUBIT_SIG, np.eye(2) / outcomes)] * outcomes
    return validate_tester(eff, 1)


def depolarized_pair(eta):
    sharp = mub_pair()
    noise = trivial_qubit_tester()
    return Collection(
        [mix_testers([eta, 1 - eta], [m, noise]) for m in sharp.members]
    )


def state_comb(matrix):
    return validate_comb(HermitianOperator(STATE_SIG, matrix), 0)


def genuine_sharp_pair(seed):
    """Two testers sharing an entangled probe, with sharp random readouts."""
    rng = np.random.default_rng(seed)
    probe = HermitianOperator(probe_signature(1, 2, 2), random_density(4, rng))
    msig = povm_signature(1, 2, 2)
    members = []
    for _ in range(2):
        h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        _, vecs = np.linalg.eigh(h + h.conj().T)
        els = [
            HermitianOperator(msig, np.outer(vecs[:, i], vecs[:, i].conj()))
            for i in range(4)
        ]
        members.append(build_from_network(probe, [], Povm(els), slots=1))
    return Collection(members)


def compatible_povm_pair(seed):
    """Classical post-processings of one shared 4-outcome POVM."""
    rng = np.random.default_rng(seed)
    els = [HermitianOperator(QUBIT_SIG, m) for m in random_povm(2, 4, rng)]
    parent = validate_tester(els, 1)
    tables = [
        PostProcessing(rng.dirichlet(np.ones(2), size=4).T) for _ in range(2)
    ]
    select = [PostProcessing(np.ones((1, 2)))]
    return simulate_collection(Collection([parent]), [1.0], select, [tables])


def reference_parent_game(games, dims, sense):
    """Compatible-team game value by an independent conic solver.

    One PSD block per guess vector, summing to identity on the last
    system tensor the top of the normalization tower, the tower linked by
    partial traces down to a unit-trace bottom.
    """
    weights, targets = _deck_rows(games)
    dims = list(dims)
    n = len(dims) // 2
    big = int(math.prod(dims))
    counts = [len(row) for row in targets]
    vectors = list(itertools.product(*[range(c) for c in counts]))
    qs = [cp.Variable((big, big), hermitian=True) for _ in vectors]
    cons = [q >> 0 for q in qs]
    sides = [int(math.prod(dims[: 2 * k - 1])) for k in range(1, n + 1)]
    chains = [cp.Variable((s, s), hermitian=True) for s in sides]
    total = qs[0]
    for q in qs[1:]:
        total = total + q
    cons.append(total == cp.kron(chains[-1], np.eye(dims[-1])))
    for k in range(n, 1, -1):
        traced = dims[2 * k - 2]
        keep = sides[k - 1] // traced
        cons.append(
            cp.partial_trace(chains[k - 1], [keep, traced], axis=1)
            == cp.kron(chains[k - 2], np.eye(dims[2 * k - 3]))
        )
    cons.append(cp.trace(chains[0]) == 1)
    objective = 0
    for i, vec in enumerate(vectors):
        f = sum(
            weights[beta][b] * targets[beta][b] for beta, b in enumerate(vec)
        )
        objective = objective + cp.real(cp.trace(f @ qs[i]))
    prob = cp.Problem(
        cp.Maximize(objective) if sense == "max" else cp.Minimize(objective),
        cons,
    )
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == "optimal"
    return prob.value


def enumerate_discrimination_value(games, testers):
    """Best payoff over all pure strategies, through Born probabilities."""
    value = 0.0
    for beta, ens in enumerate(games.ensembles):
        probs = {}
        for alpha, member in enumerate(testers.members):
            probs[alpha] = np.array(
                [born_probabilities(member, c) for c in ens.combs]
            ).T
        best = -np.inf
        n_out = testers.outcomes
        n_combs = len(ens)
        for alpha in range(len(testers.members)):
            for guess in itertools.product(range(n_combs), repeat=n_out):
                payoff = sum(
                    games.joint_weight(guess[a], beta)
                    * probs[alpha][a, guess[a]]
                    for a in range(n_out)
                )
                best = max(best, payoff)
        value += best
    return value


def test_random_deck_structure():
    deck = random_comb_deck((1, 2), [2, 3], seed=7)
    assert len(deck) == 2
    assert len(deck.ensembles[1]) == 3
    total = sum(
        deck.joint_weight(b, beta)
        for beta in range(2)
        for b in range(len(deck.ensembles[beta]))
    )
    assert abs(total - 1.0) < 1e-9
    weights, targets = _deck_rows(deck)
    for beta in range(2):
        for b in range(len(deck.ensembles[beta])):
            assert weights[beta][b] == pytest.approx(
                deck.joint_weight(b, beta)
            )
            assert np.trace(targets[beta][b]).real == pytest.approx(1.0)


def test_distinguishable_ensemble_reaches_value_one():
    games = EnsembleCollection(
        [1.0],
        [
            CombEnsemble(
                [0.5, 0.5],
                [state_comb(np.diag([1.0, 0.0])), state_comb(np.diag([0.0, 1.0]))],
            )
        ],
    )
    testers = Collection([mub_pair().members[0]])
    assert qcd_value_incompatible(games, testers) == pytest.approx(1.0)


def test_deterministic_weights_need_no_measurement():
    rng_deck = random_comb_deck((1, 2), [2], seed=9)
    games = EnsembleCollection(
        [1.0], [CombEnsemble([1.0, 0.0], rng_deck.ensembles[0].combs)]
    )
    assert qcd_value_incompatible(games, mub_pair()) == pytest.approx(1.0)


def test_identical_combs_reduce_to_best_constant_guess():
    comb = random_comb_deck((1, 2), [1], seed=21).ensembles[0].combs[0]
    games = EnsembleCollection(
        [0.3, 0.7],
        [
            CombEnsemble([0.6, 0.4], [comb, comb]),
            CombEnsemble([0.2, 0.8], [comb, comb]),
        ],
    )
    expected = 0.3 * 0.6 + 0.7 * 0.8
    assert qcd_value_incompatible(games, mub_pair()) == pytest.approx(expected)
    assert qcd_value_compatible(games) == pytest.approx(expected, abs=1e-7)


def test_discrimination_value_matches_strategy_enumeration():
    for seed in (1, 5):
        testers = genuine_sharp_pair(seed)
        dims = testers.signature.dims
        games = random_comb_deck(dims, [2, 2, 3], seed=seed + 40)
        fast = qcd_value_incompatible(games, testers)
        slow = enumerate_discrimination_value(games, testers)
        assert fast == pytest.approx(slow, abs=1e-12)

    testers = depolarized_pair(0.9)
    games = random_comb_deck((1, 2), [3, 2], seed=17)
    assert qcd_value_incompatible(games, testers) == pytest.approx(
        enumerate_discrimination_value(games, testers), abs=1e-12
    )


def test_compatible_game_value_matches_reference_solver():
    for dims, counts, seed in (
        ((1, 2), [2, 2], 3),
        ((2, 2), [2, 2], 4),
        ((1, 2), [3], 5),
    ):
        games = random_comb_deck(dims, counts, seed=seed)
        for sense, fn in (
            ("max", qcd_value_compatible),
            ("min", exclusion_value_compatible),
        ):
            ours = fn(games)
            ref = reference_parent_game(games, dims, sense)
            assert ours == pytest.approx(ref, abs=2e-6)


def test_two_slot_compatible_value_matches_reference_solver():
    dims = (1, 2, 2, 2)
    games = random_comb_deck(dims, [2, 2], seed=11)
    ours = qcd_value_compatible(games)
    ref = reference_parent_game(games, dims, "max")
    assert ours == pytest.approx(ref, abs=2e-6)


def test_exclusion_value_is_direct_summation():
    testers = depolarized_pair(0.8)
    games = random_comb_deck((1, 2), [2, 2], seed=23)
    by_hand = 0.0
    for beta, member in enumerate(testers.members):
        for b, comb in enumerate(games.ensembles[beta].combs):
            p = born_probabilities(member, comb)[b]
            by_hand += games.joint_weight(b, beta) * p
    assert exclusion_value(games, testers) == pytest.approx(by_hand, abs=1e-12)
    relaxed = exclusion_value(games, testers, relaxed=True)
    assert relaxed <= exclusion_value(games, testers) + 1e-12
    swapped = exclusion_value(games, testers, assignment=[1, 0])
    direct = sum(
        games.joint_weight(b, beta)
        * born_probabilities(testers.members[1 - beta], comb)[b]
        for beta in range(2)
        for b, comb in enumerate(games.ensembles[beta].combs)
    )
    assert swapped == pytest.approx(direct, abs=1e-12)


def test_orthogonal_ensemble_excludes_perfectly():
    games = EnsembleCollection(
        [1.0],
        [
            CombEnsemble(
                [0.5, 0.5],
                [state_comb(np.diag([0.0, 1.0])), state_comb(np.diag([1.0, 0.0]))],
            )
        ],
    )
    testers = Collection([mub_pair().members[0]])
    assert exclusion_value(games, testers) == pytest.approx(0.0, abs=1e-12)


def test_single_outcome_tester_has_no_exclusion_choice():
    tester = validate_tester([HermitianOperator(QUBIT_SIG, np.eye(2))], 1)
    comb = random_comb_deck((1, 2), [1], seed=2).ensembles[0].combs[0]
    games = EnsembleCollection([1.0], [CombEnsemble([1.0], [comb])])
    expected = np.trace(comb.operator.matrix).real
    assert exclusion_value(games, Collection([tester])) == pytest.approx(
        expected, abs=1e-12
    )


def test_theorem1_on_unbiased_sharp_pair():
    testers = mub_pair()
    cert = robustness(testers)
    report = verify_theorem1(testers, cert, bound_samples=4, seed=31)
    assert report.ok
    assert report.witness_valid is True
    assert report.game == "discrimination"
    assert report.ratio == pytest.approx(cert.scale, rel=1e-7)
    # closed form for the unbiased sharp pair
    assert cert.scale == pytest.approx(4 - 2 * math.sqrt(2), abs=1e-7)
    assert all(c["ok"] for c in report.details["bound_checks"])
    assert report.quantifier == pytest.approx(cert.value)


def test_theorem2_on_unbiased_sharp_pair():
    testers = mub_pair()
    report = verify_theorem2(testers, bound_samples=0)
    assert report.ok
    assert report.witness_valid is True
    # weight one: the pair pays nothing on its witness deck
    assert report.predicted_ratio == pytest.approx(0.0, abs=1e-8)
    assert report.incompatible_value == pytest.approx(0.0, abs=1e-8)
    assert report.compatible_value > 1e-3


def test_depolarized_weight_line_and_theorem2():
    """T(eta) = W T(1/sqrt2) + (1-W) T(1) decomposes the pair exactly at
    the joint measurability threshold, so W = (eta - c)/(1 - c) with
    c = 1/sqrt2."""
    c = 1 / math.sqrt(2)
    for eta in (0.75, 0.85, 0.95):
        testers = depolarized_pair(eta)
        cert = convex_weight(testers)
        assert cert.value == pytest.approx((eta - c) / (1 - c), abs=2e-6)
        report = verify_theorem2(testers, cert, bound_samples=0)
        assert report.ok
        assert report.witness_valid is True
        assert report.ratio == pytest.approx(1 - cert.value, abs=2e-6)


def test_theorem_ratios_collapse_to_one_for_compatible_collections():
    testers = compatible_povm_pair(6)
    r1 = verify_theorem1(testers, bound_samples=3, seed=8)
    assert r1.ok
    assert r1.predicted_ratio == pytest.approx(1.0, abs=1e-6)
    assert r1.ratio == pytest.approx(1.0, abs=1e-6)
    r2 = verify_theorem2(testers, bound_samples=3, seed=9)
    assert r2.ok
    assert r2.predicted_ratio == pytest.approx(1.0, abs=1e-6)
    assert r2.ratio == pytest.approx(1.0, abs=1e-6)


def test_theorem_identities_hold_with_invalid_witness_decks():
    """Genuine probes make the rescaled duals fail comb validation; the
    conic identities close regardless and the flag reports it."""
    for seed in (0, 2):
        testers = genuine_sharp_pair(seed)
        assert is_compatible_collection(testers).compatible is False
        r1 = verify_theorem1(testers, bound_samples=0)
        assert r1.witness_valid is False
        assert r1.details["exact_ok"] is True
        assert r1.details["residuals"]
        assert r1.predicted_ratio > 1.0 + 1e-4
        r2 = verify_theorem2(testers, bound_samples=0)
        assert r2.witness_valid is False
        assert r2.details["exact_ok"] is True
        assert 0.0 < r2.predicted_ratio < 1.0


def test_theorem_identities_on_two_slot_testers():
    sig = CombSignature.tester([1, 2, 2, 2])
    testers = random_tester_collection(2, sig, [2, 2], 2, seed=0)
    assert is_compatible_collection(testers).compatible is False
    r1 = verify_theorem1(testers, bound_samples=2, seed=3)
    assert r1.details["exact_ok"] is True
    assert r1.ok
    r2 = verify_theorem2(testers, bound_samples=2, seed=4)
    assert r2.details["exact_ok"] is True
    assert r2.ok


def test_witness_ensembles_from_certificates():
    testers = depolarized_pair(0.85)
    rcert = robustness(testers)
    ensemble, valid = ensemble_from_robustness_dual(rcert)
    assert valid is True
    report = verify_theorem1(testers, rcert, bound_samples=0)
    assert qcd_value_incompatible(ensemble, testers) == pytest.approx(
        report.incompatible_value, rel=1e-9
    )

    wcert = convex_weight(testers)
    wensemble, wvalid = ensemble_from_weight_witness(wcert)
    assert wvalid is True
    assert exclusion_value(wensemble, testers) == pytest.approx(
        verify_theorem2(testers, wcert, bound_samples=0).incompatible_value,
        abs=1e-9,
    )


def test_ensemble_from_duals_handles_zero_entries():
    dims = (1, 2)
    duals = {
        (0, 0): np.diag([0.3, 0.1]).astype(complex),
        (0, 1): np.zeros((2, 2), dtype=complex),
        (1, 0): np.diag([0.2, 0.2]).astype(complex),
        (1, 1): np.diag([0.1, 0.1]).astype(complex),
    }
    ensemble, valid, residuals = _ensemble_from_duals(duals, dims)
    assert valid is True
    assert residuals == {}
    assert ensemble.joint_weight(1, 0) == pytest.approx(0.0)
    for beta in range(2):
        for comb in ensemble.ensembles[beta].combs:
            assert np.trace(comb.operator.matrix).real == pytest.approx(1.0)

    with pytest.raises(ZeroDual):
        _ensemble_from_duals(
            {k: np.zeros((2, 2), dtype=complex) for k in duals}, dims
        )


def test_game_error_paths():
    testers = mub_pair()
    with pytest.raises(CapExceeded):
        qcd_value_compatible(random_comb_deck((1, 2), [5, 5, 4], seed=1))
    three = random_comb_deck((1, 2), [2, 2, 2], seed=2)
    with pytest.raises(SignatureMismatch, match="labels"):
        exclusion_value(three, testers)
    wide = random_comb_deck((1, 2), [3, 2], seed=3)
    with pytest.raises(SignatureMismatch, match="outcomes"):
        exclusion_value(wide, testers)
    big = random_comb_deck((2, 2), [2, 2], seed=4)
    with pytest.raises(SignatureMismatch, match="side"):
        qcd_value_incompatible(big, testers)
    with pytest.raises(SignatureMismatch, match="assignment"):
        exclusion_value(
            random_comb_deck((1, 2), [2, 2], seed=5), testers, assignment=[0]
        )


def test_bound_directions_on_random_decks():
    testers = depolarized_pair(0.9)
    rcert = robustness(testers)
    wcert = convex_weight(testers)
    for seed in range(4):
        games = random_comb_deck((1, 2), [2, 2], seed=100 + seed)
        disc = qcd_value_incompatible(games, testers) / qcd_value_compatible(
            games
        )
        assert disc <= rcert.scale + 1e-6
        floor = exclusion_value_compatible(games)
        assert floor > 1e-9
        exc = exclusion_value(games, testers) / floor
        assert exc >= (1 - wcert.value) - 1e-6


def test_game_values_are_probabilities():
    for seed in (3, 4):
        testers = genuine_sharp_pair(seed)
        games = random_comb_deck((2, 2), [2, 2], seed=60 + seed)
        for v in (
            qcd_value_incompatible(games, testers),
            qcd_value_compatible(games),
            exclusion_value(games, testers),
            exclusion_value_compatible(games),
        ):
            assert -1e-8 <= v <= 1.0 + 1e-8
