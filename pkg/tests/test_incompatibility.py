"""Compatibility verdicts and convex quantifiers against direct oracles."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from combforge.errors import CapExceeded, DegenerateRobustness
from combforge.incompatibility import (
    convex_weight,
    deterministic_assignments,
    is_compatible_collection,
    reconstruct_noise_testers,
    robustness,
)
from combforge.sampling import random_density, random_povm
from combforge.systems import CombSignature, HermitianOperator
from combforge.testers import (
    PostProcessing,
    Povm,
    TesterCollection as Collection,
    mix_testers,
    mub_pair,
    povm_signature,
    probe_signature,
    simulate_collection,
    tester_from_network as build_from_network,
    validate_tester,
)

cp = pytest.importorskip("cvxpy")

QUBIT_SIG = CombSignature.tester([1, 2])


def povm_members(povms):
    """Wrap plain POVMs as single-slot testers with a trivial input."""
    d = povms[0][0].shape[0]
    sig = CombSignature.tester([1, d])
    members = [
        validate_tester([HermitianOperator(sig, m) for m in povm], 1)
        for povm in povms
    ]
    return Collection(members)


def trivial_qubit_tester(outcomes=2):
    eff = [HermitianOperator(QUBIT_SIG, np.eye(2) / outcomes)] * outcomes
    return validate_tester(eff, 1)


def compatible_from_parent(parent, n_members, member_outcomes, seed):
    rng = np.random.default_rng(seed)
    tables = []
    for _ in range(n_members):
        cols = rng.dirichlet(np.ones(member_outcomes), size=parent.outcomes).T
        tables.append(PostProcessing(cols))
    select = [PostProcessing(np.ones((1, n_members)))]
    return simulate_collection(Collection([parent]), [1.0], select, [tables])


def genuine_pair(seed, outcomes=2):
    """Two testers sharing one entangled probe, differing in the readout."""
    rng = np.random.default_rng(seed)
    probe = HermitianOperator(probe_signature(1, 2, 2), random_density(4, rng))
    sig_p = povm_signature(1, 2, 2)
    members = []
    for _ in range(2):
        elements = [
            HermitianOperator(sig_p, m) for m in random_povm(4, outcomes, rng)
        ]
        members.append(build_from_network(probe, [], Povm(elements), slots=1))
    return Collection(members)


def pair_value(duals, collection):
    return sum(
        np.trace(y @ collection.members[alpha].effects[a].matrix).real
        for (alpha, a), y in duals.items()
    )


def reference_povm_robustness(povms):
    d = povms[0][0].shape[0]
    o = len(povms[0])
    assigns = list(itertools.product(range(o), repeat=len(povms)))
    qs = [cp.Variable((d, d), hermitian=True) for _ in assigns]
    t = cp.Variable()
    cons = [q >> 0 for q in qs]
    cons.append(sum(qs) == t * np.eye(d))
    for alpha, povm in enumerate(povms):
        for a, effect in enumerate(povm):
            cons.append(
                sum(q for q, vec in zip(qs, assigns) if vec[alpha] == a)
                >> effect
            )
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == "optimal"
    return prob.value - 1.0


def reference_povm_weight(povms):
    d = povms[0][0].shape[0]
    o = len(povms[0])
    assigns = list(itertools.product(range(o), repeat=len(povms)))
    gs = [cp.Variable((d, d), hermitian=True) for _ in assigns]
    t = cp.Variable()
    cons = [g >> 0 for g in gs]
    cons.append(sum(gs) == t * np.eye(d))
    for alpha, povm in enumerate(povms):
        for a, effect in enumerate(povm):
            cons.append(
                effect
                >> sum(g for g, vec in zip(gs, assigns) if vec[alpha] == a)
            )
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == "optimal"
    return 1.0 - prob.value


def random_povm_pair(seed, d=2, outcomes=2):
    rng = np.random.default_rng(seed)
    return [random_povm(d, outcomes, rng), random_povm(d, outcomes, rng)]


def random_sharp_pair(seed):
    """Two random projective qubit measurements, generically incompatible."""
    rng = np.random.default_rng(seed)
    povms = []
    for _ in range(2):
        h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        _, v = np.linalg.eigh(h + h.conj().T)
        povms.append(
            [np.outer(v[:, k], v[:, k].conj()) for k in range(2)]
        )
    return povm_members(povms)


def test_assignment_enumeration_is_lexicographic():
    assert deterministic_assignments(2, 2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert len(deterministic_assignments(6, 2)) == 64
    with pytest.raises(CapExceeded):
        deterministic_assignments(4, 4)
    with pytest.raises(CapExceeded):
        deterministic_assignments(2, 9, cap=80)


def test_compatible_by_construction_is_recognized():
    rng = np.random.default_rng(42)
    parent = povm_members([random_povm(2, 4, rng)]).members[0]
    coll = compatible_from_parent(parent, 2, 2, seed=7)
    report = is_compatible_collection(coll)
    assert report.compatible is True
    assert report.parent is not None
    # the returned parent really reproduces the collection through the
    # deterministic tables
    for alpha, table in enumerate(report.post_processings):
        for a in range(coll.outcomes):
            rebuilt = sum(
                table.matrix[a, i] * report.parent.effects[i].matrix
                for i in range(len(report.assignments))
            )
            target = coll.members[alpha].effects[a].matrix
            assert np.abs(rebuilt - target).max() < 1e-6

    cert = robustness(coll)
    assert abs(cert.value) < 1e-6
    wcert = convex_weight(coll)
    assert abs(wcert.value) < 1e-6
    with pytest.raises(DegenerateRobustness):
        reconstruct_noise_testers(coll, cert)


def test_unbiased_sharp_pair_is_maximally_incompatible():
    coll = mub_pair()
    report = is_compatible_collection(coll)
    assert report.compatible is False

    cert = robustness(coll)
    ref = reference_povm_robustness(
        [[e.matrix for e in m.effects] for m in coll.members]
    )
    assert abs(cert.value - ref) < 1e-6
    assert cert.value > 0.1
    # dual certificate pays exactly the optimal scale
    assert abs(pair_value(cert.dual_effects, coll) - cert.scale) < 1e-5

    wcert = convex_weight(coll)
    # two distinct rank-one effects leave no room for a compatible part
    assert abs(wcert.value - 1.0) < 1e-6
    assert abs(pair_value(wcert.witness, coll) - wcert.gamma) < 1e-5


def test_unbiased_pair_noise_reconstruction():
    coll = mub_pair()
    cert = robustness(coll)
    deco = reconstruct_noise_testers(coll, cert)
    scale = cert.scale
    for alpha in range(2):
        for a in range(2):
            lhs = coll.members[alpha].effects[a].matrix
            rhs = (
                scale * deco.mixture.members[alpha].effects[a].matrix
                - cert.value * deco.noise.members[alpha].effects[a].matrix
            )
            assert np.abs(lhs - rhs).max() < 1e-7
    again = is_compatible_collection(deco.mixture)
    assert again.compatible is True


@pytest.mark.parametrize("seed", range(5))
def test_povm_level_quantifiers_match_reference(seed):
    povms = random_povm_pair(seed, d=2 + seed % 2, outcomes=2)
    coll = povm_members(povms)
    cert = robustness(coll)
    ref_r = reference_povm_robustness(povms)
    assert abs(cert.value - ref_r) < 1e-6
    wcert = convex_weight(coll)
    ref_w = reference_povm_weight(povms)
    assert abs(wcert.value - ref_w) < 1e-6
    # primal and dual agree on both programs
    assert cert.gap < 1e-6
    assert wcert.gap < 1e-6


def test_depolarized_unbiased_pair_threshold():
    """Visibility eta on both unbiased sharp qubit members: compatible
    exactly up to eta = 1/sqrt(2)."""
    sharp = mub_pair()
    noise = trivial_qubit_tester()

    def at_visibility(eta):
        return Collection(
            [mix_testers([eta, 1 - eta], [m, noise]) for m in sharp.members]
        )

    below = at_visibility(0.65)
    assert is_compatible_collection(below).compatible is True
    assert robustness(below).value < 1e-7
    assert convex_weight(below).value < 1e-7

    above = at_visibility(0.85)
    assert is_compatible_collection(above).compatible is False
    r_above = robustness(above).value
    w_above = convex_weight(above).value
    assert r_above > 1e-4
    assert 1e-4 < w_above < 1.0 - 1e-4


def test_chain_mismatch_short_circuits():
    rng = np.random.default_rng(3)
    a = genuine_pair(1)
    b = genuine_pair(2)
    mixed = Collection([a.members[0], b.members[1]])
    report = is_compatible_collection(mixed)
    assert report.compatible is False
    assert report.margin == -np.inf
    assert "chain" in report.message


def test_genuine_probe_pair_against_reference():
    coll = genuine_pair(11)
    cert = robustness(coll)

    # independent formulation: parent effects on the joint space with a
    # one-sided identity normalization
    assigns = list(itertools.product(range(2), repeat=2))
    qs = [cp.Variable((4, 4), hermitian=True) for _ in assigns]
    theta = cp.Variable((2, 2), hermitian=True)
    cons = [q >> 0 for q in qs]
    cons.append(sum(qs) == cp.kron(theta, np.eye(2)))
    for alpha in range(2):
        for a in range(2):
            target = coll.members[alpha].effects[a].matrix
            cons.append(
                sum(q for q, vec in zip(qs, assigns) if vec[alpha] == a)
                >> target
            )
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(theta))), cons)
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == "optimal"
    assert abs(cert.scale - prob.value) < 1e-6

    # the parent found is a valid scaled tester: top chain matches the sum
    total = sum(cert.parent_effects)
    rebuilt = np.kron(cert.chain[0], np.eye(2))
    assert np.abs(total - rebuilt).max() < 1e-6
    assert abs(np.trace(cert.chain[-1]).real - cert.scale) < 1e-6


def test_weight_witness_separates_compatible_collections():
    coll = mub_pair()
    wcert = convex_weight(coll)
    rng_seeds = range(10)
    for seed in rng_seeds:
        rng = np.random.default_rng(1000 + seed)
        parent = povm_members([random_povm(2, 4, rng)]).members[0]
        comp = compatible_from_parent(parent, 2, 2, seed=seed)
        paid = pair_value(wcert.witness, comp)
        assert paid >= 1.0 - 1e-6
    # while the collection itself pays only 1 - W
    assert abs(pair_value(wcert.witness, coll) - (1.0 - wcert.value)) < 1e-5


def test_partial_weight_decomposition():
    sharp = mub_pair()
    noise = trivial_qubit_tester()
    coll = Collection(
        [mix_testers([0.85, 0.15], [m, noise]) for m in sharp.members]
    )
    wcert = convex_weight(coll)
    gamma = wcert.gamma
    assert 1e-4 < gamma < 1.0 - 1e-4
    # the free part scaled by 1/gamma is a valid parent tester whose
    # marginals stay below the effects
    parent = [g / gamma for g in wcert.free_effects]
    sig = coll.members[0].signature
    validate_tester([HermitianOperator(sig, g) for g in parent], 1)
    for alpha in range(2):
        for a in range(2):
            marg = sum(
                g
                for g, vec in zip(wcert.free_effects, wcert.assignments)
                if vec[alpha] == a
            )
            slack = coll.members[alpha].effects[a].matrix - marg
            assert np.linalg.eigvalsh(slack)[0] > -1e-7


def test_triple_agreement_on_mixed_bag():
    verdicts = []
    for seed in range(6):
        if seed % 2 == 0:
            rng = np.random.default_rng(seed)
            parent = povm_members([random_povm(2, 4, rng)]).members[0]
            coll = compatible_from_parent(parent, 2, 2, seed=seed)
        else:
            coll = random_sharp_pair(seed)
        report = is_compatible_collection(coll)
        r = robustness(coll).value
        w = convex_weight(coll).value
        agree = (report.compatible, r <= 1e-6, w <= 1e-6)
        verdicts.append(agree)
        assert agree[0] == agree[1] == agree[2], (seed, agree, r, w)
    # the bag really contains both kinds
    kinds = {v[0] for v in verdicts}
    assert kinds == {True, False}
