"""Testers measure combs: probe in, comb in the slots, readout at the end.

Built from a network (probe state, crossing channels, final measurement)
or validated directly from candidate effects. Pairing a tester with a
comb through the link product gives outcome probabilities that sum to
one for every valid pair.
"""

from __future__ import annotations

import numpy as np

from combforge import (
    CombSignature,
    HermitianOperator,
    Povm,
    born_probabilities,
    canonical_povm,
    mub_pair,
    random_comb,
    random_tester,
    tester_from_network,
)
from combforge.sampling import random_density
from combforge.testers import povm_signature, probe_signature


def main() -> None:
    rng = np.random.default_rng(4)

    # a single-slot tester with an entangled qubit probe and a sharp
    # readout on probe plus slot output
    probe = HermitianOperator(probe_signature(1, 2, 2), random_density(4, rng))
    h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    _, vecs = np.linalg.eigh(h + h.conj().T)
    msig = povm_signature(1, 2, 2)
    els = [
        HermitianOperator(msig, np.outer(vecs[:, i], vecs[:, i].conj()))
        for i in range(4)
    ]
    tester = tester_from_network(probe, [], Povm(els), slots=1)
    print(f"network tester: {tester!r}")

    comb = random_comb(CombSignature.comb([2, 2]), [], seed=8)
    probs = born_probabilities(tester, comb)
    print(f"outcome distribution {np.round(probs, 4)} "
          f"(sum {probs.sum():.12f})")

    # undoing the tester's own normalization reveals the measurement it
    # effectively performs
    povm = canonical_povm(tester)
    total = sum(e.matrix for e in povm.elements)
    print(f"canonical POVM sums to identity on the support: "
          f"{np.allclose(total, np.eye(4))}")

    sharp = mub_pair()
    print(f"unbiased qubit pair: {sharp.size} testers, "
          f"{sharp.outcomes} outcomes each, dims {sharp.signature.dims}")

    deep = random_tester(CombSignature.tester([2, 2, 2, 2]), [2, 2], 3, rng)
    two_slot_comb = random_comb(CombSignature.comb([2, 2, 2, 2]), [2], seed=9)
    probs = born_probabilities(deep, two_slot_comb)
    print(f"two-slot pairing still normalizes: sum {probs.sum():.12f}")


if __name__ == "__main__":
    main()
