"""The exclusion game, where incompatibility lowers the error floor.

The player now wins by naming a comb that was NOT sent; the error is
the probability of naming the prepared one (outcome b counts against
comb b). An incompatible collection drives the error down to the
fraction 1 - W of the best compatible team's floor on the witness deck
built from the weight dual, and never below that fraction elsewhere.
"""

from __future__ import annotations

from combforge import (
    convex_weight,
    ensemble_from_weight_witness,
    exclusion_value,
    exclusion_value_compatible,
    random_comb_deck,
    verify_theorem2,
)
from combforge.systems import CombSignature
from combforge.testers import random_tester_collection


def main() -> None:
    pair = random_tester_collection(
        2, CombSignature.tester([1, 2]), [1], 3, seed=4
    )
    cert = convex_weight(pair)
    print(f"collection convex weight W = {cert.value:.6f}")

    deck, valid = ensemble_from_weight_witness(cert)
    error = exclusion_value(deck, pair)
    floor = exclusion_value_compatible(deck)
    print(f"witness deck (comb-valid: {valid}): "
          f"collection error {error:.6f} vs compatible floor {floor:.6f}, "
          f"ratio {error / floor:.6f} = 1 - W")

    report = verify_theorem2(pair, cert, bound_samples=10, seed=42)
    print(f"verification: {report.diagnostics}")

    # the announced label fixes which tester is used; the relaxed mode
    # lets the player pick the best member instead, and can only help
    other = random_comb_deck((1, 2), [3, 2], seed=6)
    fixed = exclusion_value(other, pair)
    relaxed = exclusion_value(other, pair, relaxed=True)
    print(f"random deck: announced-label error {fixed:.6f}, "
          f"relaxed {relaxed:.6f} (relaxed <= fixed: {relaxed <= fixed + 1e-12})")


if __name__ == "__main__":
    main()
