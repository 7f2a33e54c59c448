"""The discrimination game an incompatible collection always wins.

A referee announces an ensemble label, draws a comb from it, and the
player names the comb. Holding the whole collection beats every
single-parent team by the factor 1 + R on the witness deck built from
the robustness dual, and never by more on any deck.
"""

from __future__ import annotations

from combforge import (
    ensemble_from_robustness_dual,
    qcd_value_compatible,
    qcd_value_incompatible,
    random_comb_deck,
    robustness,
    verify_theorem1,
)
from combforge.testers import random_tester_collection
from combforge.systems import CombSignature


def main() -> None:
    # two random 3-outcome qubit measurements, incompatible at this seed
    pair = random_tester_collection(
        2, CombSignature.tester([1, 2]), [1], 3, seed=4
    )
    cert = robustness(pair)
    print(f"collection robustness R = {cert.value:.6f}")

    deck, valid = ensemble_from_robustness_dual(cert)
    value = qcd_value_incompatible(deck, pair)
    floor = qcd_value_compatible(deck)
    print(f"witness deck (comb-valid: {valid}): "
          f"collection {value:.6f} vs best team {floor:.6f}, "
          f"ratio {value / floor:.6f} = 1 + R")

    report = verify_theorem1(pair, cert, bound_samples=10, seed=42)
    print(f"verification: {report.diagnostics}")

    # on an arbitrary deck the advantage exists but need not be extremal
    other = random_comb_deck((1, 2), [2, 2], seed=5)
    ratio = qcd_value_incompatible(other, pair) / qcd_value_compatible(other)
    print(f"random deck ratio {ratio:.6f} <= {1 + cert.value:.6f}")


if __name__ == "__main__":
    main()
