"""Labeled operators and the wire bookkeeping everything else rests on.

Systems are numbered 0, 1, 2, ... with even labels for inputs and odd
labels for outputs. An operator always knows which systems it lives on,
so partial traces and tensor paddings are requested by label instead of
by axis arithmetic.
"""

from __future__ import annotations

import numpy as np

from combforge import (
    CombSignature,
    HermitianOperator,
    embed_identity,
    identity,
    kron_compose,
    partial_trace,
)


def main() -> None:
    sig = CombSignature.comb([2, 3])
    print(f"signature {sig.dims} on systems {sig.indices}, role {sig.role}")

    rho = HermitianOperator(sig.restrict([0]), np.diag([0.75, 0.25]))
    padded = embed_identity(rho, sig)
    print(f"state on system 0 padded to {padded.signature.indices}, "
          f"trace {padded.trace():.3f}")

    back = partial_trace(padded, [1]) * (1.0 / 3.0)
    print(f"tracing system 1 back out returns the state: "
          f"{np.allclose(back.matrix, rho.matrix)}")

    a = HermitianOperator(sig.restrict([1]), np.eye(3) / 3.0)
    # kron_compose sorts by label, so composition order never matters
    left = kron_compose(rho, a)
    right = kron_compose(a, rho)
    print(f"label-sorted tensor products agree: "
          f"{np.allclose(left.matrix, right.matrix)}")

    eye = identity(sig)
    print(f"identity on {sig.dims} has trace {eye.trace():.1f}")


if __name__ == "__main__":
    main()
