"""Numerical tolerance ladder used across validators, solvers, and reports.

Exact algebra is checked near machine precision; structural conditions on
physical objects get looser thresholds; optimization values looser still.
Reports embed this table so certified numbers are interpretable.
"""

from __future__ import annotations

ALGEBRA_ATOL = 1e-10  # exact linear-algebra identities
HERMITICITY_RTOL = 1e-9  # relative Hermiticity defect at construction
PSD_FLOOR = -1e-8  # minimum eigenvalue allowed on positive operators
CHANNEL_TOL = 1e-8  # trace-preservation defect of a channel Choi
STATE_TOL = 1e-8  # trace and positivity defect of a density operator
CHAIN_TOL = 1e-7  # recursive trace conditions on combs and testers
PROBABILITY_ATOL = 1e-9  # single Born probability out of range
PROBABILITY_SUM_TOL = 1e-8  # Born probabilities summing to one
STOCHASTIC_ATOL = 1e-12  # columns of classical post-processing tables
SDP_GAP_TOL = 1e-6  # certified relative duality gap
SDP_FEAS_TOL = 1e-8  # certified primal/dual infeasibility
VERDICT_TOL = 1e-6  # R or W considered zero
THEOREM_RTOL = 1e-4  # predicted-versus-played game value ratios


def tolerance_table() -> dict[str, float]:
    return {
        "algebra_atol": ALGEBRA_ATOL,
        "hermiticity_rtol": HERMITICITY_RTOL,
        "psd_floor": PSD_FLOOR,
        "channel_tol": CHANNEL_TOL,
        "state_tol": STATE_TOL,
        "chain_tol": CHAIN_TOL,
        "probability_atol": PROBABILITY_ATOL,
        "probability_sum_tol": PROBABILITY_SUM_TOL,
        "stochastic_atol": STOCHASTIC_ATOL,
        "sdp_gap_tol": SDP_GAP_TOL,
        "sdp_feas_tol": SDP_FEAS_TOL,
        "verdict_tol": VERDICT_TOL,
        "theorem_rtol": THEOREM_RTOL,
    }
