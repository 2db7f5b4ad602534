"""Central table of numerical tolerances.

Every tolerance is relative to a Frobenius scale of the matrices involved
unless the name says otherwise.
"""

SYMMETRY_RTOL = 1e-10
ROOT_RTOL = 1e-10
ORTHONORMAL_ATOL = 1e-12
EIG_RESIDUAL_RTOL = 1e-10

PSD_CLAMP_RTOL = 1e-12
PSD_INDEFINITE_RTOL = 1e-8
RANK_RTOL = 1e-10

TRACE_ATOL = 1e-10
ANTISYMMETRY_RTOL = 1e-10
MEMBERSHIP_RTOL = 1e-9
EQUAL_DIAGONAL_RTOL = 1e-10
NU_SEPARATION_RTOL = 1e-8

COV_SINGULAR_RTOL = 1e-12
