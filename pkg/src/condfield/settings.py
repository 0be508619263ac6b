"""Default tolerances and budgets.  Every function taking one of these as a
keyword argument uses the value here when it is omitted."""

# normalization of a probability table
TAU_NORM = 1e-12
# identity checks and round trips
TAU_EQ = 1e-10
# above this magnitude comparisons are relative, below it absolute
RELATIVE_FLOOR = 1e-8

# identity evaluations per check before switching to stratified sampling
WORK_BUDGET = 10**7
# joint states |X|^|master| accepted when materializing specification tables
MAX_JOINT_STATES = 2**20
# total float entries across all tables of one specification
MAX_TABLE_ENTRIES = 2**26

# reconstruction cross-checks: all probes up to PROBE_LIMIT, else a seeded sample
PROBE_LIMIT = 10**4
PROBE_SAMPLES = 32
# enumeration orders checked exhaustively up to this many points
ORDER_LIMIT = 4
ORDER_SAMPLES = 24
