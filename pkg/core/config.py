"""Default configuration values."""

# Numerical tolerances
PROBABILITY_SUM_TOLERANCE = 1e-9   # Row-stochasticity check for MDPs and policies
ACTION_SET_TOLERANCE = 1e-9        # Oracle argmax extraction
VALUE_ITERATION_TOLERANCE = 1e-12  # Sup-norm residual for probability value iteration
LINEAR_SOLVE_TOLERANCE = 1e-12     # Reported residual bound for exact chain solves
MAX_VALUE_ITERATIONS = 1_000_000   # Hard cap, logged as a warning when hit
MAX_POLICY_ITERATIONS = 10_000

# Automata
SAFETY_STATE_CAP = 10_000          # Formula-progression state cap before asking for HOA
HOA_EPSILON_TOKEN = "eps"          # Reserved HOA label token for ε-edges: [eps]
EPSILON_ACTION_PREFIX = "eps_"     # Product action name of ε_q is eps_<q>

# Grid worlds
MOVE_NAMES = ("up", "down", "right", "left")
MOVE_DELTAS = {
    "up": (-1, 0),
    "down": (1, 0),
    "right": (0, 1),
    "left": (0, -1),
}
# Orthogonal directions for each move: (left-hand side, right-hand side)
MOVE_ORTHOGONALS = {
    "up": ("left", "right"),
    "down": ("right", "left"),
    "right": ("up", "down"),
    "left": ("down", "up"),
}
MOVE_ARROWS = {"up": "^", "down": "v", "right": ">", "left": "<"}
DEFAULT_SLIP = (0.8, 0.1, 0.1)

# Case-study hyperparameters
DEFAULT_GAMMA = 0.99
CASE_STUDY_R_SAFETY = 0.0001
CASE_STUDY_R_LTL = 0.01
CASE_STUDY_DECAY_START = 0.5       # alpha, tau_safety, tau_ltl, upsilon start here
CASE_STUDY_DECAY_END = 0.05        # ... and decrease to here
CASE_STUDY_EPSILON_START = 0.5
CASE_STUDY_EPSILON_END = 0.005

# Episode budgets
DESK_SCALE_EPISODES = 2048
DESK_SCALE_HORIZON = 200
FULL_SCALE_EPISODES = 128 * 1024
FULL_SCALE_HORIZON = 1024

# Learner bookkeeping
STATS_EVERY = 64                   # Episodes per stats row
EVALUATION_EPISODES = 1000
CHECKPOINT_VERSION = 1
CHECKPOINT_FORMAT = "lexrl-checkpoint"

# Artifact file names inside a run directory
CHECKPOINT_FILE = "checkpoint.json"
STATS_FILE = "stats.csv"
POLICY_FILE = "policy.json"
MANIFEST_FILE = "manifest.json"
VERIFY_FILE = "verify.json"
ORACLE_FILE = "oracle.json"
RENDER_TEXT_FILE = "policy.txt"
RENDER_SVG_FILE = "policy.svg"
RENDER_CSV_FILE = "policy.csv"

# Render
VALUE_SHADE_BUCKETS = 5            # Number of blue shades for value bucketing

# Viewer
DEFAULT_RUNS_ROOT = "runs"
