EPS_MIN = 0.1
EPS_MAX = 2.0

GRAVITY_MPS2 = 9.81
DEPTH_SENTINEL_M = 2.0
DEPTH_GRID = 32

PGM_SCALE = 10_000
DATASET_FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"GFPL"
CHECKPOINT_VERSION = 1

DIVERGENCE_PENALTY = -10.0
