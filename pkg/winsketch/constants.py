import sys
from enum import Enum

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # pragma: no cover - equivalent of enum.StrEnum for Python 3.10

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from pathlib import Path

CFG_DIR: Path = Path.home() / ".winsketch"
FILE_PROFILES = CFG_DIR / "profiles.json"

# 2^61 - 1, the Mersenne prime used by the polynomial hash family
MERSENNE_61 = (1 << 61) - 1

# shift vectors are quantized to multiples of 2^-SHIFT_BITS * Delta
SHIFT_BITS = 30

# exact solver caps per diversity function
HELD_KARP_CAP = 12
T_CYCLES_CAP = 10
BIPARTITION_CAP = 14
MATCHING_CAP = 10

ORACLE_ENUMERATION_CAP = 1_000_000


class Status(StrEnum):
    OK = "ok"
    FAIL = "fail"


class Problem(StrEnum):
    ONES = "ones"
    MEDIAN = "median"
    KCOVER = "kcover"
    DIVERSITY = "diversity"
    CLUSTER = "cluster"


class DiversityKind(StrEnum):
    EDGE = "remote-edge"
    CLIQUE = "remote-clique"
    TREE = "remote-tree"
    CYCLE = "remote-cycle"
    T_TREES = "remote-t-trees"
    T_CYCLES = "remote-t-cycles"
    STAR = "remote-star"
    BIPARTITION = "remote-bipartition"
    PSEUDOFOREST = "remote-pseudoforest"
    MATCHING = "remote-matching"


class CoverRecovery(StrEnum):
    EXACT = "exact"
    GREEDY = "greedy"


class HashMode(StrEnum):
    PRF = "prf"
    KWISE = "kwise"


class DivSolver(StrEnum):
    EXACT = "exact"
    GREEDY = "greedy"


class ClusterMethod(StrEnum):
    EXHAUSTIVE = "exhaustive-candidates"
    LOCAL_SEARCH = "local-search"
    LLOYD = "lloyd"


class StreamKind(StrEnum):
    BITS = "bits"
    EDGES = "edges"
    MIXTURE = "mixture"
    COVER_COUNTEREXAMPLE = "cover-counterexample"
    DIVERSITY_COUNTEREXAMPLE = "diversity-counterexample"
