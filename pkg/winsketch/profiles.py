import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from winsketch.constants import FILE_PROFILES

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Profile:
    """
    Constants used by the sketch constructions.

    The `theory` profile carries the constants of the analysis. They make sampling
    vacuous (every rate is 1) or memory bound (replica counts) on windows of a few
    hundred items, so `desk` replaces them with smaller values.
    """

    name: str
    # count-of-ones and toy 1-median: p = min(c ln(1/delta) / (eps^2 o), 1)
    toy_rate: float = 10.0
    # k-cover: the sampling rate and the space cap are divided by these
    kcover_rate_divisor: float = 1.0
    kcover_space_divisor: float = 1.0
    # diversity: multiplier on the space cap, budget of the exact solver
    div_space_scale: float = 1.0
    div_exact_budget: int = 200_000
    # clustering
    cluster_z_rate: float = 1e6
    cluster_zp_rate: float = 1e6
    cluster_zpp_rate: float = 2000.0
    cluster_threshold: float = 10.0
    cluster_m_rate: float = 1000.0
    cluster_mhat_rate: float = 1e9
    cluster_max_replicas: int = 1 << 24
    cluster_space_scale: float = 1e7
    cluster_level_slack: int = 10
    cluster_exact_budget: int = 200_000
    jl_constant: float = 1.0
    memory_limit_mb: float = 1024.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


THEORY = Profile(name="theory")

DESK = Profile(
    name="desk",
    kcover_rate_divisor=20.0,
    kcover_space_divisor=1000.0,
    cluster_z_rate=20.0,
    cluster_zp_rate=20.0,
    cluster_zpp_rate=0.05,
    cluster_m_rate=0.05,
    cluster_mhat_rate=3e-5,
    cluster_max_replicas=1 << 14,
    cluster_space_scale=1.0,
)


class ProfileRegistry:
    """
    Singleton registry of constant profiles.
    """

    _instance = None

    def __new__(cls) -> "ProfileRegistry":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self) -> None:
        if self._initialized:
            return
        self._initialized = True

        self._profiles: dict[str, Profile] = {}
        self._load_profiles()

    def _load_profiles(self) -> None:
        profiles = {THEORY.name: THEORY, DESK.name: DESK}
        profiles.update(load_profiles(FILE_PROFILES, profiles))
        self._profiles = profiles

    def names(self) -> list[str]:
        return sorted(self._profiles)

    def get(self, name: str) -> Profile:
        if name not in self._profiles:
            raise ValueError(
                f"Unknown profile {name!r}, expected one of {', '.join(self.names())}."
            )
        return self._profiles[name]


def load_profiles(path: Path, base: dict[str, Profile]) -> dict[str, Profile]:
    """
    Load profile overrides from a JSON file.

    Args:
        path (Path): file mapping profile names to field overrides.
        base (dict[str, Profile]): profiles to override; new names derive from desk.

    Returns:
        dict[str, Profile]: the overridden or new profiles.
    """
    if not path.is_file():
        LOGGER.debug(f"No profile overrides at {path}.")
        return {}

    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError):
        LOGGER.error(f"Unable to read profile overrides from {path}.", exc_info=True)
        return {}

    known = {f.name for f in fields(Profile)}
    profiles = {}
    for name, overrides in data.items():
        unknown = set(overrides) - known
        if unknown:
            LOGGER.error(f"Ignoring unknown fields {sorted(unknown)} in profile {name}.")
        values = {key: value for key, value in overrides.items() if key in known}
        values["name"] = name
        profiles[name] = replace(base.get(name, DESK), **values)
    return profiles
