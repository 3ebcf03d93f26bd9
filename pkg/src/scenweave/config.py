"""Run configuration and seeded substreams for the batch harness.

A run is reproducible from the RunConfig plus the shipped knowledge base and
road library: every random choice draws from a substream derived by hashing
the root seed with a stable name path, so adding or reordering scenarios
never shifts another scenario's randomness.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field


def derive_seed(root: int, *names: str) -> int:
    """Stable 63-bit substream seed for a named component of a run."""
    key = str(int(root)) + "/" + "/".join(names)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# The eight shipped base scenario prompts. Wording is aligned with the
# pre-crash typology entries in the knowledge base so retrieval grounds
# each prompt in the intended skeleton.
BASE_PROMPTS: tuple[tuple[str, str], ...] = (
    ("occluded-pedestrian",
     "a pedestrian darts out from behind a truck parked on the right shoulder"),
    ("midblock-crossing",
     "a person on foot crosses the road mid-block away from any crosswalk"),
    ("red-light-runner",
     "a car runs the red signal at the intersection and crosses the junction box"),
    ("left-turn-gap",
     "an oncoming car turns left across the path of the through vehicle"),
    ("junction-cyclist",
     "a cyclist rides across the junction box from the right as the ego crosses the intersection"),
    ("occluded-junction",
     "a hidden pedestrian steps into the crossing from behind a parked truck near the intersection"),
    ("driveway-truck",
     "a truck noses out of a concealed driveway entrance on the right into traffic"),
    ("adjacent-cut-in",
     "the car in the adjacent lane swerves and cuts into the ego lane with a small gap"),
)


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run needs; serializes to one JSON object."""

    seed: int = 0
    n_seeds: int = 10
    flow_n: int = 10
    n_frames: int = 200
    dt: float = 0.1
    backend: str = "template"
    gamma: float = 0.8
    k: int = 4
    ratio: float = 0.6
    lambda1: float = 0.3
    lambda2: float = 0.2
    lambda3: float = 0.5
    stage: str = "adversarial"
    jobs: int = 1
    out_dir: str = "runs"
    prompts: tuple[tuple[str, str], ...] = field(default=BASE_PROMPTS)

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        object.__setattr__(self, "prompts",
                           tuple((str(a), str(b)) for a, b in self.prompts))

    def to_json(self) -> str:
        d = asdict(self)
        d["prompts"] = [list(p) for p in self.prompts]
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        d["prompts"] = tuple(tuple(p) for p in d.get("prompts", BASE_PROMPTS))
        return cls(**d)
