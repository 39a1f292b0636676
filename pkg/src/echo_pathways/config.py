"""Scenario configuration: parameter validation and JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

CONFIG_SCHEMA_VERSION = 1

STRATEGIES = ("random", "structure", "opinion")
BASELINE_MODES = ("paper", "monte_carlo")

# Classification threshold on the pathway index: segregation-first above,
# polarization-first below.
PATHWAY_SPLIT = 0.6


class ConfigError(ValueError):
    """Invalid scenario or sweep configuration; carries the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ScenarioConfig:
    """Full parameterization of a single run."""

    n: int = 500
    k_o: float = 15.0            # mean out-degree of the initial network
    epsilon: float = 0.45        # confidence boundary
    alpha: float = 0.05          # influence strength
    q: float = 0.025             # rewiring probability
    p: float = 0.0               # repost probability
    k_R: int = 10                # recommendation slate size
    k_h: int = 0                 # recommender memory window (steps)
    strategy: str = "random"
    max_steps: int = 20_000
    quiet_steps: int = 60        # consecutive quiet steps required to stop
    opinion_tol: float = 1e-7
    seed: int = 0
    baseline_formula: str = "paper"

    def validate(self) -> "ScenarioConfig":
        if not isinstance(self.n, int) or self.n < 2:
            raise ConfigError("n", f"need an integer >= 2, got {self.n!r}")
        if not 0 < self.k_o <= self.n - 1:
            raise ConfigError("k_o", f"need 0 < k_o <= n-1, got {self.k_o!r}")
        if not 0 < self.epsilon <= 2:
            raise ConfigError("epsilon", f"need epsilon in (0, 2], got {self.epsilon!r}")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha", f"need alpha in [0, 1], got {self.alpha!r}")
        if not 0 <= self.q <= 1:
            raise ConfigError("q", f"need q in [0, 1], got {self.q!r}")
        if not 0 <= self.p <= 1:
            raise ConfigError("p", f"need p in [0, 1], got {self.p!r}")
        if not isinstance(self.k_R, int) or self.k_R < 1:
            raise ConfigError("k_R", f"need an integer >= 1, got {self.k_R!r}")
        if not isinstance(self.k_h, int) or self.k_h < 0:
            raise ConfigError("k_h", f"need an integer >= 0, got {self.k_h!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"need one of {STRATEGIES}, got {self.strategy!r}")
        if not isinstance(self.max_steps, int) or self.max_steps < 1:
            raise ConfigError("max_steps", f"need an integer >= 1, got {self.max_steps!r}")
        if not isinstance(self.quiet_steps, int) or self.quiet_steps < 1:
            raise ConfigError("quiet_steps", f"need an integer >= 1, got {self.quiet_steps!r}")
        if not self.opinion_tol > 0:
            raise ConfigError("opinion_tol", f"need a positive tolerance, got {self.opinion_tol!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", f"need an integer, got {self.seed!r}")
        if self.baseline_formula not in BASELINE_MODES:
            raise ConfigError(
                "baseline_formula", f"need one of {BASELINE_MODES}, got {self.baseline_formula!r}"
            )
        return self

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        for key in overrides:
            if key not in self.__dataclass_fields__:
                raise ConfigError(key, "unknown scenario key")
        return replace(self, **overrides).validate()

    def to_json_dict(self) -> dict:
        d = {"schema_version": CONFIG_SCHEMA_VERSION}
        d.update(asdict(self))
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        data.pop("schema_version", None)
        fields = cls.__dataclass_fields__
        for key in data:
            if key not in fields:
                raise ConfigError(key, "unknown scenario key")
        # epsilon has no universal default worth trusting silently; require it
        # in external config documents (all other keys fall back to defaults).
        if "epsilon" not in data:
            raise ConfigError("epsilon", "missing required key")
        cfg = cls(**data)
        return cfg.validate()

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("<file>", "top level must be a JSON object")
        return cls.from_json_dict(data)


def parse_override(text: str) -> tuple[str, object]:
    """Parse one ``key=value`` CLI override with JSON-style value coercion."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    raw = raw.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings (e.g. strategy=opinion)
    return key, value
