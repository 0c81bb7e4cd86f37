"""Experiment configuration and the figure presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import ArrayGeometry

# algorithm labels used throughout the CSV outputs
ALGORITHMS = (
    "2SMUHPA",
    "2SMUHPA-WF",
    "LISA",
    "LC-LISA",
    "H-LISA",
    "LC-H-LISA",
    "H-LISA-AMS",
    "LC-H-LISA-AMS",
    "BD",
    "capacity",
)

DEFAULT_SNR_GRID = tuple(float(x) for x in range(-10, 41, 5))


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of one Monte-Carlo experiment.

    ``n_rf_ms`` is the number of receive RF chains for the ``*-AMS`` variants
    (phase-shifter receivers); ``None`` means one per antenna.
    """

    K: int = 8
    L: int = 1
    bs_array: tuple[int, int] = (8, 8)
    ms_array: tuple[int, int] = (1, 1)
    n_rf: int = 8
    n_rf_ms: Optional[int] = None
    snr_db: tuple[float, ...] = DEFAULT_SNR_GRID
    runs: int = 1000
    seed: int = 0
    algorithms: tuple[str, ...] = ("LISA", "H-LISA")
    dpc_tol: float = 1e-6
    dpc_max_iters: int = 1000
    bin_width: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "bs_array", tuple(int(x) for x in self.bs_array))
        object.__setattr__(self, "ms_array", tuple(int(x) for x in self.ms_array))
        object.__setattr__(self, "snr_db", tuple(float(x) for x in np.atleast_1d(self.snr_db)))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        self.validate()

    def validate(self) -> None:
        if self.K < 1 or self.L < 1:
            raise ConfigError("K and L must be >= 1", "K" if self.K < 1 else "L")
        if len(self.bs_array) != 2 or len(self.ms_array) != 2 or min(self.bs_array + self.ms_array) < 1:
            raise ConfigError("array shapes must be two positive integers", "bs_array")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1", "runs")
        if not self.snr_db:
            raise ConfigError("SNR grid must be non-empty", "snr_db")
        if not 1 <= self.n_rf <= self.n_bs:
            raise ConfigError(f"n_rf must lie in [1, {self.n_bs}]", "n_rf")
        if self.n_rf_ms is not None and not 1 <= self.n_rf_ms <= self.n_ms:
            raise ConfigError(f"n_rf_ms must lie in [1, {self.n_ms}]", "n_rf_ms")
        if not self.algorithms:
            raise ConfigError("algorithm list must be non-empty", "algorithms")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}", "algorithms")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithms", "algorithms")
        if any(a.startswith("2SMUHPA") for a in self.algorithms) and self.K != self.n_rf:
            raise ConfigError("2SMUHPA requires K == n_rf", "algorithms")
        if "BD" in self.algorithms and self.n_rf % self.n_ms:
            raise ConfigError("BD requires n_ms to divide n_rf", "algorithms")
        if self.bin_width <= 0:
            raise ConfigError("bin_width must be positive", "bin_width")

    @property
    def bs_geometry(self) -> ArrayGeometry:
        return ArrayGeometry(*self.bs_array)

    @property
    def ms_geometry(self) -> ArrayGeometry:
        return ArrayGeometry(*self.ms_array)

    @property
    def n_bs(self) -> int:
        return self.bs_array[0] * self.bs_array[1]

    @property
    def n_ms(self) -> int:
        return self.ms_array[0] * self.ms_array[1]

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bs_array"] = list(self.bs_array)
        d["ms_array"] = list(self.ms_array)
        d["snr_db"] = list(self.snr_db)
        d["algorithms"] = list(self.algorithms)
        return d


_LISA_FAMILY = ("LISA", "LC-LISA", "H-LISA", "LC-H-LISA")
_FIG3 = ("2SMUHPA", "2SMUHPA-WF") + _LISA_FAMILY + ("capacity",)

PRESETS: dict[str, ScenarioConfig] = {
    "fig3a": ScenarioConfig(L=1, ms_array=(1, 1), algorithms=_FIG3),
    "fig3b": ScenarioConfig(L=3, ms_array=(1, 1), algorithms=_FIG3),
    "fig4": ScenarioConfig(L=3, ms_array=(1, 1), snr_db=(0.0,), algorithms=("LISA", "H-LISA")),
    "fig6": ScenarioConfig(L=3, ms_array=(2, 1), n_rf_ms=2,
                           algorithms=("2SMUHPA", "2SMUHPA-WF") + _LISA_FAMILY + ("BD", "capacity")),
    "fig7": ScenarioConfig(L=3, ms_array=(4, 4), n_rf_ms=2,
                           algorithms=_FIG3[:-1] + ("H-LISA-AMS", "LC-H-LISA-AMS", "capacity")),
}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
