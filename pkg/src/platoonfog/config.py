"""Model parameters and the flat ``key = value`` config-file format.

Units are SI throughout: seconds for durations, cycles/second for computing
rates, bits for frame sizes, bits/second for the channel rate.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised for malformed config files; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class DcfParams:
    """Channel-access parameters for the contention-based MAC delay model."""

    w_min: int = 3                    # minimum contention window, slots
    m: int = 1                        # retransmission limit
    t_idle: float = 20e-6             # idle slot duration, s
    delta: float = 2e-6               # propagation delay, s
    difs: float = 50e-6
    sifs: float = 10e-6
    header_bits: float = 400.0
    payload_bits: float = 8 * 1920.0  # mean task length, bits
    ack_bits: float = 240.0
    ack_timeout_bits: float = 292.0
    bit_rate: float = 6e6             # converts bit quantities into seconds

    def __post_init__(self):
        if self.w_min < 1:
            raise ValueError("w_min must be >= 1")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        for name in ("t_idle", "delta", "difs", "sifs", "bit_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("header_bits", "payload_bits", "ack_bits", "ack_timeout_bits"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of the offloading system.

    Defaults reproduce the baseline operating point used by the bundled
    experiments (4-vehicle platoon, up to 6 fog vehicles, 3 resource units
    per task).
    """

    n_platoon: int = 4                                     # platoon size N
    f_platoon: tuple = (600.0, 660.0, 620.0, 650.0)        # per-vehicle rates, cycles/s
    f_ru: float = 350.0                                    # resource-unit rate, cycles/s
    k_max: int = 6                                         # max fog fleet size K
    n_r: int = 3                                           # max RUs per task
    lambda_p: float = 20.0                                 # task arrivals per vehicle, 1/s
    lambda_v: float = 9.0                                  # fog vehicle arrivals, 1/s
    mu_v: float = 8.0                                      # fog vehicle departures, 1/s
    d: float = 40.0                                        # cycles per task
    e_l: float = 0.1                                       # local-processing delay, s
    eta: float = 5.0                                       # reward per second of saved delay
    zeta: float = 28.0                                     # penalty for a lost task
    alpha: float = 0.1                                     # continuous-time discount rate, 1/s
    epsilon: float = 10.0                                  # value-iteration stopping scale
    dcf: DcfParams = field(default_factory=DcfParams)

    def __post_init__(self):
        object.__setattr__(self, "f_platoon", tuple(float(f) for f in self.f_platoon))
        if self.n_platoon < 1:
            raise ValueError("n_platoon must be >= 1")
        if len(self.f_platoon) != self.n_platoon:
            raise ValueError(
                f"f_platoon has {len(self.f_platoon)} entries, expected {self.n_platoon}"
            )
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if self.n_r > self.k_max:
            raise ValueError("n_r must not exceed k_max")
        for name in ("f_ru", "lambda_p", "lambda_v", "mu_v", "d", "e_l", "eta",
                     "zeta", "alpha", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for f in self.f_platoon:
            if f <= self.f_ru:
                raise ValueError("every platoon computing rate must exceed f_ru")


def default_config(**overrides) -> SystemConfig:
    """Baseline config; keyword overrides are applied on top."""
    return dataclasses.replace(SystemConfig(), **overrides) if overrides else SystemConfig()


_INT_FIELDS = {"n_platoon", "k_max", "n_r", "dcf.w_min", "dcf.m"}


def _known_keys():
    keys = {f.name for f in dataclasses.fields(SystemConfig) if f.name != "dcf"}
    keys |= {f"dcf.{f.name}" for f in dataclasses.fields(DcfParams)}
    return keys


def parse_config(text: str) -> SystemConfig:
    """Parse the flat config format: one ``key = value`` per line, ``#`` comments.

    Unknown keys are errors. Missing keys fall back to the defaults.
    ``f_platoon`` is a comma-separated list; MAC-layer keys carry a ``dcf.``
    prefix.
    """
    known = _known_keys()
    top: dict = {}
    dcf: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            if key == "f_platoon":
                parsed = tuple(float(tok) for tok in value.split(","))
            elif key in _INT_FIELDS:
                parsed = int(value)
            else:
                parsed = float(value)
        except ValueError:
            raise ConfigError(f"bad value {value!r} for key {key!r}", lineno) from None
        if key.startswith("dcf."):
            dcf[key[4:]] = parsed
        else:
            top[key] = parsed
    if dcf:
        top["dcf"] = DcfParams(**dcf)
    return SystemConfig(**top)


def load_config(path) -> SystemConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
