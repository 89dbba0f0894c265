"""Run configuration: ``key = value`` text files with command-line overrides."""

import dataclasses
from dataclasses import dataclass, fields

from .kernels.volume import KernelVariant
from .mesh import Boundary

MODES = ("run", "benchmark")
CASES = ("rising_bubble_sharp", "rising_bubble_smooth", "constant_state", "entropy_test", "baroclinic_channel")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    case: str = "rising_bubble_sharp"
    mode: str = "run"
    N: int = 4
    L: int = 3
    Kx: int = 1
    Ky: int = 1
    Kz: int = 1
    x_lo: float = -1000.0
    x_hi: float = 1000.0
    y_lo: float = -1000.0
    y_hi: float = 1000.0
    z_lo: float = 0.0
    z_hi: float = 2000.0
    bc_x: str = "periodic"
    bc_y: str = "periodic"
    bc_z: str = "reflecting"
    precision: int = 64
    variant: str = "balanced"
    contravariant: str = "auto"
    dissipation: bool = True
    gravity: float = 9.81
    ranks: int = 1
    courant: float = 0.5
    dt_override: float = 0.0
    recompute_dt: bool = False
    nsteps: int = 10
    t_final: float = 0.0
    output_every: int = 0
    slice_every: int = 0
    output_dir: str = "output"
    f0: float = 0.0
    beta: float = 0.0
    y0: float = 0.0
    seed: int = 0
    repeats: int = 5
    warmups: int = 2
    peak_gflops: float = 9746.0
    peak_gbytes: float = 1560.0
    tdp_watts: float = 400.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {', '.join(CASES)}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.N < 1 or self.N > 32:
            raise ConfigError(f"N must be in 1..32, got {self.N}")
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        if min(self.Kx, self.Ky, self.Kz) < 1:
            raise ConfigError("base element counts must be >= 1")
        for a in "xyz":
            if not getattr(self, f"{a}_hi") > getattr(self, f"{a}_lo"):
                raise ConfigError(f"empty {a} extent")
            try:
                Boundary(getattr(self, f"bc_{a}"))
            except ValueError:
                raise ConfigError(f"bc_{a} must be periodic or reflecting") from None
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64")
        try:
            KernelVariant(self.variant)
        except ValueError:
            raise ConfigError(f"unknown kernel variant {self.variant!r}") from None
        if self.contravariant not in ("auto", "on", "off"):
            raise ConfigError("contravariant must be auto, on or off")
        if self.ranks < 1 or self.ranks > self.num_elements:
            raise ConfigError(f"ranks must be in 1..{self.num_elements}")
        if self.dt_override < 0 or self.courant <= 0:
            raise ConfigError("courant must be positive and dt_override non-negative")
        if self.nsteps < 0 or self.t_final < 0 or self.output_every < 0 or self.slice_every < 0:
            raise ConfigError("step counts, t_final and cadences must be non-negative")
        if self.repeats < 1 or self.warmups < 0:
            raise ConfigError("repeats must be >= 1 and warmups >= 0")

    @property
    def num_elements(self):
        return self.Kx * self.Ky * self.Kz * 8**self.L

    @property
    def dof(self):
        return self.num_elements * (self.N + 1) ** 3

    @property
    def dtype_name(self):
        return "float32" if self.precision == 32 else "float64"

    def contravariant_flag(self):
        return None if self.contravariant == "auto" else self.contravariant == "on"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))


CASE_DEFAULTS = {
    "constant_state": dict(x_lo=0.0, x_hi=1000.0, y_lo=0.0, y_hi=1000.0, z_lo=0.0, z_hi=1000.0,
                           bc_z="periodic", gravity=0.0, L=1),
    "entropy_test": dict(x_lo=0.0, x_hi=1000.0, y_lo=0.0, y_hi=1000.0, z_lo=0.0, z_hi=1000.0,
                         bc_z="periodic", dissipation=False, L=1),
    "baroclinic_channel": dict(x_lo=0.0, x_hi=4.0e7, y_lo=0.0, y_hi=6.0e6, z_lo=0.0, z_hi=3.0e4,
                               bc_y="reflecting", bc_z="reflecting", Kx=12, Ky=2, Kz=1, L=3,
                               f0=1.0e-4, beta=1.6e-11, y0=3.0e6),
}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(name, text):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown configuration key {name!r}")
    kind = types[name]
    text = text.strip()
    try:
        if kind in (bool, "bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text


def parse_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = _convert(key, value)
    return values


def build_config(values=None, overrides=None):
    """Case defaults, then file values, then overrides."""
    merged = dict(values or {})
    merged.update(overrides or {})
    case = merged.get("case", RunConfig.case)
    base = dict(CASE_DEFAULTS.get(case, {}))
    base.update(merged)
    try:
        return RunConfig(**base)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        values = parse_text(fh.read())
    return build_config(values, overrides)


def parse_overrides(pairs):
    """``[('--nsteps', '5'), ...]`` or ``['--nsteps', '5', ...]`` to typed values."""
    if pairs and isinstance(pairs[0], str):
        if len(pairs) % 2:
            raise ConfigError(f"override {pairs[-1]!r} has no value")
        pairs = list(zip(pairs[::2], pairs[1::2]))
    out = {}
    for flag, value in pairs:
        if not flag.startswith("--"):
            raise ConfigError(f"expected --key, got {flag!r}")
        key = flag[2:].replace("-", "_")
        out[key] = _convert(key, value)
    return out
