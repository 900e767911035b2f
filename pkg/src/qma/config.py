"""Experiment configuration: a flat ``key = value`` text file.

Blank lines and lines starting with ``#`` are ignored.  Keys::

    mode              identities | diagonalize | solve | estimates | full
    n                 quaternionic dimension (1 or 2 for solve/estimates)
    active            1-based active coordinates (default n=1: ``1``; n=2: ``1,5``)
    N                 points per active axis (even, >= 4)
    F                 harmonics ``coord:freq:amp:phase`` separated by ``;``
                      (default n=1: ``1:1:0.1:0``; n=2: ``1:1:0.5:0; 5:1:0.5:0``)
    F_file            field file to read F from (overrides ``F``)
    q                 Lebesgue exponent, must exceed 2n (default 4n)
    seed              integer seed for every random draw
    out               output directory
    trials            random instances per n in the diagonalisation suite
    lemma2_instances  random instances in the pointwise coefficient suite
    operator_fields   random fields in the operator suite
    family_size       held-out instances in the estimate study
    scales            scale factors for the scaled family, e.g. ``0.5,1,2``
    refine            true/false: refit constants on the doubled grid
    continuity_steps, newton_tol, max_newton, damping, linear_tol
                      solver settings
    residual_tol      density residual accepted by ``solve``
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

MODES = ("identities", "diagonalize", "solve", "estimates", "full")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _default_active(n: int) -> tuple:
    return (1, 5) if n >= 2 else (1,)


def _default_harmonics(n: int) -> tuple:
    if n >= 2:
        return ((1, 1, 0.5, 0.0), (5, 1, 0.5, 0.0))
    return ((1, 1, 0.1, 0.0),)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "full"
    n: int = 2
    active: tuple | None = None
    N: int = 64
    F: tuple | None = None
    F_file: str | None = None
    q: float | None = None
    seed: int = 0
    out: str = "out"
    trials: int = 1000
    lemma2_instances: int = 10000
    operator_fields: int = 100
    family_size: int = 5
    scales: tuple = (0.5, 1.0, 2.0)
    refine: bool = True
    continuity_steps: int = 10
    newton_tol: float = 1e-12
    max_newton: int = 30
    damping: float = 1.0
    linear_tol: float = 1e-12
    residual_tol: float = 1e-8

    @property
    def active_labels(self) -> tuple:
        return self.active if self.active is not None else _default_active(self.n)

    @property
    def harmonics(self) -> tuple:
        return self.F if self.F is not None else _default_harmonics(self.n)

    @property
    def exponent(self) -> float:
        return self.q if self.q is not None else 4.0 * self.n

    def validate(self) -> ExperimentConfig:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}", "mode")
        if self.n < 1:
            raise ConfigError("n must be positive", "n")
        if self.mode in ("solve", "estimates", "full") and self.n > 2:
            raise ConfigError("solve and estimates support n in {1, 2}", "n")
        if self.N < 4 or self.N % 2:
            raise ConfigError("N must be even and at least 4", "N")
        if not self.active_labels or any(not 1 <= c <= 4 * self.n for c in self.active_labels):
            raise ConfigError(f"active coordinates must lie in 1..{4 * self.n}", "active")
        if self.mode in ("estimates", "full") and not self.exponent > 2 * self.n:
            raise ConfigError(f"q must exceed 2n = {2 * self.n}", "q")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", "seed")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]", "damping")
        for c, *_ in self.harmonics:
            if c not in self.active_labels:
                raise ConfigError(f"harmonic on x{c} but x{c} is not active", "F")
        return self


def _parse_harmonics(text: str) -> tuple:
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 4:
            raise ValueError(f"harmonic {item!r} must be coord:freq:amp:phase")
        out.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
    return tuple(out)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_tuple(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float_tuple(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


_PARSERS = {
    "mode": str.strip,
    "n": int,
    "active": _int_tuple,
    "N": int,
    "F": _parse_harmonics,
    "F_file": str.strip,
    "q": float,
    "seed": int,
    "out": str.strip,
    "trials": int,
    "lemma2_instances": int,
    "operator_fields": int,
    "family_size": int,
    "scales": _float_tuple,
    "refine": _parse_bool,
    "continuity_steps": int,
    "newton_tol": float,
    "max_newton": int,
    "damping": float,
    "linear_tol": float,
    "residual_tol": float,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse ``key = value`` lines; errors name the file and line.

    Raises:
        ConfigError: unknown or repeated key, bad value, or failed validation.
    """
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: key {key!r} repeated (first on line {lines[key]})")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    cfg = ExperimentConfig(**values)
    try:
        return cfg.validate()
    except ConfigError as exc:
        where = lines.get(exc.key, "-")
        raise ConfigError(f"{source}:{where}: {exc}", exc.key) from None


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_config(text, str(path))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return replace(cfg, **kw).validate()
    except ConfigError as exc:
        raise ConfigError(f"command line: {exc}", exc.key) from None
