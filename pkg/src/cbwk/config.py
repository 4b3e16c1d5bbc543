"""Text formats: experiment configs and problem-instance files.

Both use one line-based syntax: ``key = value`` scalars, ``key:`` headers
opening a matrix block whose following lines are whitespace-separated
number rows (a blank line or the next key closes the block), and ``#``
comments.  Parsing is strict -- unknown keys, duplicate keys, and malformed
lines are reported with their line number -- and configs written by
``save_config`` reload to an identical value.

Instance files describe finite environments with explicit matrices; for
continuous factor spaces they name a registered analytic density and give
per-context polynomial coefficients for the reward and consumption
functions (one-dimensional factors only; richer spaces are built in code).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .model import FiniteContextSpace, FiniteFactorSpace, ProblemInstance
from .presets import DENSITIES, PRESETS, make_preset


class ConfigError(ValueError):
    """Malformed or invalid config/instance file."""


@dataclass(frozen=True)
class _Entry:
    kind: str  # "scalar" | "block"
    value: str | tuple[str, ...]
    line: int


def _read_entries(path: Path) -> dict[str, _Entry]:
    entries: dict[str, _Entry] = {}
    block_key = None
    block_rows: list[str] = []

    def close_block():
        nonlocal block_key, block_rows
        if block_key is not None:
            entries[block_key] = _Entry("block", tuple(block_rows), entries[block_key].line)
            block_key = None
            block_rows = []

    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            close_block()
            continue
        stripped = line.strip()
        if "=" in stripped:
            close_block()
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key in entries:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            entries[key] = _Entry("scalar", value.strip(), lineno)
        elif stripped.endswith(":"):
            close_block()
            key = stripped[:-1].strip()
            if key in entries:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            entries[key] = _Entry("block", (), lineno)
            block_key = key
        elif block_key is not None:
            block_rows.append(stripped)
        else:
            raise ConfigError(
                f"{path}:{lineno}: expected 'key = value' or 'key:' block header"
            )
    close_block()
    return entries


class _Reader:
    """Typed accessors over parsed entries with consumed-key tracking."""

    def __init__(self, path: Path, entries: dict[str, _Entry]):
        self.path = path
        self.entries = entries
        self.used: set[str] = set()

    def _take(self, key: str, required: bool) -> _Entry | None:
        entry = self.entries.get(key)
        if entry is None:
            if required:
                raise ConfigError(f"{self.path}: missing required key {key!r}")
            return None
        self.used.add(key)
        return entry

    def scalar(self, key: str, required: bool = True) -> tuple[str, int] | None:
        entry = self._take(key, required)
        if entry is None:
            return None
        if entry.kind != "scalar":
            raise ConfigError(f"{self.path}:{entry.line}: {key!r} must be 'key = value'")
        return entry.value, entry.line

    def _convert(self, key: str, conv, text: str, line: int):
        try:
            return conv(text)
        except ValueError:
            raise ConfigError(
                f"{self.path}:{line}: cannot parse value {text!r} for {key!r}"
            ) from None

    def integer(self, key: str, default=None, required: bool = True):
        got = self.scalar(key, required=required and default is None)
        if got is None:
            return default
        return self._convert(key, int, *got)

    def number(self, key: str, default=None, required: bool = True):
        got = self.scalar(key, required=required and default is None)
        if got is None:
            return default
        return self._convert(key, float, *got)

    def text(self, key: str, default=None, required: bool = True):
        got = self.scalar(key, required=required and default is None)
        if got is None:
            return default
        return got[0]

    def boolean(self, key: str, default: bool) -> bool:
        got = self.scalar(key, required=False)
        if got is None:
            return default
        value, line = got
        if value not in ("true", "false"):
            raise ConfigError(f"{self.path}:{line}: {key!r} must be 'true' or 'false'")
        return value == "true"

    def numbers(self, key: str, required: bool = True):
        got = self.scalar(key, required=required)
        if got is None:
            return None
        value, line = got
        return np.array([self._convert(key, float, tok, line) for tok in value.split()])

    def integers(self, key: str) -> tuple[int, ...]:
        value, line = self.scalar(key)
        return tuple(self._convert(key, int, tok, line) for tok in value.split())

    def matrix(self, key: str, rows: int, cols: int | None = None) -> np.ndarray:
        entry = self._take(key, required=True)
        if entry.kind != "block":
            raise ConfigError(
                f"{self.path}:{entry.line}: {key!r} must be a 'key:' matrix block"
            )
        parsed = []
        for row in entry.value:
            parsed.append([self._convert(key, float, tok, entry.line) for tok in row.split()])
        if len(parsed) != rows:
            raise ConfigError(
                f"{self.path}:{entry.line}: block {key!r} has {len(parsed)} rows, expected {rows}"
            )
        width = cols if cols is not None else (len(parsed[0]) if parsed else 0)
        for r in parsed:
            if len(r) != width:
                raise ConfigError(
                    f"{self.path}:{entry.line}: block {key!r} rows differ in length"
                )
        return np.array(parsed)

    def finish(self):
        unknown = sorted(set(self.entries) - self.used)
        if unknown:
            locs = ", ".join(f"{k!r} (line {self.entries[k].line})" for k in unknown)
            raise ConfigError(f"{self.path}: unknown keys: {locs}")


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------


def _polynomial_reward(coeffs: np.ndarray):
    def fn(k: int, pts: np.ndarray) -> np.ndarray:
        x = np.asarray(pts, dtype=float)[:, 0]
        return np.polyval(coeffs[k][::-1], x)

    return fn


def _polynomial_consumption(coeff_list: list[np.ndarray]):
    def fn(k: int, pts: np.ndarray) -> np.ndarray:
        x = np.asarray(pts, dtype=float)[:, 0]
        return np.stack([np.polyval(c[k][::-1], x) for c in coeff_list])

    return fn


def load_instance(path) -> ProblemInstance:
    """Parse a problem-instance file."""
    path = Path(path)
    reader = _Reader(path, _read_entries(path))

    k = reader.integer("contexts")
    u_mass = reader.numbers("context_mass")
    if u_mass.size != k:
        raise ConfigError(f"{path}: context_mass needs {k} entries")
    n = reader.integer("resources")
    rho = reader.numbers("rho")
    if rho.size != n:
        raise ConfigError(f"{path}: rho needs {n} entries")
    horizon = reader.integer("T")
    r_max = reader.number("r_max", default=None, required=False)
    c_max = reader.number("c_max", default=None, required=False)
    kind = reader.text("factor_kind", default="finite")

    try:
        context = FiniteContextSpace(u_mass)
        if kind == "finite":
            g = reader.integer("factors")
            v_mass = reader.numbers("factor_mass")
            if v_mass.size != g:
                raise ConfigError(f"{path}: factor_mass needs {g} entries")
            reward = reader.matrix("reward", rows=k, cols=g)
            cons = np.stack(
                [reader.matrix(f"consumption.{i + 1}", rows=k, cols=g) for i in range(n)]
            )
            reader.finish()
            return ProblemInstance(
                context=context,
                factor=FiniteFactorSpace(v_mass),
                rho=rho,
                T=horizon,
                reward_matrix=reward,
                consumption_tensor=cons,
                r_max=r_max,
                c_max=c_max,
            )
        if kind == "continuous":
            density_name = reader.text("factor_density")
            if density_name not in DENSITIES:
                raise ConfigError(
                    f"{path}: unknown factor_density {density_name!r}; "
                    f"available: {sorted(DENSITIES)}"
                )
            grid = reader.integer("factor_grid", default=512, required=False)
            form = reader.text("reward_form", default="polynomial", required=False)
            if form != "polynomial":
                raise ConfigError(f"{path}: only 'polynomial' reward_form is supported")
            rcoef = reader.matrix("reward_coeffs", rows=k)
            ccoef = [reader.matrix(f"consumption_coeffs.{i + 1}", rows=k) for i in range(n)]
            reader.finish()
            if r_max is None or c_max is None:
                raise ConfigError(
                    f"{path}: continuous instances need explicit r_max and c_max"
                )
            return ProblemInstance(
                context=context,
                factor=DENSITIES[density_name](grid_per_axis=grid),
                rho=rho,
                T=horizon,
                reward_fn=_polynomial_reward(rcoef),
                consumption_fn=_polynomial_consumption(ccoef),
                r_max=r_max,
                c_max=c_max,
            )
        raise ConfigError(f"{path}: factor_kind must be 'finite' or 'continuous'")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid instance: {exc}") from exc


def save_instance(instance: ProblemInstance, path) -> None:
    """Write a finite-factor instance file (continuous ones are code-defined)."""
    if not instance.is_finite_factor:
        raise ValueError("only finite-factor instances can be serialized")
    path = Path(path)
    lines = [
        f"contexts = {instance.context.size}",
        "context_mass = " + " ".join(repr(float(x)) for x in instance.context.mass),
        "factor_kind = finite",
        f"factors = {instance.factor.size}",
        "factor_mass = " + " ".join(repr(float(x)) for x in instance.factor.mass),
        f"resources = {instance.n}",
        "rho = " + " ".join(repr(float(x)) for x in instance.rho),
        f"T = {instance.T}",
        f"r_max = {instance.r_max!r}",
        f"c_max = {instance.c_max!r}",
        "",
        "reward:",
    ]
    for row in instance.reward_matrix:
        lines.append("  " + " ".join(repr(float(x)) for x in row))
    for i in range(instance.n):
        lines.append("")
        lines.append(f"consumption.{i + 1}:")
        for row in instance.consumption_tensor[i]:
            lines.append("  " + " ".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------

DEFAULT_HORIZONS = tuple(5000 * 2**k for k in range(4))
PAPER_HORIZONS = tuple(5000 * 2**k for k in range(6))


@dataclass
class ExperimentConfig:
    """Everything one regret experiment needs, file-serializable."""

    instance: str
    mode: str
    horizons: tuple[int, ...]
    n_estimations: int
    n_trials: int
    master_seed: int
    out: str
    trajectories: bool = False
    t_ci: bool = False
    c_h: float = 1.0
    kernel: str = "fourth-order"
    grid: int = 512

    def __post_init__(self):
        self.horizons = tuple(int(t) for t in self.horizons)
        if not self.horizons:
            raise ConfigError("horizons must be nonempty")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ConfigError("horizons must be strictly ascending")
        if self.mode not in ("full", "partial"):
            raise ConfigError(f"mode must be 'full' or 'partial', got {self.mode!r}")
        if self.n_estimations < 2:
            raise ConfigError("estimations must be >= 2")
        if self.n_trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.c_h <= 0:
            raise ConfigError("c_h must be positive")
        if self.grid < 2:
            raise ConfigError("grid must be >= 2")

    def resolve_instance(self) -> ProblemInstance:
        if self.instance in PRESETS:
            return make_preset(self.instance, T=self.horizons[0])
        return load_instance(self.instance)


def load_config(path) -> ExperimentConfig:
    """Parse an experiment config file; unknown keys are an error."""
    path = Path(path)
    reader = _Reader(path, _read_entries(path))
    try:
        config = ExperimentConfig(
            instance=reader.text("instance"),
            mode=reader.text("mode"),
            horizons=reader.integers("horizons"),
            n_estimations=reader.integer("estimations"),
            n_trials=reader.integer("trials"),
            master_seed=reader.integer("seed"),
            out=reader.text("out"),
            trajectories=reader.boolean("trajectories", default=False),
            t_ci=reader.boolean("t_ci", default=False),
            c_h=reader.number("c_h", default=1.0, required=False),
            kernel=reader.text("kernel", default="fourth-order", required=False),
            grid=reader.integer("grid", default=512, required=False),
        )
    except ConfigError:
        raise
    reader.finish()
    return config


def save_config(config: ExperimentConfig, path) -> None:
    path = Path(path)
    lines = [
        f"instance = {config.instance}",
        f"mode = {config.mode}",
        "horizons = " + " ".join(str(t) for t in config.horizons),
        f"estimations = {config.n_estimations}",
        f"trials = {config.n_trials}",
        f"seed = {config.master_seed}",
        f"out = {config.out}",
        f"trajectories = {'true' if config.trajectories else 'false'}",
        f"t_ci = {'true' if config.t_ci else 'false'}",
        f"c_h = {config.c_h!r}",
        f"kernel = {config.kernel}",
        f"grid = {config.grid}",
    ]
    path.write_text("\n".join(lines) + "\n")


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(ExperimentConfig))
