"""Run configuration: two equivalent on-disk formats, overrides, and the
construction of model objects from parsed values.

INI form (configparser grammar)::

    [grid]
    dim = 1
    n = 256

    [params]
    epsilon = 1.0
    alpha = 0.5
    sigma = 0.5
    potential = quartic(1.0)
    coupling = true

    [scheme]
    dt = 1e-2
    t_end = 10
    stride = 10

    [initial]
    theta = constant(0.0)
    chi = random(seed=7, amplitude=0.1, mean=0.0)
    chi_t = constant(0.0)

    [run]
    seed = 0
    out = out

JSON form: one object whose members are the same sections, e.g.
``{"grid": {"dim": 1, "n": 256}, "initial": {"chi": {"preset": "random",
"seed": 7, "amplitude": 0.1, "mean": 0.0}}, ...}``.  Presets in the INI
form are written as calls, ``name(arg, key=value, ...)``; positional
arguments follow the documented parameter order of each preset
(constant: value; single_mode: k, amplitude; random: seed, amplitude,
mean).  In JSON a preset is an object with a "preset" member naming it.

Overrides from the command line are ``section.key=value`` strings applied
on the raw values before validation.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import SchemeConfig
from .functionals import FunctionalCoefficients
from .model import InitialData, Parameters, Potential
from .spectral import Grid, gradient, mean_and_deflate

__all__ = [
    "ConfigError",
    "PresetSpec",
    "RunConfig",
    "load_config",
    "parse_preset",
    "build_initial_data",
    "require_alpha_positive",
]


class ConfigError(ValueError):
    """Invalid configuration; message carries section/key context."""


# ---------------------------------------------------------------------------
# raw layer: sections of key -> value (strings from INI, native from JSON)
# ---------------------------------------------------------------------------

def _read_raw(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict) or not all(
            isinstance(v, dict) for v in raw.values()
        ):
            raise ConfigError(f"{path}: top level must map sections to objects")
        return {str(s).lower(): {str(k).lower(): v for k, v in sec.items()}
                for s, sec in raw.items()}
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    return {s.lower(): {k.lower(): v for k, v in parser[s].items()}
            for s in parser.sections()}


def _apply_overrides(raw: dict, overrides) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} needs a section prefix")
        section, key = dotted.strip().lower().split(".", 1)
        raw.setdefault(section, {})[key.strip()] = value.strip()
    return raw


_KNOWN_SECTIONS = {
    "grid", "params", "scheme", "initial", "functionals", "run",
    "equilibria", "decompose", "fit",
}


class _Section:
    """Typed accessors over one raw section with error context."""

    def __init__(self, name: str, values: dict):
        self.name = name
        self.values = dict(values)
        self.seen = set()

    def _fetch(self, key: str, default):
        self.seen.add(key)
        return self.values.get(key, default)

    def _fail(self, key: str, expected: str, value) -> "ConfigError":
        return ConfigError(
            f"[{self.name}] {key} = {value!r}: expected {expected}"
        )

    def get_float(self, key: str, default=None) -> Optional[float]:
        v = self._fetch(key, default)
        if v is None or v == "":
            return None
        try:
            return float(v)
        except (TypeError, ValueError):
            raise self._fail(key, "a number", v) from None

    def get_int(self, key: str, default=None) -> Optional[int]:
        v = self._fetch(key, default)
        if v is None or v == "":
            return None
        try:
            out = int(str(v).strip()) if isinstance(v, str) else int(v)
        except (TypeError, ValueError):
            raise self._fail(key, "an integer", v) from None
        if isinstance(v, float) and v != out:
            raise self._fail(key, "an integer", v)
        return out

    def get_bool(self, key: str, default=None) -> Optional[bool]:
        v = self._fetch(key, default)
        if v is None or v == "":
            return None
        if isinstance(v, bool):
            return v
        if isinstance(v, str):
            low = v.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
        raise self._fail(key, "a boolean", v)

    def get_str(self, key: str, default=None) -> Optional[str]:
        v = self._fetch(key, default)
        if v is None:
            return None
        return str(v)

    def get_raw(self, key: str, default=None):
        return self._fetch(key, default)

    def reject_unknown(self):
        unknown = set(self.values) - self.seen
        if unknown:
            raise ConfigError(
                f"[{self.name}] unknown key(s): {', '.join(sorted(unknown))}"
            )


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_PRESET_ORDER = {
    "constant": ("value",),
    "single_mode": ("k", "amplitude"),
    "random": ("seed", "amplitude", "mean"),
}

_CALL_RE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$", re.S)


@dataclass(frozen=True)
class PresetSpec:
    """Parsed initial-field preset: a name plus keyword arguments."""

    name: str
    args: dict = field(default_factory=dict)


def parse_preset(value) -> PresetSpec:
    """Parse a preset from its INI call syntax or its JSON object form."""
    if isinstance(value, PresetSpec):
        return value
    if isinstance(value, dict):
        d = {str(k).lower(): v for k, v in value.items()}
        name = d.pop("preset", None)
        if name not in _PRESET_ORDER:
            raise ConfigError(f"unknown preset {name!r}")
        return _check_preset(PresetSpec(str(name), d))
    text = str(value).strip()
    m = _CALL_RE.match(text)
    if not m:
        if text in _PRESET_ORDER:
            return _check_preset(PresetSpec(text, {}))
        raise ConfigError(f"cannot parse preset {text!r}")
    name, body = m.group(1), m.group(2).strip()
    if name not in _PRESET_ORDER:
        raise ConfigError(f"unknown preset {name!r}")
    order = _PRESET_ORDER[name]
    args: dict = {}
    if body:
        for pos, part in enumerate(body.split(",")):
            part = part.strip()
            if not part:
                continue
            if "=" in part:
                k, v = part.split("=", 1)
                args[k.strip().lower()] = v.strip()
            else:
                if pos >= len(order):
                    raise ConfigError(
                        f"preset {name!r}: too many positional arguments"
                    )
                args[order[pos]] = part
    return _check_preset(PresetSpec(name, args))


def _check_preset(spec: PresetSpec) -> PresetSpec:
    allowed = set(_PRESET_ORDER[spec.name])
    unknown = set(spec.args) - allowed
    if unknown:
        raise ConfigError(
            f"preset {spec.name!r}: unknown argument(s) {', '.join(sorted(unknown))}"
        )
    return spec


def _preset_float(spec: PresetSpec, key: str, default: float) -> float:
    v = spec.args.get(key, default)
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"preset {spec.name!r}: {key} = {v!r} is not a number") from None


def _preset_multi_index(spec: PresetSpec, grid: Grid):
    v = spec.args.get("k")
    if v is None:
        raise ConfigError(f"preset {spec.name!r} needs a mode index k")
    if isinstance(v, (list, tuple)):
        parts = list(v)
    else:
        parts = str(v).replace("x", " ").split()
    try:
        k = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"preset {spec.name!r}: bad mode index {v!r}") from None
    if len(k) != grid.dim:
        raise ConfigError(
            f"preset {spec.name!r}: mode index {k} has {len(k)} entries, "
            f"grid is {grid.dim}-dimensional"
        )
    if any(not 0 <= ki < grid.n for ki in k):
        raise ConfigError(f"preset {spec.name!r}: mode index {k} out of range")
    return k


def build_field(grid: Grid, spec: PresetSpec, default_seed: int) -> np.ndarray:
    """Coefficient array of one scalar initial field from its preset.

    constant(value)               : the constant field.
    single_mode(k, amplitude)     : amplitude on one cosine mode.
    random(seed, amplitude, mean) : smooth random field; the coefficient
        spectrum decays like 1/(1 + lam), the mean-free part is scaled to
        L2 norm `amplitude`, and the mean is set to `mean`.  The seed
        defaults to the run seed offset by the field's slot.
    """
    coeffs = np.zeros(grid.shape)
    zero = (0,) * grid.dim
    if spec.name == "constant":
        coeffs[zero] = _preset_float(spec, "value", 0.0)
        return coeffs
    if spec.name == "single_mode":
        k = _preset_multi_index(spec, grid)
        coeffs[k] = _preset_float(spec, "amplitude", 1.0)
        return coeffs
    if spec.name == "random":
        seed = int(_preset_float(spec, "seed", default_seed))
        amplitude = _preset_float(spec, "amplitude", 0.1)
        mean = _preset_float(spec, "mean", 0.0)
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(grid.shape) / (1.0 + grid.lam)
        _, coeffs = mean_and_deflate(grid, coeffs)
        nrm = float(np.sqrt(np.sum(grid.wcos * coeffs * coeffs)))
        if nrm > 0:
            coeffs *= amplitude / nrm
        coeffs[zero] = mean
        return coeffs
    raise ConfigError(f"unknown preset {spec.name!r}")


# ---------------------------------------------------------------------------
# assembled configuration
# ---------------------------------------------------------------------------

@dataclass
class EquilibriaSpec:
    m: Optional[float] = None          # default: conserved mass of the data
    guess: PresetSpec = field(
        default_factory=lambda: PresetSpec("random", {"amplitude": 0.01})
    )
    tol: float = 1e-12
    eta: Optional[float] = None
    n_directions: int = 5
    n_radii: int = 8


@dataclass
class DecomposeSpec:
    ell: Optional[float] = None
    certificate_fields: int = 10
    certificate_snapshots: int = 10


@dataclass
class FitSpec:
    csv: Optional[str] = None
    column: str = "norm_theta_tilde"
    kind: str = "auto"
    t_min: Optional[float] = None
    t_max: Optional[float] = None
    role: Optional[str] = None


@dataclass
class RunConfig:
    """Everything a command needs, already validated."""

    grid: Grid
    params: Parameters
    scheme: SchemeConfig
    initial: dict                      # field name -> PresetSpec
    func_coeffs: FunctionalCoefficients
    seed: int
    out_dir: Path
    allow_alpha_zero: bool
    equilibria: EquilibriaSpec
    decompose: DecomposeSpec
    fit: FitSpec
    source: Optional[Path] = None


_DEFAULT_INITIAL = {
    "theta": "constant(0.0)",
    "chi": "random(amplitude=0.1, mean=0.0)",
    "chi_t": "constant(0.0)",
}

# slot offsets for per-field default random seeds
_FIELD_SLOTS = {"theta": 1, "q": 2, "chi": 3, "chi_t": 4}


def load_config(path=None, overrides=(), seed: Optional[int] = None,
                out_dir=None) -> RunConfig:
    """Read, override, and validate a configuration file.

    ``path=None`` starts from the built-in defaults (overrides still
    apply), so every command can run without a config file.
    """
    if path is None:
        raw = _apply_overrides({}, overrides)
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw = _apply_overrides(_read_raw(path), overrides)
    unknown = set(raw) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    sec = {name: _Section(name, raw.get(name, {})) for name in _KNOWN_SECTIONS}

    g = sec["grid"]
    grid_dim = g.get_int("dim", 1)
    grid_n = g.get_int("n", 64)
    g.reject_unknown()
    try:
        grid = Grid(grid_dim, grid_n)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    p = sec["params"]
    pot_text = p.get_raw("potential", "quartic(1.0)")
    potential = _parse_potential(pot_text)
    try:
        params = Parameters(
            epsilon=p.get_float("epsilon", 1.0),
            alpha=p.get_float("alpha", 0.5),
            sigma=p.get_float("sigma", 0.5),
            potential=potential,
            coupling=p.get_bool("coupling", True),
        )
    except ValueError as exc:
        raise ConfigError(f"[params] {exc}") from None
    p.reject_unknown()

    s = sec["scheme"]
    try:
        scheme = SchemeConfig(
            dt=s.get_float("dt", None),
            t_end=s.get_float("t_end", 1.0),
            stride=s.get_int("stride", 1),
            stabilization=s.get_float("stabilization", None),
            blowup_threshold=s.get_float("blowup_threshold", 1e8),
        )
    except ValueError as exc:
        raise ConfigError(f"[scheme] {exc}") from None
    s.reject_unknown()

    ini = sec["initial"]
    initial = {}
    for name, default in _DEFAULT_INITIAL.items():
        try:
            initial[name] = parse_preset(ini.get_raw(name, default))
        except ConfigError as exc:
            raise ConfigError(f"[initial] {name}: {exc}") from None
    q_raw = ini.get_raw("q", None)
    if q_raw is not None:
        try:
            initial["q"] = parse_preset(q_raw)
        except ConfigError as exc:
            raise ConfigError(f"[initial] q: {exc}") from None
    ini.reject_unknown()

    f = sec["functionals"]
    func_coeffs = FunctionalCoefficients(
        beta=f.get_float("beta", 0.05),
        gamma1=f.get_float("gamma1", 0.01),
        gamma2=f.get_float("gamma2", None),
        mu=f.get_float("mu", 0.05),
        nu=f.get_float("nu", 0.05),
        c_decay=f.get_float("c_decay", None),
    )
    f.reject_unknown()

    r = sec["run"]
    cfg_seed = r.get_int("seed", 0)
    cfg_out = r.get_str("out", "out")
    allow_alpha_zero = r.get_bool("allow_alpha_zero", False)
    r.reject_unknown()

    e = sec["equilibria"]
    eq = EquilibriaSpec(
        m=e.get_float("m", None),
        tol=e.get_float("tol", 1e-12),
        eta=e.get_float("eta", None),
        n_directions=e.get_int("n_directions", 5),
        n_radii=e.get_int("n_radii", 8),
    )
    guess_raw = e.get_raw("guess", None)
    if guess_raw is not None:
        eq.guess = parse_preset(guess_raw)
    e.reject_unknown()

    d = sec["decompose"]
    dec = DecomposeSpec(
        ell=d.get_float("ell", None),
        certificate_fields=d.get_int("certificate_fields", 10),
        certificate_snapshots=d.get_int("certificate_snapshots", 10),
    )
    d.reject_unknown()

    ft = sec["fit"]
    fit = FitSpec(
        csv=ft.get_str("csv", None),
        column=ft.get_str("column", "norm_theta_tilde"),
        kind=ft.get_str("kind", "auto"),
        t_min=ft.get_float("t_min", None),
        t_max=ft.get_float("t_max", None),
        role=ft.get_str("role", None),
    )
    ft.reject_unknown()

    return RunConfig(
        grid=grid, params=params, scheme=scheme, initial=initial,
        func_coeffs=func_coeffs,
        seed=int(seed) if seed is not None else cfg_seed,
        out_dir=Path(out_dir) if out_dir is not None else Path(cfg_out),
        allow_alpha_zero=allow_alpha_zero,
        equilibria=eq, decompose=dec, fit=fit, source=path,
    )


def _parse_potential(value) -> Potential:
    if isinstance(value, dict):
        d = {str(k).lower(): v for k, v in value.items()}
        kind = d.pop("kind", None)
        if kind == "quartic":
            return Potential.quartic(float(d.get("a", 1.0)))
        if kind == "linear_test":
            return Potential.linear_test(float(d.get("a", 1.0)))
        if kind == "polynomial":
            return Potential.polynomial([float(c) for c in d.get("coefficients", ())])
        raise ConfigError(f"[params] unknown potential kind {kind!r}")
    text = str(value).strip()
    m = _CALL_RE.match(text)
    if not m:
        raise ConfigError(f"[params] cannot parse potential {text!r}")
    kind, body = m.group(1), m.group(2).strip()
    try:
        if kind == "quartic":
            return Potential.quartic(float(body or 1.0))
        if kind == "linear_test":
            return Potential.linear_test(float(body or 1.0))
        if kind == "polynomial":
            coeffs = [float(c) for c in re.split(r"[,\s]+", body) if c]
            return Potential.polynomial(coeffs)
    except ValueError as exc:
        raise ConfigError(f"[params] potential {text!r}: {exc}") from None
    raise ConfigError(f"[params] unknown potential kind {kind!r}")


def build_initial_data(config: RunConfig) -> InitialData:
    """Instantiate the initial fields of a run from their presets."""
    grid = config.grid
    base = 1000003 * (config.seed + 1)

    def coeffs_for(name: str) -> np.ndarray:
        return build_field(grid, config.initial[name],
                           base + _FIELD_SLOTS[name])

    theta0 = coeffs_for("theta")
    chi0 = coeffs_for("chi")
    chi1 = coeffs_for("chi_t")
    q0 = None
    if "q" in config.initial and config.params.sigma > 0:
        # scalar presets make one cosine field; its gradient is the flux
        pot = build_field(grid, config.initial["q"], base + _FIELD_SLOTS["q"])
        q0 = gradient(grid, pot)
    return InitialData(grid, theta0, q0, chi0, chi1)


def require_alpha_positive(config: RunConfig, command: str) -> None:
    """Commands whose claims need uniqueness reject alpha = 0."""
    if config.params.alpha == 0.0 and not config.allow_alpha_zero:
        raise ConfigError(
            f"{command} needs alpha > 0 (solutions are only known unique "
            "then); set run.allow_alpha_zero = true to proceed anyway"
        )
