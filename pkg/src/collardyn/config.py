"""Run configuration: strict key-value config files plus flag overrides.

The config format is INI-style with one section per module.  Unknown
sections or keys are hard errors: every experiment here is
tolerance-sensitive and silent misconfiguration must not pass.  The
seed has no default; it must arrive from the file or the command line.
"""

import configparser
from dataclasses import dataclass, field

SCENARIOS = (
    "ym-evolve",
    "palatini-evolve",
    "pca-analyze",
    "check-invariants",
    "lambda-sweep",
    "reduction-report",
)

ALLOWED_KEYS = {
    "algebra": {"kind", "n", "d"},
    "mesh": {"d", "sites", "h", "n_t", "dt"},
    "run": {"scenario", "seed", "lambdas", "steps", "amplitude",
            "projection", "tol"},
    "output": {"path"},
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    scenario: str
    seed: int
    algebra_kind: str = "su2"
    algebra_n: int = 1
    algebra_d: int = 1
    mesh_d: int = 1
    sites: tuple = (8,)
    h: float = 0.5
    n_t: int = 8
    dt: float = 0.1
    lambdas: tuple = (1.0, 0.1, 0.01)
    steps: int = 100
    amplitude: float = 0.0
    projection: bool = False
    tol: float = 1e-8
    out: str = "out"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"run.scenario: unknown scenario {self.scenario!r}; "
                              f"expected one of {', '.join(SCENARIOS)}")
        if self.seed is None:
            raise ConfigError("run.seed: a seed is required (no nondeterministic "
                              "defaults); pass --seed or set it in the config")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("run.lambdas: all values must be nonnegative")
        if self.tol <= 0:
            raise ConfigError("run.tol: tolerance must be positive")
        if self.amplitude < 0:
            raise ConfigError("run.amplitude: must be nonnegative")
        if self.steps < 1:
            raise ConfigError("run.steps: need at least one step")


def _parse_value(section, key, raw):
    try:
        if key in ("n", "d", "n_t", "seed", "steps"):
            return int(raw)
        if key in ("h", "dt", "amplitude", "tol"):
            return float(raw)
        if key == "sites":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if key == "lambdas":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if key == "projection":
            if raw.lower() in ("on", "true", "1", "yes"):
                return True
            if raw.lower() in ("off", "false", "0", "no"):
                return False
            raise ValueError
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse value {raw!r}") from None


def read_config_file(path):
    """Parse and validate a config file into a {section.key: value} dict."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    values = {}
    for section in parser.sections():
        if section not in ALLOWED_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in ALLOWED_KEYS[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            values[f"{section}.{key}"] = _parse_value(section, key, raw)
    return values


def build_run_config(scenario, file_values=None, **flag_overrides):
    """Merge file values and flag overrides into a validated RunConfig."""
    vals = dict(file_values or {})
    kw = {
        "scenario": scenario or vals.get("run.scenario"),
        "seed": vals.get("run.seed"),
    }
    mapping = {
        "algebra.kind": "algebra_kind",
        "algebra.n": "algebra_n",
        "algebra.d": "algebra_d",
        "mesh.d": "mesh_d",
        "mesh.sites": "sites",
        "mesh.h": "h",
        "mesh.n_t": "n_t",
        "mesh.dt": "dt",
        "run.lambdas": "lambdas",
        "run.steps": "steps",
        "run.amplitude": "amplitude",
        "run.projection": "projection",
        "run.tol": "tol",
        "output.path": "out",
    }
    for key, attr in mapping.items():
        if key in vals:
            kw[attr] = vals[key]
    for name, value in flag_overrides.items():
        if value is not None:
            kw[name] = value
    if kw["scenario"] is None:
        raise ConfigError("run.scenario: no scenario given")
    return RunConfig(**kw)


def config_fingerprint(cfg):
    """Stable textual rendering of a RunConfig (for summaries)."""
    items = [(k, v) for k, v in sorted(vars(cfg).items()) if k != "overrides"]
    return "\n".join(f"{k} = {v}" for k, v in items)
