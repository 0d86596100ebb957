"""Run configuration: strict parsing, defaults, and validation.

A run is described by a JSON document (or equivalent flat overrides)
with a ``command`` plus command-specific keys.  Parsing is strict:
unknown keys are rejected, every violation is reported at once, and the
effective configuration (defaults filled) re-serializes to a byte-stable
normal form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .exceptions import ParseError, ValidationError

COMMANDS = (
    "sample-prior",
    "project",
    "theory-check",
    "fit-eigenmodel",
    "fit-svd",
    "diagnose",
)

ENTRY_LAWS = ("standard_normal", "shrinkage")
FAMILIES = ("identity", "power", "squared_exponential", "matern", "banded")
PRESETS = ("wasserstein", "semicircle", "frobenius", "zero-crossings", "operator-norm")


@dataclass(frozen=True)
class Field:
    name: str
    kind: type | tuple
    default: Any = None
    required: bool = False
    check: Optional[Callable[[Any], Optional[str]]] = None


def _positive_int(v):
    return None if (isinstance(v, int) and v >= 1) else "must be an integer >= 1"


def _positive(v):
    return None if (isinstance(v, (int, float)) and v > 0) else "must be > 0"


def _fraction(v):
    if isinstance(v, (int, float)) and 0.0 < v <= 1.0:
        return None
    return "must lie in (0, 1]"


def _choice(options):
    def check(v):
        return None if v in options else f"must be one of {options}"

    return check


OMEGA_FIELDS = [
    Field("family", str, "identity", check=_choice(FAMILIES)),
    Field("rho", (int, float), None),
    Field("nu", (int, float), None),
    Field("tau", int, None),
    Field("spacing", (int, float), 1.0, check=_positive),
    Field("banded_family", str, None),
]

HMC_FIELDS = [
    Field("warmup", int, 500, check=_positive_int),
    Field("draws", int, 500, check=_positive_int),
    Field("chains", int, 4, check=_positive_int),
    Field("target_accept", (int, float), 0.8),
    Field("max_leapfrog", int, 1024, check=_positive_int),
    Field("init_stepsize", (int, float), 0.1, check=_positive),
    Field("mass", str, "unit", check=_choice(("unit", "diagonal"))),
]

SCHEMAS: dict[str, list[Field]] = {
    "sample-prior": [
        Field("seed", int, required=True),
        Field("p", int, required=True, check=_positive_int),
        Field("k", int, required=True, check=_positive_int),
        Field("entry_law", str, "standard_normal", check=_choice(ENTRY_LAWS)),
        Field("ell", (int, float), None, check=_fraction),
        Field("draws", int, 100, check=_positive_int),
        Field("out", str, "q_draws.csv"),
        Field("x_out", str, None),
    ],
    "project": [
        Field("data", str, required=True),
        Field("q_out", str, "q.csv"),
        Field("s_sqrt_out", str, "s_sqrt.csv"),
    ],
    "theory-check": [
        Field("seed", int, required=True),
        Field("preset", str, required=True, check=_choice(PRESETS)),
        Field("p", int, 100, check=_positive_int),
        Field("k", int, 2, check=_positive_int),
        Field("p_grid", list, None),
        Field("entries", list, None),
        Field("replicates", int, 500, check=_positive_int),
        Field("entry_law", str, "standard_normal", check=_choice(ENTRY_LAWS)),
        Field("ell", (int, float), None, check=_fraction),
        Field("out", str, "report.csv"),
        Field("report_out", str, None),
    ],
    "fit-eigenmodel": [
        Field("seed", int, required=True),
        Field("data", str, required=True),
        Field("k", int, 2, check=_positive_int),
        Field("out_dir", str, "."),
    ],
    "fit-svd": [
        Field("seed", int, required=True),
        Field("data", str, required=True),
        Field("k", int, 4, check=_positive_int),
        Field("spacing", (int, float), 1.0, check=_positive),
        Field("rho_mean", (int, float), None),
        Field("rho_sd", (int, float), None),
        Field("nu_err", (int, float), 2.0, check=_positive),
        Field("s2", (int, float), None),
        Field("tau", (int, float), None),
        Field("out_dir", str, "."),
    ],
    "diagnose": [
        Field("draws_csv", str, required=True),
        Field("chains", int, required=True, check=_positive_int),
        Field("out", str, "diagnostics.json"),
    ],
}

_STOCHASTIC = {"sample-prior", "theory-check", "fit-eigenmodel", "fit-svd"}
_WITH_OMEGA = {"sample-prior", "theory-check"}
_WITH_HMC = {"fit-eigenmodel", "fit-svd"}


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def normal_form(self) -> str:
        """Canonical JSON: sorted keys, two-space indent, trailing newline."""
        doc = {"command": self.command, **self.values}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _validate_section(prefix, fields, given, violations):
    known = {f.name for f in fields}
    for key in given:
        if key not in known:
            violations.append(f"unknown key {prefix}{key!r}")
    out = {}
    for f in fields:
        if f.name in given:
            v = given[f.name]
            if v is not None and not isinstance(v, f.kind):
                violations.append(f"{prefix}{f.name}: expected {f.kind}, got {type(v).__name__}")
                continue
            if v is not None and f.check is not None:
                msg = f.check(v)
                if msg:
                    violations.append(f"{prefix}{f.name}: {msg}")
                    continue
            out[f.name] = v
        elif f.required:
            violations.append(f"missing required key {prefix}{f.name!r}")
        else:
            out[f.name] = f.default
    return out


def parse_config(document: dict | str) -> RunConfig:
    """Validate a config document (dict or path to a JSON file).

    Raises ParseError for malformed JSON and ValidationError listing
    every constraint violation at once.
    """
    if isinstance(document, str):
        try:
            with open(document) as fh:
                document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{document}: line {exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise ParseError(str(exc)) from exc
    if not isinstance(document, dict):
        raise ParseError("config document must be a JSON object")

    violations: list[str] = []
    command = document.get("command")
    if command not in COMMANDS:
        raise ValidationError([f"command must be one of {COMMANDS}, got {command!r}"])

    body = {k: v for k, v in document.items() if k != "command"}
    omega_doc = body.pop("omega", None) if command in _WITH_OMEGA else None
    hmc_doc = body.pop("hmc", None) if command in _WITH_HMC else None

    values = _validate_section("", SCHEMAS[command], body, violations)

    if command in _WITH_OMEGA:
        values["omega"] = _validate_section(
            "omega.", OMEGA_FIELDS, omega_doc or {}, violations
        )
    if command in _WITH_HMC:
        values["hmc"] = _validate_section("hmc.", HMC_FIELDS, hmc_doc or {}, violations)

    if command == "sample-prior" and not violations:
        if values["entry_law"] == "shrinkage" and values["ell"] is None:
            violations.append("ell: required when entry_law is 'shrinkage'")
    if command in _STOCHASTIC and "seed" in values and values["seed"] is None:
        violations.append("seed: required for stochastic commands")

    if violations:
        raise ValidationError(violations)
    return RunConfig(command=command, values=values)
