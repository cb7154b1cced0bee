"""Experiment configuration: a flat key-value text format with a typed schema.

File format, one entry per line::

    # comment
    kind = "dbm"
    seed = 12345
    dbm.K = 32
    dbm.T = 4.0
    verify.suite = "decay"

Keys are ``name`` for the common entries and ``<kind>.<name>`` for the
parameters of a pipeline.  Values are JSON literals (numbers, double-quoted
strings, true/false, null, lists).  Parameters of other kinds than the one
selected are rejected, as are unknown keys and values of the wrong type;
every error carries the offending key path.

Serialization writes every key of the selected kind in schema order with
defaults filled in, so parse -> serialize -> parse is the identity and the
serialized text is a canonical form used for the config hash.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

KINDS = ("sample", "dbm", "parabolic", "stats", "verify")
OUTPUT_ENV = "LOGGAS_OUTPUT_ROOT"
U64 = 2 ** 64


@dataclass(frozen=True)
class Param:
    type: str                 # int | float | str | bool | floats
    default: object
    choices: tuple = ()
    minimum: float | None = None
    nullable: bool = False
    doc: str = ""


def _p(type_, default, doc="", choices=(), minimum=None, nullable=False):
    return Param(type_, default, tuple(choices), minimum, nullable, doc)


COMMON = {
    "kind": _p("str", None, "pipeline to run", KINDS),
    "seed": _p("int", 0, "master seed, unsigned 64-bit", minimum=0),
    "workers": _p("int", 1, "worker processes", minimum=1),
    "output": _p("str", None, "output directory; default under $LOGGAS_OUTPUT_ROOT", nullable=True),
}

SCHEMA = {
    "sample": {
        "ensemble": _p("str", "tridiagonal", "eigenvalue source", ("tridiagonal", "wigner", "mcmc")),
        "beta": _p("float", 2.0, "inverse temperature", minimum=0.0),
        "N": _p("int", 200, "number of particles", minimum=1),
        "draws": _p("int", 100, "configurations to emit (one CSV each)", minimum=1),
        "entry_law": _p("str", "gaussian", "Wigner entry law", ("gaussian", "bernoulli", "uniform")),
        "symmetry": _p("str", "real", "Wigner symmetry class", ("real", "complex")),
        "potential": _p("str", "quadratic", "MALA external potential", ("quadratic", "quartic")),
        "chains": _p("int", 10, "independent MALA chains", minimum=1),
        "burn_in": _p("int", 2000, "MALA burn-in steps", minimum=0),
        "thin": _p("int", 10, "MALA thinning", minimum=1),
        "ks_max": _p("float", 0.05, "acceptance: KS distance to the equilibrium CDF", minimum=0.0),
    },
    "dbm": {
        "K": _p("int", 16, "window half-width", minimum=1),
        "N": _p("int", 128, "global particle number defining the boundary", minimum=3),
        "beta": _p("float", 2.0, "inverse temperature (>= 1)", minimum=1.0),
        "paths": _p("int", 10, "paths (one CSV each)", minimum=1),
        "batch": _p("int", 5, "paths per work unit", minimum=1),
        "T": _p("float", 1.0, "time horizon", minimum=0.0),
        "dt_max": _p("float", 1e-2, "largest step", minimum=0.0),
        "store_every": _p("float", 0.25, "spacing of stored times", minimum=0.0),
        "burn_in": _p("int", 2000, "MALA burn-in for the initial states", minimum=0),
    },
    "parabolic": {
        "kernel": _p("str", "inverse_square", "constant kernel", ("inverse_square", "random_floor")),
        "K": _p("int", 64, "window half-width", minimum=1),
        "source": _p("int", 0, "index of the delta initial condition"),
        "t1": _p("float", 8.0, "final time", minimum=0.0),
        "store_every": _p("float", 0.5, "spacing of stored times", minimum=0.0),
        "method": _p("str", "expm", "propagator", ("expm", "implicit_euler")),
        "alpha": _p("float", 1 / 3, "Hoelder window exponent", minimum=0.0),
        "tolerance": _p("float", 0.05, "acceptance: slack on the decay bound", minimum=0.0),
    },
    "stats": {
        "beta": _p("float", 1.0, "inverse temperature", minimum=0.0),
        "N": _p("int", 100, "matrix size", minimum=4),
        "draws": _p("int", 100000, "tridiagonal draws", minimum=1),
        "chunk": _p("int", 10000, "draws per work unit", minimum=1),
        "k": _p("int", None, "bulk index (default N/2)", nullable=True, minimum=1),
        "slope_tolerance": _p("float", 0.3, "acceptance: |slope - (beta + 1)|", minimum=0.0),
    },
    "verify": {
        "suite": _p("str", "decay", "named suite", (
            "semicircle", "repulsion", "wigner_universality", "quartic_universality",
            "index_independence", "decay", "ordering", "propagator", "holder",
            "representation", "gn", "regularity")),
        "K": _p("int", None, "window half-width override", nullable=True, minimum=1),
        "N": _p("int", None, "particle number override", nullable=True, minimum=1),
        "beta": _p("float", None, "inverse temperature override", nullable=True, minimum=0.0),
        "paths": _p("int", None, "path count override", nullable=True, minimum=1),
        "draws": _p("int", None, "draw count override", nullable=True, minimum=1),
        "trials": _p("int", None, "fuzz trial override", nullable=True, minimum=1),
        "T": _p("float", None, "time horizon override", nullable=True, minimum=0.0),
    },
}


def _check(path: str, spec: Param, value):
    if value is None:
        if spec.nullable:
            return None
        raise ConfigError("null is not allowed", path)
    t = spec.type
    if t == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
    elif t == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        value = float(value)
    elif t == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
    elif t == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", path)
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"{value!r} is not one of {list(spec.choices)}", path)
    if spec.minimum is not None and value < spec.minimum:
        raise ConfigError(f"{value!r} is below the minimum {spec.minimum}", path)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"{self.kind!r} is not one of {list(KINDS)}", "kind")
        _check("seed", COMMON["seed"], self.seed)
        if self.seed >= U64:
            raise ConfigError("seed must fit in 64 bits", "seed")
        _check("workers", COMMON["workers"], self.workers)
        schema = SCHEMA[self.kind]
        full = {}
        for name, spec in schema.items():
            full[name] = _check(f"{self.kind}.{name}", spec, self.params.get(name, spec.default))
        extra = sorted(set(self.params) - set(schema))
        if extra:
            raise ConfigError("unknown parameter", f"{self.kind}.{extra[0]}")
        object.__setattr__(self, "params", full)

    # -- text form
    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'", None)
            key, val = (part.strip() for part in s.split("=", 1))
            if not key:
                raise ConfigError(f"{source}:{lineno}: empty key", None)
            if key in raw:
                raise ConfigError(f"duplicate key (line {lineno})", key)
            try:
                raw[key] = json.loads(val)
            except json.JSONDecodeError:
                raise ConfigError(f"value {val!r} is not a JSON literal (line {lineno})", key) from None
        return cls.from_dict(raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", str(p)) from None
        return cls.from_text(text, str(p))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        kind = raw.pop("kind", None)
        if kind is None:
            raise ConfigError("missing", "kind")
        _check("kind", COMMON["kind"], kind)
        common = {k: raw.pop(k) for k in ("seed", "workers", "output") if k in raw}
        params = {}
        for key, val in raw.items():
            head, _, name = key.partition(".")
            if not name or head not in SCHEMA:
                raise ConfigError("unknown key", key)
            if head != kind:
                raise ConfigError(f"parameter of kind {head!r} in a {kind!r} config", key)
            params[name] = val
        if "output" in common:
            _check("output", COMMON["output"], common["output"])
        return cls(kind, params, **common)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed, "workers": self.workers, "output": self.output}
        d.update({f"{self.kind}.{k}": v for k, v in self.params.items()})
        return d

    def to_text(self) -> str:
        lines = [f"{k} = {json.dumps(v)}" for k, v in self.to_dict().items()]
        return "\n".join(lines) + "\n"

    def replace(self, **kw) -> "ExperimentConfig":
        d = {"kind": self.kind, "params": dict(self.params), "seed": self.seed,
             "workers": self.workers, "output": self.output}
        d.update(kw)
        return ExperimentConfig(**d)

    def hash(self) -> str:
        """sha256 of the canonical text without ``workers`` and ``output``.

        Neither changes the emitted files, so they are left out of the hash.
        """
        d = self.to_dict()
        d.pop("workers")
        d.pop("output")
        text = "\n".join(f"{k} = {json.dumps(v)}" for k, v in d.items())
        return hashlib.sha256(text.encode()).hexdigest()

    def output_dir(self) -> Path:
        if self.output:
            return Path(self.output)
        root = os.environ.get(OUTPUT_ENV, "loggas-runs")
        return Path(root) / f"{self.kind}-{self.hash()[:12]}-{self.seed}"


def describe_schema() -> str:
    """Human-readable listing of every key with its type, default and meaning."""
    out = []
    for name, spec in COMMON.items():
        out.append(_line(name, spec))
    for kind, schema in SCHEMA.items():
        out.append("")
        for name, spec in schema.items():
            out.append(_line(f"{kind}.{name}", spec))
    return "\n".join(out)


def _line(key, spec):
    extra = f" one of {list(spec.choices)}" if spec.choices else ""
    return f"{key:24s} {spec.type:6s} default {json.dumps(spec.default)}  {spec.doc}{extra}"
