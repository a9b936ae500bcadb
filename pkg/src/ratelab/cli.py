"""Command-line runner: ``run``, ``rates``, ``check-axioms`` and ``dump-traj``.

Exit codes: 0 when every asserted check passes (inconclusive checks are
listed but do not fail the run), 1 on a failed check or a replay mismatch,
2 on an invalid config or unknown preset.  Bad command-line arguments get
argparse's usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import jsonschema

from . import mappings as mp
from . import schemes as sc
from . import transformers as tf
from . import uniqueness as uq
from .errors import ConfigError, ContractError, InputError, ModulusError, RatelabError
from .geometry import CorruptedWSpace, Space, check_w_axioms
from .rate_calculus import (
    DivergenceRate,
    cauchy_as_meta,
    counterfunction_rate,
    exact,
    lift_cauchy,
    parse_counterfunction,
    parse_eps_rate,
    positive,
    shifted_product_rate,
    sigma1,
    sigma2_with_meta,
)
from .report import FAIL, INCONCLUSIVE, PASS, VerificationReport, combine_status, jsonable
from .verifier import check_bound_soundness, check_cauchy_rate, reports_to_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def thread_cap() -> int:
    """Worker count from ``RATELAB_THREADS`` (default 4, at least 1)."""
    raw = os.environ.get("RATELAB_THREADS", "")
    try:
        n = int(raw) if raw else 4
    except ValueError:
        raise ConfigError(f"RATELAB_THREADS={raw!r} is not an integer")
    return max(1, n)


# --------------------------------------------------------------------------
# argument kinds shared by `rates` and config transformer blocks


def fmt_exact(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _delta(text) -> Fraction:
    if text == "clamped":
        return mp.DELTA_CLAMP
    q = exact(text)
    if not 0 < q < 1:
        raise InputError(f"delta must lie in (0, 1), got {text}")
    return q


def _divergence(text: str) -> DivergenceRate:
    cf = parse_counterfunction(text)
    # every DSL counterfunction is nondecreasing
    return DivergenceRate(cf, monotone=True, desc=cf.dsl())


def _eta(text: str) -> uq.UniformConvexityModulus:
    parts = text.split()
    if parts == ["hilbert-eta"]:
        return uq.hilbert_eta()
    if len(parts) == 2 and parts[0] == "power-eta":
        return uq.power_eta(int(parts[1]))
    raise ConfigError(f"unknown convexity preset {text!r} (known: hilbert-eta, power-eta P)")


def _omega(text: str) -> uq.AccretivityModulus:
    parts = text.split()
    if len(parts) == 2 and parts[0] == "quad":
        return uq.quadratic_omega(parts[1])
    raise ConfigError(f"unknown accretivity preset {text!r} (known: quad C)")


@dataclass(frozen=True)
class Kind:
    parse: Callable
    norm: Callable  # canonical JSON form of a parsed value


KINDS = {
    "eps": Kind(lambda s: positive(exact(s)), fmt_exact),
    "delta": Kind(_delta, fmt_exact),
    "int": Kind(int, int),
    "cf": Kind(parse_counterfunction, lambda v: v.dsl()),
    "rate": Kind(parse_eps_rate, lambda v: v.dsl()),
    "div": Kind(_divergence, lambda v: v.desc),
    "eta": Kind(_eta, lambda v: v.desc),
    "omega": Kind(_omega, lambda v: v.desc),
    "flag": Kind(bool, bool),
}


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    default: object = None
    help: str = ""

    @property
    def required(self) -> bool:
        return self.default is None and self.kind != "flag"


@dataclass(frozen=True)
class RateOp:
    name: str
    params: tuple
    fn: Callable
    help: str


def _value_and_details(v):
    if isinstance(v, tf.BoundResult):
        return v.value, v.trace
    if isinstance(v, tuple):
        return v
    return v, {}


# op bodies receive a dict of parsed arguments


def _op_sigma1(a):
    return sigma1(a["A"], a["B"], a["eps"], a["N"])


def _op_sigma2(a):
    return sigma2_with_meta(shifted_product_rate(a["A"]), a["B"], a["eps"], a["N"])


def _inputs(a, with_A=False):
    return tf.TransformerInputs(a["b"], a["delta"], lift_cauchy(counterfunction_rate(a["rho"])), A=a.get("A") if with_A else None)


def _omega_b(a):
    improved = True if a["improved"] else (False if a["general"] else None)
    return uq.modulus_of_uniqueness(a["omega"], a["preset"], a["b"], a["eps"], improved=improved)


def _km_bound(a):
    return uq.km_residual_bound(a["b"], sc.constant_seq(float(a["beta"])), a["n"])


def _km_rate(a):
    return uq.km_cauchy_rate(a["gamma"], a["b"], a["omega-value"])


B, EPS, DELTA = Param("b", "int", 1, "integer diameter bound"), Param("eps", "eps"), Param("delta", "delta")
RHO, F = Param("rho", "rate", help="Cauchy rate for the anchored sequences"), Param("f", "cf")
A_DIV, MU1, MU2 = Param("A", "div", help="rate of divergence"), Param("mu1", "div"), Param("mu2", "rate")
PSI = Param("psi", "rate", help="Cauchy rate of the exact scheme, used as a metastability rate")

OPS: dict[str, RateOp] = {
    op.name: op
    for op in [
        RateOp("sigma1", (A_DIV, Param("B", "int"), EPS, Param("N", "int", 0)), _op_sigma1, "A(N + ceil(ln(2B/eps))) + 1"),
        RateOp("sigma2", (Param("A", "rate", help="A'(m, eps) = m + rate(eps)"), Param("B", "int"), EPS, Param("N", "int", 0)),
               _op_sigma2, "max{A'(N, eps/2B), N} + 1"),
        RateOp("psi-vb", (B, DELTA, RHO, EPS, F, Param("N", "int", 0)),
               lambda a: tf.psi_viscosity_browder(_inputs(a), a["eps"], a["f"], a["N"]), "viscosity-Browder metastability bound"),
        RateOp("vb-single", (B, DELTA, RHO, EPS, F),
               lambda a: tf.psi_viscosity_browder_single(_inputs(a), a["eps"], a["f"]), "constant-delta viscosity-Browder bound"),
        RateOp("vb-rate", (B, DELTA, RHO, EPS),
               lambda a: tf.cauchy_viscosity_browder(a["b"], a["delta"], a["rho"], a["eps"]), "viscosity-Browder Cauchy rate"),
        RateOp("psi-vh", (B, DELTA, A_DIV, RHO, EPS, F, Param("N", "int", 0)),
               lambda a: tf.psi_viscosity_halpern(_inputs(a, True), a["eps"], a["f"], a["N"]), "viscosity-Halpern metastability bound"),
        RateOp("vh-single", (B, DELTA, A_DIV, RHO, EPS, F),
               lambda a: tf.psi_viscosity_halpern_single(_inputs(a, True), a["eps"], a["f"]), "constant-delta viscosity-Halpern bound"),
        RateOp("cauchy-vh", (B, DELTA, A_DIV, RHO, EPS),
               lambda a: tf.cauchy_viscosity_halpern(a["b"], a["delta"], a["A"], a["rho"], a["eps"]), "viscosity-Halpern Cauchy rate"),
        RateOp("xi-vkm", (B, DELTA, MU1, MU2, EPS, Param("denominator", "int", 2)),
               lambda a: tf.xi_vkm(a["b"], a["delta"], a["mu1"], a["mu2"], a["eps"], a["denominator"]), "vKM step-gap rate"),
        RateOp("omega-vkm", (B, DELTA, PSI, MU1, MU2, EPS, F),
               lambda a: tf.omega_vkm(a["b"], a["delta"], cauchy_as_meta(counterfunction_rate(a["psi"])), a["mu1"], a["mu2"], a["eps"], a["f"]),
               "vKM metastability bound"),
        RateOp("cauchy-vkm", (B, DELTA, RHO, MU1, MU2, EPS),
               lambda a: tf.cauchy_vkm(a["b"], a["delta"], a["rho"], a["mu1"], a["mu2"], a["eps"]), "vKM Cauchy rate"),
        RateOp("browder-relaxed", (PSI, Param("rho", "rate", help="rate for eps_n/alpha_n -> 0"), DELTA, EPS, F),
               lambda a: tf.meta_browder_relaxed(cauchy_as_meta(counterfunction_rate(a["psi"])), a["rho"], a["delta"], a["eps"], a["f"]),
               "inexact viscosity-Browder bound"),
        RateOp("gamma", (A_DIV, RHO, DELTA, B, EPS),
               lambda a: tf.gamma_relaxed(a["A"], a["rho"], a["delta"], a["b"], a["eps"]), "exact-vs-inexact gap rate"),
        RateOp("halpern-relaxed", (PSI, A_DIV, RHO, DELTA, B, EPS, F),
               lambda a: tf.meta_halpern_relaxed(cauchy_as_meta(counterfunction_rate(a["psi"])), a["A"], a["rho"], a["delta"], a["b"], a["eps"], a["f"]),
               "inexact viscosity-Halpern bound"),
        RateOp("vkm-relaxed", (PSI, A_DIV, RHO, DELTA, B, EPS, F),
               lambda a: tf.meta_vkm_relaxed(cauchy_as_meta(counterfunction_rate(a["psi"])), a["A"], a["rho"], a["delta"], a["b"], a["eps"], a["f"]),
               "inexact vKM bound"),
        RateOp("phi-halpern", (B, EPS),
               lambda a: uq.phi_halpern_harmonic(a["eps"], a["b"]), "Halpern rate for alpha_n = 1/(n+1)"),
        RateOp("omega-b", (Param("preset", "eta"), Param("omega", "omega"), B, EPS, Param("improved", "flag"), Param("general", "flag")),
               _omega_b, "modulus of uniqueness"),
        RateOp("beta", (Param("preset", "eta"), B, EPS, Param("improved", "flag")),
               lambda a: uq.beta_lemma3(a["preset"], a["b"], a["eps"], a["improved"]), "midpoint norm-drop constant"),
        RateOp("midpoint", (Param("preset", "eta"), B, EPS, Param("improved", "flag")),
               lambda a: uq.midpoint_afp_threshold(a["preset"], a["b"], a["eps"], a["improved"]), "midpoint approximate-fixed-point threshold"),
        RateOp("lemma1-threshold", (Param("omega", "omega"), B, EPS),
               lambda a: uq.lemma1_threshold(a["omega"], a["b"], a["eps"]), "approximate-fixed-point norm threshold"),
        RateOp("path-threshold", (Param("omega-value", "eps"), B),
               lambda a: uq.path_cauchy_threshold(a["omega-value"], a["b"]), "anchor-weight threshold for the path"),
        RateOp("km-bound", (B, Param("beta", "eps"), Param("n", "int")), _km_bound, "KM residual bound, constant beta"),
        RateOp("km-rate", (Param("gamma", "div"), B, Param("omega-value", "eps")), _km_rate, "KM Cauchy rate"),
        RateOp("override", (Param("value", "int"),), lambda a: a["value"], "fixed value (for deliberately corrupted bounds)"),
    ]
}


def parse_op_args(op: RateOp, raw: dict) -> tuple[dict, dict]:
    """Parse raw argument values; return ``(parsed, canonical)``."""
    unknown = set(raw) - {p.name for p in op.params}
    if unknown:
        raise InputError(f"{op.name}: unknown arguments {sorted(unknown)}")
    parsed, canon = {}, {}
    for p in op.params:
        v = raw.get(p.name, p.default)
        if v is None:
            if p.kind == "flag":
                v = False
            else:
                raise InputError(f"{op.name}: missing argument --{p.name}")
        val = KINDS[p.kind].parse(v if p.kind in ("flag", "int") else str(v))
        parsed[p.name] = val
        canon[p.name] = KINDS[p.kind].norm(val)
    return parsed, canon


def trace_id(op: str, canon: dict) -> str:
    blob = json.dumps({"op": op, "args": canon}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def evaluate(op_name: str, raw: dict) -> dict:
    """Evaluate one rate op and return its trace record."""
    if op_name not in OPS:
        raise ConfigError(f"unknown rate op {op_name!r}")
    op = OPS[op_name]
    parsed, canon = parse_op_args(op, raw)
    value, details = _value_and_details(op.fn(parsed))
    record = {"trace_id": trace_id(op_name, canon), "op": op_name, "args": canon, "value": jsonable(value)}
    if isinstance(value, Fraction):
        record["value"] = fmt_exact(value)
        record["float"] = float(value)
    if details:
        record["details"] = jsonable(details)
    return record


@dataclass
class _Bound:
    """Adapter handing a trace record to the verifier."""

    value: int
    trace: dict

    def __int__(self):
        return self.value


# --------------------------------------------------------------------------
# configs

_NUM = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_SEQ = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["one-over-n-plus-1", "constant", "harmonic-power", "zero", "table"]},
        "c": {"type": "number"},
        "p": {"type": "number"},
        "scale": {"type": "number"},
        "values": {"type": "array", "items": {"type": "number"}},
    },
    "additionalProperties": False,
}
_MAP = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["identity", "scaled-identity", "constant", "rotation", "affine"]},
        "c": {"type": "number"},
        "center": _POINT,
        "value": _POINT,
        "angle": {"type": "number"},
        "matrix": {"type": "array", "items": _POINT},
        "shift": _POINT,
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "space", "scheme"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "space": {
            "type": "object",
            "required": ["dimension", "radius", "b"],
            "properties": {
                "dimension": {"type": "integer", "minimum": 1},
                "radius": _NUM,
                "center": _POINT,
                "b": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "maps": {"type": "object", "additionalProperties": _MAP},
        "scheme": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["browder", "viscosity-browder", "halpern", "viscosity-halpern", "km", "vkm"]},
                "T": {"type": "string"},
                "phi": {"type": "string"},
                "anchor": _POINT,
                "start": _POINT,
                "alpha": _SEQ,
                "beta": _SEQ,
                "errors": _SEQ,
            },
            "additionalProperties": False,
        },
        "transformer": {
            "type": "object",
            "required": ["op"],
            "properties": {
                "op": {"type": "string"},
                "args": {"type": "object"},
                "override": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "eps_grid": {"type": "array", "items": _NUM, "minItems": 1},
        "f_grid": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "budgets": {
            "type": "object",
            "properties": {"max_horizon": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "checks": {
            "type": "object",
            "properties": {
                "axioms": {
                    "type": "object",
                    "properties": {"n_samples": {"type": "integer", "minimum": 1}, "tol": {"type": "number"}, "cn": {"type": "boolean"}},
                    "additionalProperties": False,
                },
                "map_class": {"type": "array", "items": {"type": "string"}},
                "cauchy_rate": {
                    "type": "object",
                    "required": ["rho"],
                    "properties": {"rho": {"type": "string"}, "pair_budget": {"type": "integer", "minimum": 0}},
                    "additionalProperties": False,
                },
                "uniqueness": {
                    "type": "object",
                    "required": ["c"],
                    "properties": {
                        "c": _NUM,
                        "eta": {"type": "string"},
                        "omega": {"type": "string"},
                        "n_pairs": {"type": "integer", "minimum": 1},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def load_config(path) -> dict:
    """Read and schema-check a config; raises :class:`ConfigError` on any problem."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        cfg = _bundled(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})")
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = [f"  at /{'/'.join(map(str, e.path))}: {e.message}" for e in errors]
        raise ConfigError("config does not match the schema:\n" + "\n".join(lines))
    return cfg


def _bundled(name) -> dict:
    stem = Path(str(name)).name
    if not stem.endswith(".json"):
        stem += ".json"
    res = resources.files("ratelab") / "configs" / stem
    if not res.is_file():
        raise ConfigError(f"config {name!r} not found (neither a file nor a bundled config)")
    return json.loads(res.read_text())


def bundled_configs() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files("ratelab") / "configs").iterdir() if p.name.endswith(".json"))


def build_space(block: dict) -> Space:
    return Space(dimension=block["dimension"], radius=exact(block["radius"]), center=block.get("center"), b=block["b"])


def build_map(block: dict) -> mp.MapDescriptor:
    kind = block["kind"]
    if kind == "identity":
        return mp.identity()
    if kind == "scaled-identity":
        return mp.scaled_identity(block.get("c", 0.5), block.get("center"))
    if kind == "constant":
        return mp.constant(block["value"])
    if kind == "rotation":
        return mp.rotation(block["angle"], block.get("center"))
    return mp.affine(block["matrix"], block.get("shift"))


def build_seq(block: dict) -> sc.ScalarSequence:
    kind = block["kind"]
    if kind == "one-over-n-plus-1":
        return sc.one_over_n_plus_1()
    if kind == "constant":
        return sc.constant_seq(block["c"])
    if kind == "harmonic-power":
        return sc.harmonic_power(block["p"], block.get("scale", 1.0))
    if kind == "zero":
        return sc.zero_seq()
    return sc.table_seq(block["values"])


def build_trajectory(cfg: dict, space: Space, maps: dict) -> sc.Trajectory:
    s = cfg["scheme"]
    kind = s["kind"]

    def need_map(key):
        name = s.get(key)
        if name is None:
            raise ConfigError(f"scheme {kind} needs a {key} map")
        if name not in maps:
            raise ConfigError(f"scheme refers to undefined map {name!r}")
        return maps[name]

    def need(key):
        if key not in s:
            raise ConfigError(f"scheme {kind} needs {key!r}")
        return s[key]

    if kind == "km":
        traj = sc.km_traj(space, need_map("T"), need("start"), build_seq(need("beta")))
    elif kind == "browder":
        traj = sc.browder_traj(space, need_map("T"), need("anchor"), build_seq(need("alpha")))
    elif kind == "viscosity-browder":
        traj = sc.viscosity_browder_traj(space, need_map("T"), need_map("phi"), build_seq(need("alpha")))
    elif kind == "halpern":
        traj = sc.halpern_traj(space, need_map("T"), need("anchor"), need("start"), build_seq(need("alpha")))
    elif kind == "viscosity-halpern":
        traj = sc.viscosity_halpern_traj(space, need_map("T"), need_map("phi"), need("start"), build_seq(need("alpha")))
    else:
        traj = sc.vkm_traj(space, need_map("T"), need_map("phi"), need("start"), build_seq(need("alpha")), build_seq(need("beta")))
    if "errors" in s:
        traj = sc.inject_errors(traj, build_seq(s["errors"]))
    traj.max_horizon = cfg.get("budgets", {}).get("max_horizon", sc.MAX_HORIZON)
    return traj


def _transformer_args(cfg: dict, maps: dict) -> tuple[str, dict]:
    t = cfg["transformer"]
    op = t["op"]
    if op not in OPS:
        raise ConfigError(f"unknown transformer op {op!r}")
    args = dict(t.get("args", {}))
    names = {p.name for p in OPS[op].params}
    if "b" in names:
        args.setdefault("b", cfg["space"]["b"])
    if "delta" in names and args.get("delta", "auto") == "auto":
        phi = maps.get(cfg["scheme"].get("phi", ""))
        if phi is None:
            raise ConfigError("delta 'auto' needs a phi map in the scheme")
        args["delta"] = fmt_exact(exact(phi.claimed.rakotch().constant))
    return op, args


# --------------------------------------------------------------------------
# run


@dataclass
class RunResult:
    reports: list
    bounds: list
    exit_code: int


def run_config(cfg: dict, out_dir: Optional[Path] = None, threads: Optional[int] = None) -> RunResult:
    """Execute every check described by ``cfg``; write artifacts when ``out_dir`` is given."""
    threads = thread_cap() if threads is None else threads
    seed = cfg.get("seed", 0)
    space = build_space(cfg["space"])
    maps = {name: build_map(m) for name, m in cfg.get("maps", {}).items()}
    traj = build_trajectory(cfg, space, maps)
    checks = cfg.get("checks", {})

    # presets and DSL strings are all resolved before any check runs;
    # checks reading the shared trajectory run serially, the rest on a pool
    traj_jobs: list[Callable[[], VerificationReport]] = []
    free_jobs: list[Callable[[], VerificationReport]] = []
    bounds: dict[str, dict] = {}
    if "transformer" in cfg:
        if "eps_grid" not in cfg or "f_grid" not in cfg:
            raise ConfigError("a transformer needs eps_grid and f_grid")
        op, args = _transformer_args(cfg, maps)
        override = cfg["transformer"].get("override")
        eps_grid = [KINDS["eps"].parse(str(e)) for e in cfg["eps_grid"]]
        f_grid = [parse_counterfunction(f) for f in cfg["f_grid"]]
        probe = dict(args)
        if any(p.name == "f" for p in OPS[op].params):
            probe["f"] = f_grid[0].dsl()
        parse_op_args(OPS[op], {**probe, "eps": str(eps_grid[0])})

        def bound_fn(eps, f):
            raw = {**args, "eps": fmt_exact(eps)}
            if any(p.name == "f" for p in OPS[op].params):
                raw["f"] = f.dsl()
            rec = evaluate("override", {"value": override}) if override is not None else evaluate(op, raw)
            bounds[rec["trace_id"]] = rec
            return _Bound(int(rec["value"]), {"trace_id": rec["trace_id"]})

        traj_jobs.append(lambda: check_bound_soundness(
            traj, bound_fn, eps_grid, f_grid, check_id=f"bound-soundness[{op}]", max_workers=threads))
    if "axioms" in checks:
        a = checks["axioms"]
        free_jobs.append(lambda: check_w_axioms(space, n_samples=a.get("n_samples", 1000), tol=a.get("tol", 1e-9), check_cn=a.get("cn", False), seed=seed))
    for name in checks.get("map_class", []):
        if name not in maps:
            raise ConfigError(f"map_class refers to undefined map {name!r}")
        free_jobs.append(lambda m=maps[name]: mp.check_class(m, space, seed=seed))
    if "cauchy_rate" in checks:
        cr = checks["cauchy_rate"]
        rho = parse_eps_rate(cr["rho"])
        eps_grid = [KINDS["eps"].parse(str(e)) for e in cfg.get("eps_grid", ["1"])]
        traj_jobs.append(lambda: check_cauchy_rate(traj, rho, eps_grid, pair_budget=cr.get("pair_budget", 200), seed=seed))
    if "uniqueness" in checks:
        u = checks["uniqueness"]
        eta = _eta(u.get("eta", "hilbert-eta"))
        tb = uq.make_testbed(u["c"], b=int(cfg["space"]["b"]), dimension=space.dimension)
        if "omega" in u:
            tb = uq.AccretiveTestbed(tb.name, tb.T, tb.space, tb.b, tb.lam_min, tb.lam_max, _omega(u["omega"]), eta)
        n_pairs = u.get("n_pairs", 1000)
        eps_u = [KINDS["eps"].parse(str(e)) for e in cfg.get("eps_grid", ["1"])]
        for e in eps_u:
            for check in (uq.check_lemma1, uq.check_lemma2, uq.check_lemma3, uq.check_uniqueness):
                free_jobs.append(lambda e=e, check=check: check(tb, e, n_pairs=n_pairs, seed=seed))

    reports = [job() for job in traj_jobs]
    if threads > 1 and len(free_jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports += list(pool.map(lambda j: j(), free_jobs))
    else:
        reports += [job() for job in free_jobs]

    trace_list = [bounds[k] for k in sorted(bounds)]
    for r in reports:
        if "bound_traces" in r.details:
            for row, tr in zip(r.measured["rows"], r.details.pop("bound_traces")):
                row["trace_id"] = tr["trace_id"]
    status = combine_status([r.status for r in reports]) if reports else PASS
    code = EXIT_FAIL if status == FAIL else EXIT_OK
    if out_dir is not None:
        write_artifacts(Path(out_dir), cfg, traj, reports, trace_list, status)
    return RunResult(reports, trace_list, code)


def write_artifacts(out: Path, cfg: dict, traj: sc.Trajectory, reports: list, bounds: list, status: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out / "trajectory.csv", upto=max(len(traj) - 1, 0))
    (out / "bounds.json").write_text(json.dumps(bounds, indent=2, sort_keys=True) + "\n")
    doc = {"config": cfg["name"], "seed": cfg.get("seed", 0), "status": status, "reports": [r.to_dict() for r in reports]}
    (out / "report.json").write_text(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")
    reports_to_csv(reports, out / "summary.csv")


# --------------------------------------------------------------------------
# subcommands


def cmd_run(ns) -> int:
    cfg = load_config(ns.config)
    out = Path(ns.out) if ns.out else Path("ratelab-out") / cfg["name"]
    res = run_config(cfg, out)
    for r in res.reports:
        print(r.summary())
    inconclusive = [r.check_id for r in res.reports if r.status == INCONCLUSIVE]
    if inconclusive:
        print("inconclusive (not counted as failures): " + ", ".join(inconclusive))
    print(f"artifacts written to {out}")
    return res.exit_code


def _print_record(rec: dict) -> None:
    value = rec["value"]
    print(f"{value} {rec['float']!r}" if "float" in rec else value)
    print(json.dumps(rec, indent=2, sort_keys=True))


def cmd_rates(ns) -> int:
    if ns.op == "replay":
        return cmd_replay(ns.trace)
    raw = {p.name: getattr(ns, p.name.replace("-", "_")) for p in OPS[ns.op].params}
    raw = {k: v for k, v in raw.items() if v is not None}
    _print_record(evaluate(ns.op, raw))
    return EXIT_OK


def _records(doc) -> list:
    if isinstance(doc, list):
        return doc
    if isinstance(doc, dict) and "op" in doc:
        return [doc]
    raise ConfigError("replay expects a trace record or a list of them")


def cmd_replay(path) -> int:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read trace file {path}: {exc}")
    mismatches = 0
    records = _records(doc)
    for rec in records:
        again = evaluate(rec["op"], rec["args"])
        same = again["value"] == rec["value"] and again["trace_id"] == rec.get("trace_id", again["trace_id"])
        mismatches += not same
        print(f"{rec.get('trace_id', '?')} {rec['op']}: {rec['value']} -> {again['value']} {'ok' if same else 'MISMATCH'}")
    print(f"replayed {len(records)} trace(s), {mismatches} mismatch(es)")
    return EXIT_OK if mismatches == 0 else EXIT_FAIL


def cmd_check_axioms(ns) -> int:
    cls = CorruptedWSpace if ns.corrupted else Space
    space = cls(dimension=ns.dimension, radius=exact(ns.radius), b=ns.b)
    report = check_w_axioms(space, n_samples=ns.samples, tol=ns.tol, check_cn=ns.cn, seed=ns.seed)
    print(report.summary())
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_dump_traj(ns) -> int:
    cfg = load_config(ns.config)
    space = build_space(cfg["space"])
    maps = {name: build_map(m) for name, m in cfg.get("maps", {}).items()}
    traj = build_trajectory(cfg, space, maps)
    if ns.out:
        traj.to_csv(ns.out, upto=ns.upto)
        print(f"wrote indices 0..{ns.upto} to {ns.out}")
    else:
        traj.to_csv(sys.stdout, upto=ns.upto)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratelab", description="Rates for viscosity and anchored fixed-point iterations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config (path or bundled name)")
    p.add_argument("config")
    p.add_argument("--out", help="artifact directory (default ratelab-out/<name>)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rates", help="evaluate one rate formula and print value plus trace")
    ops = p.add_subparsers(dest="op", required=True)
    for op in OPS.values():
        q = ops.add_parser(op.name, help=op.help)
        for par in op.params:
            flag = f"--{par.name}"
            if par.kind == "flag":
                q.add_argument(flag, action="store_true", default=None)
            elif par.kind == "int":
                q.add_argument(flag, type=int, required=par.required, default=None, help=par.help)
            else:
                q.add_argument(flag, required=par.required, default=None, help=par.help)
    q = ops.add_parser("replay", help="re-evaluate trace records and compare values")
    q.add_argument("trace")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("check-axioms", help="sample the convexity axioms on a Euclidean ball")
    p.add_argument("--dimension", type=int, default=2)
    p.add_argument("--radius", default="1")
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--cn", action="store_true")
    p.add_argument("--corrupted", action="store_true", help="use the deliberately broken convexity map")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_axioms)

    p = sub.add_parser("dump-traj", help="write a config's trajectory as CSV")
    p.add_argument("config")
    p.add_argument("--upto", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_traj)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (ConfigError, InputError, ModulusError, ContractError) as exc:
        if ns.command == "rates" and ns.op != "replay":
            parser.error(f"rates {ns.op}: {exc}")
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RatelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
