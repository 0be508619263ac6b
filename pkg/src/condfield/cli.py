"""Command-line front end.

    condfield validate    --model M [--system f|1f|palm|d|1d|all] [--perturb]
    condfield validate    --spec FIXTURE
    condfield reconstruct --model M [--via f|1f|palm]
    condfield lift        --model M [--route 1f_product|1f_ratio|palm]
    condfield analyze     --model M [--what markov|mixing|dobrushin|sullivan]
    condfield export      --model M [--system f|1f|palm|d|1d] --out FIXTURE

Reports are JSON lines (or plain text with --format text): a header with
tool version, seed and model digest, one line per check, and a summary.
Exit codes: 0 all checks pass, 1 a check failed, 2 unreadable input,
3 a size or work budget was exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, settings
from ._tables import popcount
from .analysis import (
    dobrushin_summary,
    is_markov_1f,
    markov_equivalence_check,
    mixing_bound_check,
    mixing_rho_matrix,
    sullivan_check,
)
from .consistency import (
    Report,
    ReportBundle,
    check_1dspec,
    check_1f_derived,
    check_1fspec,
    check_dspec,
    check_fspec,
    check_fspec_derived,
    check_palm,
    perturb,
    witness_to_json,
)
from .errors import BudgetError, DomainError, InvalidDistributionError, ReconstructionError
from .lattice import Alphabet, LatticePoint, NeighborhoodSystem, Window, as_point
from .measures import (
    FiniteField,
    Potential,
    gibbs_field,
    ising_potential,
    product_field,
    random_positive_field,
)
from .reconstruct import (
    lift_1f_to_f_product,
    lift_1f_to_f_ratio,
    lift_palm_to_f,
    reconstruct_1fspec,
    reconstruct_fspec,
    reconstruct_palm,
)
from .specifications import (
    SYSTEMS,
    dspec_from_field,
    fspec_from_field,
    onedspec_from_field,
    onefspec_from_field,
    palm_from_field,
)

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_BUDGET = 0, 1, 2, 3


class ModelError(ValueError):
    """The model or fixture file cannot be turned into a field."""


# -- serialization ------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj) -> str:
    """Compact JSON with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, LatticePoint):
        return dumps(list(obj.coords))
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- model files --------------------------------------------------------------


@dataclass
class Model:
    field: FiniteField
    neighborhood: NeighborhoodSystem
    digest: str
    seed: int
    kind: str


def _points(raw, dimension: int) -> list[LatticePoint]:
    pts = []
    for c in raw:
        p = as_point(c if isinstance(c, (list, tuple)) else [c])
        if p.dimension != dimension:
            raise ModelError(f"point {list(p.coords)} does not have dimension {dimension}")
        pts.append(p)
    return pts


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ModelError(f"missing '{key}' in {where}")
    return block[key]


def _potential(params: dict, master: Window, X: Alphabet, dimension: int) -> Potential:
    if "site_terms" in params or "pair_terms" in params:
        sites = {}
        for entry in params.get("site_terms", []):
            pt, energies = entry
            sites[_points([pt], dimension)[0]] = energies
        pairs = {}
        for entry in params.get("pair_terms", []):
            a, b, energies = entry
            a, b = _points([a, b], dimension)
            pairs[(a, b)] = energies
        phi = Potential(sites, pairs)
    else:
        edges = None
        if "edges" in params:
            edges = [tuple(_points(e, dimension)) for e in params["edges"]]
        phi = ising_potential(master, X, float(params.get("J", 1.0)), float(params.get("h", 0.0)),
                              edges=edges)
    phi.check_within(master, X)
    return phi


def load_model(path: str, *, tol_norm: float = settings.TAU_NORM) -> Model:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelError("a model file holds one JSON object")
    try:
        return _build_model(doc, hashlib.sha256(raw).hexdigest(), tol_norm)
    except (DomainError, InvalidDistributionError, TypeError, ValueError) as exc:
        if isinstance(exc, (ModelError, BudgetError)):
            raise
        raise ModelError(str(exc)) from None


def _build_model(doc: dict, digest: str, tol_norm: float) -> Model:
    dimension = int(_require(doc, "dimension", "model"))
    if dimension < 1:
        raise ModelError("dimension must be at least 1")
    X = Alphabet(tuple(_require(doc, "alphabet", "model")))
    master = Window(tuple(_points(_require(doc, "master", "model"), dimension)))
    if len(master) == 0:
        raise ModelError("the master window is empty")
    kind = _require(doc, "kind", "model")
    params = doc.get("parameters", {})
    if not isinstance(params, dict):
        raise ModelError("'parameters' must be an object")
    seed = int(doc.get("seed", 0))
    phi = None
    if kind == "explicit_table":
        joint = np.asarray(_require(params, "joint", "parameters"), dtype=float)
        P = FiniteField(master, X, joint, tol=tol_norm)
    elif kind == "product":
        if "sites" in params:
            p = {_points([pt], dimension)[0]: probs for pt, probs in params["sites"]}
        else:
            p = _require(params, "site", "parameters")
        P = product_field(master, X, p)
    elif kind == "gibbs":
        beta = float(_require(params, "beta", "parameters"))
        phi = _potential(params, master, X, dimension)
        P = gibbs_field(master, X, phi, beta, cap=settings.MAX_JOINT_STATES)
    elif kind == "random_positive":
        floor = params.get("floor")
        P = random_positive_field(master, X, seed, None if floor is None else float(floor))
    else:
        raise ModelError(f"unknown model kind {kind!r}")
    nb = doc.get("neighborhood")
    if nb is None:
        if phi is not None:
            nbhd = phi.interaction_graph()
        elif kind == "product":
            nbhd = NeighborhoodSystem.empty()
        else:
            nbhd = NeighborhoodSystem.nearest(dimension)
    elif nb == "nearest":
        nbhd = NeighborhoodSystem.nearest(dimension)
    elif nb == "empty":
        nbhd = NeighborhoodSystem.empty()
    elif isinstance(nb, dict) and "edges" in nb:
        nbhd = NeighborhoodSystem.from_edges(tuple(_points(e, dimension)) for e in nb["edges"])
    else:
        raise ModelError("neighborhood must be 'nearest', 'empty' or {'edges': [...]}")
    return Model(P, nbhd, digest, seed, kind)


def load_fixture(path: str, *, tol_norm: float = settings.TAU_NORM):
    """A spec fixture: a header line, then one record per (V, z)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        lines = [json.loads(line) for line in raw.decode().splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"cannot read fixture {path}: {exc}") from None
    if not lines or lines[0].get("type") != "spec":
        raise ModelError("fixture must start with a {'type': 'spec', ...} header")
    head = lines[0]
    try:
        kind = head["system"]
        cls = SYSTEMS[kind]
        dimension = int(head["dimension"])
        X = Alphabet(tuple(head["alphabet"]))
        master = Window(tuple(_points(head["master"], dimension)))
        spec = cls.from_records(master, X, lines[1:], validate=False)
        spec = cls(master, X, dict(spec.tables()), tol=tol_norm)
    except KeyError as exc:
        raise ModelError(f"fixture header lacks {exc}") from None
    except (DomainError, InvalidDistributionError, TypeError, ValueError) as exc:
        raise ModelError(str(exc)) from None
    return spec, hashlib.sha256(raw).hexdigest()


# -- run configuration and output ---------------------------------------------


@dataclass
class RunConfig:
    tol_eq: float = settings.TAU_EQ
    tol_norm: float = settings.TAU_NORM
    budget: int = settings.WORK_BUDGET
    probe_limit: int = settings.PROBE_LIMIT
    probe_samples: int = settings.PROBE_SAMPLES
    fmt: str = "json"
    seed: int = 0

    def validate(self):
        if not (self.tol_eq > 0 and self.tol_norm > 0):
            raise ModelError("tolerances must be positive")
        if self.budget < 1:
            raise ModelError("the work budget must be at least 1")
        if self.probe_limit < 1 or self.probe_samples < 1:
            raise ModelError("probe counts must be at least 1")


class Output:
    def __init__(self, cfg: RunConfig, command: str, digest: str | None):
        self.cfg = cfg
        self.lines: list[str] = []
        self.passed = True
        self.sampled = False
        self._emit({"type": "header", "tool": "condfield", "version": __version__,
                    "command": command, "seed": cfg.seed, "model_sha256": digest,
                    "tolerance_eq": cfg.tol_eq, "tolerance_norm": cfg.tol_norm,
                    "budget": cfg.budget})

    def _emit(self, rec: dict):
        if self.cfg.fmt == "json":
            self.lines.append(dumps(rec))
        else:
            self.lines.append(_text(rec))

    def report(self, r: Report, system: str | None = None):
        self.passed &= r.passed
        self.sampled |= r.sampled
        rec = {"type": "check"}
        if system is not None:
            rec["system"] = system
        rec.update(r.to_dict())
        self._emit(rec)

    def bundle(self, b: ReportBundle, system: str | None = None):
        for r in b:
            self.report(r, system)

    def result(self, name: str, passed: bool | None = None, **values):
        if passed is not None:
            self.passed &= passed
        rec = {"type": "result", "name": name}
        if passed is not None:
            rec["passed"] = passed
        rec.update(values)
        self._emit(rec)

    def finish(self, code: int | None = None) -> int:
        if code is None:
            code = EXIT_OK if self.passed else EXIT_FAIL
        self._emit({"type": "summary", "passed": code == EXIT_OK, "sampled": self.sampled,
                    "exit_code": code})
        return code

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _text(rec: dict) -> str:
    kind = rec.get("type")
    if kind == "header":
        return (f"# condfield {rec['version']} {rec['command']} seed={rec['seed']} "
                f"model={rec['model_sha256']} tol_eq={_fmt_float(rec['tolerance_eq'])} "
                f"budget={rec['budget']}")
    if kind == "check":
        status = "PASS" if rec["passed"] else "FAIL"
        system = f"[{rec['system']}] " if "system" in rec else ""
        line = (f"{status} {system}{rec['check']} worst={_fmt_float(rec['worst_violation'])} "
                f"checked={rec['count_checked']}")
        if rec["sampled"]:
            line += " sampled"
        if not rec["passed"] and rec["witness"] is not None:
            line += " witness=" + dumps(rec["witness"])
        return line
    if kind == "summary":
        return (f"# summary passed={rec['passed']} sampled={rec['sampled']} "
                f"exit={rec['exit_code']}")
    body = {k: v for k, v in rec.items() if k not in ("type", "name", "passed")}
    status = "" if "passed" not in rec else ("PASS " if rec["passed"] else "FAIL ")
    return f"{status}{rec.get('name', kind)} " + dumps(body)


# -- commands -----------------------------------------------------------------

DERIVE = {
    "f": fspec_from_field,
    "1f": onefspec_from_field,
    "palm": palm_from_field,
    "d": dspec_from_field,
    "1d": onedspec_from_field,
}


def _check_spec(out: Output, kind: str, spec, cfg: RunConfig):
    kw = dict(tol=cfg.tol_eq, budget=cfg.budget, seed=cfg.seed)
    if kind == "f":
        base = check_fspec(spec, **kw)
        out.report(base, kind)
        out.bundle(check_fspec_derived(spec, base=base, **kw), kind)
    elif kind == "1f":
        base = check_1fspec(spec, **kw)
        out.report(base, kind)
        out.bundle(check_1f_derived(spec, base=base, **kw), kind)
    elif kind == "palm":
        out.bundle(check_palm(spec, **kw), kind)
    elif kind == "d":
        out.bundle(check_dspec(spec, **kw), kind)
    elif kind == "1d":
        out.report(check_1dspec(spec, **kw), kind)


def cmd_validate(args, cfg: RunConfig) -> tuple[Output, int]:
    if args.spec:
        spec, digest = load_fixture(args.spec, tol_norm=cfg.tol_norm)
        out = Output(cfg, "validate", digest)
        _check_spec(out, spec.kind, spec, cfg)
        return out, out.finish()
    model = load_model(args.model, tol_norm=cfg.tol_norm)
    out = Output(cfg, "validate", model.digest)
    kinds = list(DERIVE) if args.system == "all" else [args.system]
    for kind in kinds:
        spec = DERIVE[kind](model.field)
        if args.perturb:
            spec, info = perturb(spec, delta=args.perturb_delta, seed=cfg.seed)
            out.result("perturbation", system=kind, **witness_to_json(info))
        _check_spec(out, kind, spec, cfg)
    return out, out.finish()


def cmd_reconstruct(args, cfg: RunConfig) -> tuple[Output, int]:
    model = load_model(args.model, tol_norm=cfg.tol_norm)
    P = model.field
    out = Output(cfg, "reconstruct", model.digest)
    try:
        if args.via == "f":
            rec = reconstruct_fspec(fspec_from_field(P), tol=cfg.tol_eq, tol_norm=cfg.tol_norm,
                                    seed=cfg.seed, probe_limit=cfg.probe_limit,
                                    probe_samples=cfg.probe_samples)
        elif args.via == "1f":
            rec = reconstruct_1fspec(onefspec_from_field(P), tol=cfg.tol_eq,
                                     tol_norm=cfg.tol_norm, seed=cfg.seed)
        else:
            rec = reconstruct_palm(palm_from_field(P), tol=cfg.tol_eq, tol_norm=cfg.tol_norm)
    except ReconstructionError as exc:
        out.result("reconstruction", False, via=args.via, error=str(exc),
                   witness=_json_witness(exc.witness))
        return out, out.finish()
    dev = float(np.max(np.abs(rec.field.array - P.array)))
    out.sampled |= rec.sampled
    out.result("reconstruction", dev <= cfg.tol_eq, via=args.via, method=rec.method,
               max_deviation=dev, defect=rec.defect, alternatives_checked=rec.checked,
               alternative_disagreement=rec.disagreement, sampled=rec.sampled)
    return out, out.finish()


def _json_witness(w):
    if w is None:
        return None
    out = {}
    for k, v in w.items():
        if isinstance(v, tuple):
            out[k] = [witness_to_json({"_": x})["_"] for x in v]
        elif isinstance(v, list):
            out[k] = [witness_to_json({"_": x})["_"] for x in v]
        else:
            out[k] = witness_to_json({"_": v})["_"]
    return out


def cmd_lift(args, cfg: RunConfig) -> tuple[Output, int]:
    model = load_model(args.model, tol_norm=cfg.tol_norm)
    P = model.field
    out = Output(cfg, "lift", model.digest)
    truth = fspec_from_field(P)
    try:
        if args.route == "1f_product":
            lifted = lift_1f_to_f_product(truth.one_point(), tol=cfg.tol_eq)
        elif args.route == "1f_ratio":
            lifted = lift_1f_to_f_ratio(truth.one_point(), tol=cfg.tol_eq)
        else:
            lifted = lift_palm_to_f(truth.palm(), tol=cfg.tol_eq)
    except ReconstructionError as exc:
        out.result("lift", False, route=args.route, error=str(exc),
                   witness=_json_witness(exc.witness))
        return out, out.finish()
    out.report(check_fspec(lifted, tol=cfg.tol_eq, budget=cfg.budget, seed=cfg.seed), "f")
    dev = lifted.max_abs_diff(truth)
    out.result("lift", dev <= cfg.tol_eq, route=args.route, max_deviation=dev)
    return out, out.finish()


def _disjoint_pairs(n: int, limit: int, seed: int):
    pairs = []
    for assign in itertools.product(range(3), repeat=n):
        v = sum(1 << i for i, a in enumerate(assign) if a == 1)
        lam = sum(1 << i for i, a in enumerate(assign) if a == 2)
        if v and lam:
            pairs.append((v, lam))
    if len(pairs) <= limit:
        return pairs, False
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 7])
    idx = sorted(rng.choice(len(pairs), size=limit, replace=False))
    return [pairs[int(i)] for i in idx], True


def cmd_analyze(args, cfg: RunConfig) -> tuple[Output, int]:
    model = load_model(args.model, tol_norm=cfg.tol_norm)
    P = model.field
    out = Output(cfg, "analyze", model.digest)
    kw = dict(tol=cfg.tol_eq, budget=cfg.budget, seed=cfg.seed)
    if args.what == "markov":
        r1 = is_markov_1f(onefspec_from_field(P), model.neighborhood, **kw)
        out.report(r1)
        eq = markov_equivalence_check(P, model.neighborhood, **kw)
        out.bundle(eq)
        out.result("markov_f", eq.details["markov"],
                   worst_violation=eq.details["markov_f"]["worst_violation"],
                   witness=eq.details["markov_f"]["witness"])
    elif args.what == "mixing":
        rho = mixing_rho_matrix(P, budget=cfg.budget, seed=cfg.seed)
        out.sampled |= rho.sampled
        out.result("mixing_rho", None, **rho.to_dict())
        pairs, sampled = _disjoint_pairs(P.n, cfg.probe_limit, cfg.seed)
        worst, failed = 0.0, None
        for v, lam in pairs:
            r = mixing_bound_check(P, P.window(v), P.window(lam), rho=rho, tol=cfg.tol_eq)
            if not r.passed and failed is None:
                failed = r
            worst = max(worst, r.worst_violation)
        summary = Report("mixing_bound", failed is None, worst, len(pairs),
                         witness=None if failed is None else failed.witness,
                         sampled=sampled or rho.sampled, tolerance=cfg.tol_eq,
                         details={"pairs": len(pairs)})
        out.report(summary)
    elif args.what == "dobrushin":
        s = dobrushin_summary(P)
        out.result("dobrushin", None, finite_volume=True,
                   per_point=[[list(t.coords), v] for t, v in sorted(s["per_point"].items())],
                   max=s["max"], rho=s["rho"].to_dict())
    elif args.what == "sullivan":
        out.report(sullivan_check(P, tol=cfg.tol_norm))
    return out, out.finish()


def cmd_export(args, cfg: RunConfig) -> tuple[Output, int]:
    model = load_model(args.model, tol_norm=cfg.tol_norm)
    spec = DERIVE[args.system](model.field)
    P = model.field
    head = {"type": "spec", "system": spec.kind, "dimension": P.master.dimension,
            "alphabet": list(P.alphabet.symbols), "master": [list(p.coords) for p in P.master]}
    lines = [dumps(head)] + [dumps(rec) for rec in spec.to_records()]
    out = Output(cfg, "export", model.digest)
    out.result("export", True, system=spec.kind, records=len(lines) - 1)
    out.fixture = "\n".join(lines) + "\n"
    return out, out.finish()


COMMANDS = {
    "validate": cmd_validate,
    "reconstruct": cmd_reconstruct,
    "lift": cmd_lift,
    "analyze": cmd_analyze,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model file (JSON)")
    common.add_argument("--tolerance-eq", type=float, default=settings.TAU_EQ)
    common.add_argument("--tolerance-norm", type=float, default=settings.TAU_NORM)
    common.add_argument("--budget", type=int, default=settings.WORK_BUDGET,
                        help="identity evaluations per check before sampling "
                             "(CONDFIELD_BUDGET overrides)")
    common.add_argument("--probe-limit", type=int, default=settings.PROBE_LIMIT)
    common.add_argument("--probe-samples", type=int, default=settings.PROBE_SAMPLES)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("text", "json"), default="json")
    common.add_argument("--out", help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="condfield", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"condfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="run the consistency checkers")
    p.add_argument("--system", choices=("f", "1f", "palm", "d", "1d", "all"), default="all")
    p.add_argument("--spec", help="validate a stored spec fixture instead of a model")
    p.add_argument("--perturb", action="store_true",
                   help="perturb one entry of each derived system before checking")
    p.add_argument("--perturb-delta", type=float, default=0.05)

    p = sub.add_parser("reconstruct", parents=[common], help="rebuild the field from a system")
    p.add_argument("--via", choices=("f", "1f", "palm"), default="f")

    p = sub.add_parser("lift", parents=[common], help="lift a smaller system to an f-specification")
    p.add_argument("--route", choices=("1f_product", "1f_ratio", "palm"), default="1f_product")

    p = sub.add_parser("analyze", parents=[common], help="Markov, mixing, Dobrushin, Sullivan")
    p.add_argument("--what", choices=("markov", "mixing", "dobrushin", "sullivan"),
                   default="markov")

    p = sub.add_parser("export", parents=[common], help="write a derived system as a fixture")
    p.add_argument("--system", choices=("f", "1f", "palm", "d", "1d"), default="f")
    return parser


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    budget = args.budget
    env = os.environ.get("CONDFIELD_BUDGET")
    if env is not None:
        try:
            budget = int(env)
        except ValueError:
            print(f"condfield: CONDFIELD_BUDGET must be an integer, got {env!r}", file=sys.stderr)
            return EXIT_PARSE
    cfg = RunConfig(args.tolerance_eq, args.tolerance_norm, budget, args.probe_limit,
                    args.probe_samples, args.format, args.seed)
    try:
        cfg.validate()
        if args.command != "validate" or not args.spec:
            if not args.model:
                raise ModelError("--model is required")
        if args.command == "export" and not args.out:
            raise ModelError("export needs --out for the fixture")
        out, code = COMMANDS[args.command](args, cfg)
    except (ModelError, DomainError) as exc:
        # DomainError here means the model does not suit the command (e.g. Palm on one site)
        print(f"condfield: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetError as exc:
        print(f"condfield: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if args.command == "export":
        _write(args.out, out.fixture)
        sys.stdout.write(out.text())
    else:
        _write(args.out, out.text())
    return code


if __name__ == "__main__":
    sys.exit(main())
