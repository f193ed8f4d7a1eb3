"""Batch front-end: one JSON scenario document in, JSON summary and CSV series out.

Exit status: 0 on success, 2 when a certificate (or ALH check) is
inconclusive, 1 on any error. Floats are written with 17 significant digits
and object keys are sorted, so re-running a scenario reproduces its JSON
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import barriers, conformal, eigen, geometry, yamabe_radial
from .errors import ConfigError, YamabeLabError
from .profiles import profile_from_dict

COMMANDS = ("certify", "eigen", "yamabe-annulus", "barriers", "classify", "sharpness", "alh-check", "sweep")
SWEEPABLE = ("certify", "eigen", "sharpness", "yamabe-annulus")
DEFAULT_CAP = 10_000

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2


# ---------------------------------------------------------------------------
# deterministic serialisation


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return {None: "null", True: "true", False: "false"}[None if obj is None else bool(obj)]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = ",\n".join(f"{pad}{json.dumps(k, ensure_ascii=False)}: {dumps(v, indent, _level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(float(v)) else format(float(v), ".17g")
    return str(v)


def to_csv(columns, rows) -> str:
    """RFC-4180 text: header row, CRLF line endings, minimal quoting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# scenario parsing


@dataclass
class Scenario:
    command: str
    n: int
    spec: dict | None = None
    parameters: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    text: str = ""


def _line_of(text: str, key: str):
    needle = json.dumps(key) + ":"
    at = text.find(needle)
    if at < 0:
        at = text.find(json.dumps(key))
    return None if at < 0 else text.count("\n", 0, at) + 1


def load_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
    return scenario_from_dict(doc, text)


def scenario_from_dict(doc, text: str = "") -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object", line=1)
    cmd = doc.get("command")
    if cmd is None:
        raise ConfigError("missing required field", field="command")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}",
                          field="command", line=_line_of(text, "command"))
    if "n" not in doc:
        raise ConfigError("missing required field", field="n")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 3:
        raise ConfigError("n must be an integer >= 3", field="n", line=_line_of(text, "n"))
    params = doc.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters must be an object", field="parameters", line=_line_of(text, "parameters"))
    return Scenario(cmd, n, doc.get("spec"), dict(params), dict(doc.get("output", {})), doc, text)


def _param(sc: Scenario, key, default=..., kind=float, positive=False):
    p = sc.parameters
    if key not in p:
        if default is ...:
            raise ConfigError("missing required field", field=f"parameters.{key}")
        return default
    v = p[key]
    try:
        if kind is int:
            if isinstance(v, bool) or int(v) != v:
                raise ValueError
            v = int(v)
        elif kind is float:
            if isinstance(v, bool):
                raise ValueError
            v = float(v)
        elif kind is bool:
            if not isinstance(v, bool):
                raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {v!r}", field=f"parameters.{key}",
                          line=_line_of(sc.text, key)) from None
    if positive and not v > 0:
        raise ConfigError(f"must be positive, got {v!r}", field=f"parameters.{key}", line=_line_of(sc.text, key))
    return v


def build_spec(sc: Scenario):
    """Warped product from the ``spec`` block: ``exp_torus``, ``reference`` or ``warped``."""
    doc = sc.spec
    if not isinstance(doc, dict):
        raise ConfigError("missing or invalid spec block", field="spec")
    builder = doc.get("builder", "warped")
    try:
        if builder == "exp_torus":
            if "alphas" in doc:
                alphas = [float(a) for a in doc["alphas"]]
            elif "beta" in doc:
                alphas = geometry.choose_alphas(float(doc["beta"]), sc.n)
            else:
                raise ConfigError("exp_torus needs 'alphas' or 'beta'", field="spec.beta")
            spec, _ = geometry.exp_torus_spec(alphas, float(doc.get("circle_length", 1.0)))
        elif builder == "reference":
            ref = geometry.ReferenceHyperbolic(int(doc.get("k", 0)), float(doc.get("r0", 1.0)), sc.n,
                                               float(doc.get("fibre_volume", 1.0)))
            spec = ref.spec(tuple(doc.get("domain", (0.0, None))))
        elif builder == "warped":
            spec = geometry.WarpedProductSpec.from_dict(doc)
        else:
            raise ConfigError(f"unknown spec builder {builder!r}", field="spec.builder", line=_line_of(sc.text, "builder"))
    except ConfigError:
        raise
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid spec block: {exc}", field="spec") from None
    if spec.n != sc.n:
        raise ConfigError(f"spec has dimension {spec.n} but n = {sc.n}", field="n", line=_line_of(sc.text, "n"))
    return spec


def _domain(sc: Scenario) -> eigen.RadialDomain:
    W = _param(sc, "W", positive=True)
    R = _param(sc, "R", positive=True)
    c = _param(sc, "center", 0.0)
    return eigen.RadialDomain.centred(c, W, R)


def _range(sc: Scenario, key, default):
    doc = sc.parameters.get(key, default)
    if isinstance(doc, list):
        return np.asarray(doc, dtype=float)
    try:
        return np.linspace(float(doc["start"]), float(doc["stop"]), int(doc["num"]))
    except (KeyError, TypeError, ValueError):
        raise ConfigError("expected a list or {start, stop, num}", field=f"parameters.{key}",
                          line=_line_of(sc.text, key)) from None


def _profile(sc: Scenario, key):
    if key not in sc.parameters:
        raise ConfigError("missing required field", field=f"parameters.{key}")
    return profile_from_dict(sc.parameters[key])


# ---------------------------------------------------------------------------
# commands; each returns (summary, csv_columns, csv_rows, exit_status)


def _beta_of(spec):
    """Total exponent ``sum alpha_i`` when every warping is exponential, else ``None``."""
    docs = [p.spec for p in spec.warpings]
    if all(isinstance(d, dict) and d.get("kind") == "exp" for d in docs):
        return float(sum(float(d.get("alpha", 1.0)) for d in docs))
    return None


def cmd_certify(sc):
    spec = build_spec(sc)
    dom = _domain(sc)
    cert = eigen.negativity_certificate(spec, dom, _param(sc, "numeric", True, bool), _param(sc, "grid_size", 2048, int))
    res = cert.to_dict()
    res["beta"] = _beta_of(spec)
    res["W"], res["R"] = dom.W, dom.R
    status = EXIT_OK if cert.certified else EXIT_INCONCLUSIVE
    return {"result": res}, None, None, status


def cmd_eigen(sc):
    spec = build_spec(sc)
    dom = _domain(sc)
    gs = _param(sc, "grid_size", 2048, int)
    rep = eigen.first_eigenvalue(spec, dom, gs)
    res = rep.to_dict()
    try:
        res["upper_bound"] = eigen.eigen_upper_bound(spec, dom, gs).to_dict()
    except YamabeLabError as exc:
        res["upper_bound"] = {"unavailable": str(exc)}
    res["beta"] = _beta_of(spec)
    res["W"], res["R"] = dom.W, dom.R
    rows = [{"r": r, "eigenfunction": u} for r, u in zip(rep.grid, rep.eigenfunction)]
    return {"result": res}, ["r", "eigenfunction"], rows, EXIT_OK


def cmd_yamabe_annulus(sc, seed=0):
    R = _param(sc, "R", positive=True)
    gs = _param(sc, "grid_size", 1024, int)
    tol = _param(sc, "tol", 1e-10, positive=True)
    drift = sc.parameters.get("drift")
    if drift is None:
        bvp = yamabe_radial.AnnulusBVP(R, sc.n)
    else:
        if not isinstance(drift, dict):
            raise ConfigError("drift must be an object {k, r0}", field="parameters.drift")
        bvp = yamabe_radial.AnnulusBVP.reference(R, sc.n, int(drift.get("k", 0)), float(drift.get("r0", 1.0)))
    sol = yamabe_radial.solve_blowup(bvp, gs, tol)
    res = sol.summary()
    if "R_list" in sc.parameters:
        res["limit_scan"] = yamabe_radial.uR_limit_scan(sc.parameters["R_list"], sc.n, gs).to_dict()
    checks = _param(sc, "scaling_checks", 0, int)
    if checks:
        fam = yamabe_radial.cached_family(sc.n, gs)
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(checks):
            S, Rt = np.sort(rng.uniform(1.0, 5.0, 2))
            r = float(rng.uniform(-0.9, 0.9) * Rt)
            out.append({"R": float(Rt), "S": float(S), "r": r,
                        "residual": yamabe_radial.verify_scaling_property(fam, float(Rt), float(S), r)})
        res["scaling_checks"] = out
    rows = [{"r": r, "u": u, "v": v, "residual": e} for r, u, v, e in zip(sol.grid, sol.u, sol.v, sol.node_residual)]
    return {"result": res}, ["r", "u", "v", "residual"], rows, EXIT_OK


def cmd_barriers(sc):
    alpha = _param(sc, "alpha", positive=True)
    k = _param(sc, "k", 0, int)
    r0 = _param(sc, "r0", 1.0)
    res = {}
    sub = sup = None
    if "beta" in sc.parameters:
        sub = barriers.build_subsolution(sc.n, alpha, _param(sc, "beta", positive=True), _param(sc, "C1", 1.0), k, r0)
        res["subsolution"] = sub.to_dict()
    sup = barriers.build_supersolution(sc.n, alpha, _param(sc, "C", 1.0), sc.parameters.get("C1"), k, r0)
    res["supersolution"] = sup.to_dict()
    top = max(sup.R, sub.r_delta if sub else 0.0) + 10.0 / alpha
    r = np.linspace(0.0, top, _param(sc, "samples", 401, int))
    up = sup.profile()(r)
    um = sub.profile()(r) if sub else np.full_like(r, np.nan)
    rows = [{"r": a, "u_minus": b, "u_plus": c} for a, b, c in zip(r, um, up)]
    return {"result": res}, ["r", "u_minus", "u_plus"], rows, EXIT_OK


def cmd_classify(sc):
    f = _profile(sc, "warping")
    k = _param(sc, "k", 1, int)
    result = conformal.classify_warping(f, k, sc.n, _param(sc, "fibre_volume", 1.0, positive=True))
    z = _range(sc, "z_grid", {"start": 0.0, "stop": 5.0, "num": 51})
    res = result.to_dict()
    rows = None
    if result.K is not None:
        zz, K, K1 = result.sample(z)
        rows = [{"z": a, "K": b, "K_prime": c} for a, b, c in zip(zz, K, K1)]
    return {"result": res}, ["z", "K", "K_prime"] if rows else None, rows, EXIT_OK


def cmd_sharpness(sc):
    rep = eigen.sharpness_experiment(_param(sc, "beta", positive=True), sc.n, _param(sc, "R", positive=True),
                                     _param(sc, "grid_size", 2048, int))
    return {"result": rep.to_dict()}, None, None, EXIT_OK


def cmd_alh_check(sc):
    p = _profile(sc, "warping")
    radii = _range(sc, "radii", {"start": 1.0, "stop": 10.0, "num": 50})
    alpha = _param(sc, "alpha", positive=True)
    order = _param(sc, "order", 2, int)
    dev = geometry.alh_3d_example_deviations(p, radii, order)
    rep = geometry.verify_alh_decay(radii, dev, alpha, order, _param(sc, "slack", 2.0, positive=True))
    return {"result": rep.to_dict()}, None, None, EXIT_OK if rep.passed else EXIT_INCONCLUSIVE


# sweep rows: fixed columns per base command
SWEEP_COLUMNS = {
    "certify": ["beta", "W", "R", "ratio", "sinh2_bound", "lambda_upper", "lambda_numeric", "verdict"],
    "eigen": ["beta", "W", "R", "lambda", "error_estimate"],
    "sharpness": ["beta", "n", "R", "lambda_numeric", "lambda_exact", "lower_bound", "above_bound",
                  "volume_ratio", "C_fit"],
    "yamabe-annulus": ["n", "R", "u0", "boundary_coeff", "fitted_exponent", "residual"],
}


def _values(key, spec, text):
    if isinstance(spec, list):
        vals = spec
    elif isinstance(spec, dict) and {"start", "stop", "step"} <= spec.keys():
        a, b, h = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        if not h > 0:
            raise ConfigError("step must be positive", field=f"grid.{key}", line=_line_of(text, key))
        count = int(math.floor((b - a) / h + 1e-9)) + 1
        vals = [round(a + i * h, 12) for i in range(max(count, 0))]
    else:
        raise ConfigError("expected a list or {start, stop, step}", field=f"grid.{key}", line=_line_of(text, key))
    if not vals:
        raise ConfigError("empty range", field=f"grid.{key}", line=_line_of(text, key))
    return sorted(vals)


def sweep_cases(sc: Scenario):
    """Base scenarios for every grid point, in lexicographic parameter order."""
    doc = sc.raw
    base = doc.get("base")
    if not isinstance(base, dict):
        raise ConfigError("missing required field", field="base")
    bcmd = base.get("command")
    if bcmd not in SWEEPABLE:
        raise ConfigError(f"cannot sweep command {bcmd!r}; choose from {', '.join(SWEEPABLE)}",
                          field="base.command", line=_line_of(sc.text, "base"))
    grid = doc.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid must be a non-empty object", field="grid", line=_line_of(sc.text, "grid"))
    keys = sorted(grid)
    axes = [_values(k, grid[k], sc.text) for k in keys]
    total = math.prod(len(a) for a in axes)
    cap = doc.get("cap", DEFAULT_CAP)
    if total > cap:
        raise ConfigError(f"sweep has {total} cases, above the cap of {cap}", field="cap")
    cases = []
    for combo in itertools.product(*axes):
        case = {"command": bcmd, "n": base.get("n", sc.n), "spec": json.loads(json.dumps(base.get("spec"))),
                "parameters": dict(base.get("parameters", {}))}
        for k, v in zip(keys, combo):
            where, _, name = k.rpartition(".")
            if where == "spec" or (not where and isinstance(case["spec"], dict) and name in case["spec"]):
                case["spec"][name] = v
            elif name == "n" and not where:
                case["n"] = v
            else:
                case["parameters"][name] = v
        cases.append((dict(zip(keys, combo)), case))
    return bcmd, cases


def _run_case(case):
    sc = scenario_from_dict(case)
    out, _, _, _ = HANDLERS[sc.command](sc)
    return out["result"]


def cmd_sweep(sc, jobs=1):
    bcmd, cases = sweep_cases(sc)
    docs = [c for _, c in cases]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_case, docs))
    else:
        results = [_run_case(d) for d in docs]
    cols = SWEEP_COLUMNS[bcmd]
    keys = [k.rpartition(".")[2] for k, _ in cases[0][0].items()]
    cols = cols + [k for k in keys if k not in cols]
    rows = []
    for (params, case), res in zip(cases, results):
        row = {k.rpartition(".")[2]: v for k, v in params.items()}
        row.update({c: res.get(c) for c in cols if c in res})
        if bcmd == "yamabe-annulus":
            row["n"] = case["n"]
        rows.append(row)
    return {"result": {"base_command": bcmd, "cases": len(rows), "columns": cols, "rows": rows}}, cols, rows, EXIT_OK


HANDLERS = {
    "certify": cmd_certify,
    "eigen": cmd_eigen,
    "yamabe-annulus": cmd_yamabe_annulus,
    "barriers": cmd_barriers,
    "classify": cmd_classify,
    "sharpness": cmd_sharpness,
    "alh-check": cmd_alh_check,
}


def run(sc: Scenario, out_dir=None, jobs: int = 1, seed: int = 0):
    """Dispatch ``sc``; returns ``(exit_status, json_text, csv_text)`` and writes files to ``out_dir``."""
    if sc.command == "sweep":
        summary, cols, rows, status = cmd_sweep(sc, jobs)
    elif sc.command == "yamabe-annulus":
        summary, cols, rows, status = cmd_yamabe_annulus(sc, seed)
    else:
        summary, cols, rows, status = HANDLERS[sc.command](sc)
    summary.update({"command": sc.command, "n": sc.n, "parameters": sc.parameters, "spec": sc.spec})
    if sc.command == "yamabe-annulus":
        summary["seed"] = seed
    text = dumps(summary) + "\n"
    table = to_csv(cols, rows) if cols else None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = sc.command.replace("-", "_")
        (out / sc.output.get("json", f"{stem}.json")).write_text(text, encoding="utf-8")
        if table is not None:
            (out / sc.output.get("csv", f"{stem}.csv")).write_text(table, encoding="utf-8", newline="")
    return status, text, table


def build_parser():
    ap = argparse.ArgumentParser(prog="yamabe-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="override the command named in the config")
    ap.add_argument("--config", required=True, help="scenario JSON file ('-' for stdin)")
    ap.add_argument("--out", help="directory for the JSON summary and CSV series")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomised checks (never used by solvers)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
        sc = load_scenario(text)
        if args.command and args.command != sc.command:
            raise ConfigError(f"command line asks for {args.command!r} but the config is {sc.command!r}", field="command")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        status, out, _ = run(sc, args.out, args.jobs, args.seed)
    except (YamabeLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # anything unexpected still honours the exit-code contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
