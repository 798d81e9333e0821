"""Command line front end: ``newsmech run|audit|sweep``.

Every command either writes all of its outputs or none of them. Errors are
reported as a JSON object on stderr and mapped onto exit codes
(1 validation, 2 unsupported instance, 3 non-convergence, 4 audit failure).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import auction as auc
from . import oracle
from . import public_goods as pg
from . import screening as scr
from .bayes import DirectMechanism, check_ic, check_ir, perceived_profile
from .config import ScenarioConfig, expand_range
from .errors import NewsMechError, ValidationError
from .laws import GridLaw, LAW_KINDS, make_law, spike_law
from .newsutil import DiscreteDistribution, GainLossSpec

RESULT_SCHEMA = "newsmech.result/1"
VERDICT_SCHEMA = "newsmech.verdict/1"
AUDIT_FAILED = 4


def thread_count():
    raw = os.environ.get("NEWSMECH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"NEWSMECH_THREADS must be an integer, got {raw!r}") from None


def _map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# environment builders


def build_law(cfg: ScenarioConfig, prefix, n):
    params = cfg.section(prefix)
    kind = params.pop("kind", None)
    params.pop("n", None)
    if kind is None:
        raise ValidationError(f"missing required key '{prefix}.kind'")
    if kind == "spike":
        try:
            return spike_law(float(params["lo"]), float(params["hi"]), float(params["mass"]), n)
        except KeyError as exc:
            raise ValidationError(f"spike law needs '{prefix}.{exc.args[0]}'") from None
    if kind == "atoms":
        values, probs = params.get("values"), params.get("probs")
        if values is None or probs is None:
            raise ValidationError(f"atoms law needs '{prefix}.values' and '{prefix}.probs'")
        return DiscreteDistribution(np.atleast_1d(values), np.atleast_1d(probs))
    if kind not in LAW_KINDS:
        raise ValidationError(f"unknown law kind {kind!r} for {prefix}")
    try:
        return make_law(kind, n=n, **{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {prefix}: {exc}") from None


def _discrete(law):
    return law.discrete if isinstance(law, GridLaw) else law


def _grid_law(law, prefix):
    if not isinstance(law, GridLaw):
        raise ValidationError(f"{prefix} needs a law with a density (one of {LAW_KINDS})")
    return law


def _grid_size(cfg):
    n = cfg.integer("grid_size", 201, lo=3)
    return n


def screening_env(cfg):
    n = _grid_size(cfg)
    F = _discrete(build_law(cfg, "env.F", n))
    G = _grid_law(build_law(cfg, "env.G", n), "env.G")
    alpha = cfg.number("env.alpha", 0.5)
    c = cfg.number("env.c", 1.0)
    return scr.ScreeningEnv(F, G, alpha, c)


def gain_loss_spec(cfg):
    mu_g = cfg.number("env.mu_g", 0.0, lo=0.0)
    lambda_g = cfg.number("env.lambda_g", 1.0, lo=1.0)
    if cfg.get("env.friction") is not None:
        lambda_m = cfg.number("env.lambda_m", 2.0, lo=1.0)
        mu_m, lambda_m = auc.split_money_friction(cfg.number("env.friction", lo=0.0), lambda_m)
    else:
        mu_m = cfg.number("env.mu_m", 0.0, lo=0.0)
        lambda_m = cfg.number("env.lambda_m", 1.0, lo=1.0)
    return GainLossSpec(mu_g, mu_m, lambda_g, lambda_m)


def auction_env(cfg):
    n = _grid_size(cfg)
    law = _grid_law(build_law(cfg, "env.F", n), "env.F")
    return auc.AuctionEnv(cfg.integer("env.n", 2, lo=2), law, gain_loss_spec(cfg))


def public_good_env(cfg, n_agents=None, Lambda_g=None):
    n = _grid_size(cfg)
    F = _discrete(build_law(cfg, "env.F", n))
    N = n_agents if n_agents is not None else cfg.integer("env.n", 2, lo=2)
    L = Lambda_g if Lambda_g is not None else cfg.number("env.Lambda_g", 0.0, lo=0.0)
    return pg.PublicGoodEnv(N, F, cfg.number("env.mu_g", 0.0, lo=0.0), L, cfg.number("env.cost", lo=0.0))


def timelines_for(cfg, allowed):
    choice = cfg.get("timeline", "all")
    if choice == "all":
        return list(allowed)
    if choice not in allowed:
        raise ValidationError(f"timeline must be one of {allowed} or 'all', got {choice!r}")
    return [choice]


# ---------------------------------------------------------------------------
# output helpers


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dumps(doc):
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def write_outputs(out_dir, files):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out / name).write_text(files[name])


# ---------------------------------------------------------------------------
# solving


def _screening_audit(menu, env, tol):
    o = scr.oracle_audit(menu, env).summary()
    f = scr.audit_menu(menu, env, tol).summary()
    return {"oracle": o, "formula": f, "pass": bool(o["max_gain"] <= tol and o["ir_pass"] and f["ic_pass"])}


def run_screening(cfg, tol):
    env = screening_env(cfg)
    results, files = {}, {}
    for T in timelines_for(cfg, scr.SCREENING_TIMELINES):
        menu = scr.solve(T, env)
        info = {k: v for k, v in menu.info.items() if k != "seconds"}
        results[T] = {
            "menu": menu.to_dict(),
            "profit": scr.profit(menu, env),
            "audit": _screening_audit(menu, env, tol),
            "info": info,
        }
        files[f"menu_{T}.csv"] = _csv(["lambda", "q", "t"], zip(menu.lambda_grid, menu.q, menu.t))
    if len(results) == 3:
        p = {T: results[T]["profit"] for T in results}
        results["ordering"] = {"A>=B": p["A"] >= p["B"], "B>=C": p["B"] >= p["C"], "profits": p}
    results["env"] = {"m": env.m, "M": env.M}
    return results, files


def _auction_formula_ir(mech, timeline, spec, tol):
    prof = perceived_profile(mech, timeline, spec)
    if timeline != "C":
        rep = check_ir(prof, tol)
        return {"ir_pass": rep.ok, "min_slack": float(rep.slack.min())}
    # participation inequality of the threshold construction, with T in place of T+
    lm = spec.lambda_m * spec.mu_m
    W = prof.V - spec.Lambda_g * prof.Gamma_g
    g = W * prof.theta + spec.mu_g * prof.V * prof.theta
    slack = g - (1.0 + lm) * prof.T - spec.Lambda_m * prof.omega
    return {"ir_pass": bool(np.all(slack >= -tol)), "min_slack": float(slack.min())}


def _auction_audit(mech, timeline, spec, tol):
    o = oracle.best_response_audit(mech, timeline, spec).summary()
    f = _auction_formula_ir(mech, timeline, spec, tol)
    ic = check_ic(perceived_profile(mech, timeline, spec))
    return {
        "oracle": o,
        "formula": {**f, "monotone_W": ic.ok},
        "pass": bool(o["max_gain"] <= tol and f["ir_pass"]),
    }


def run_auction(cfg, tol):
    env = auction_env(cfg)
    domain = cfg.get("env.subsidy_domain", "full")
    results, files = {}, {}
    for T in timelines_for(cfg, ("A", "B", "C")):
        if T == "C":
            sol = auc.solve_auction_C(env, domain)
            prof = perceived_profile(sol.mechanism, "C", env.spec)
            res = {
                "revenue": sol.revenue,
                "theta_hat": sol.theta_hat,
                "c": sol.c,
                "all_pay": sol.all_pay,
                "identity_residual": sol.identity_residual(),
                "friction": sol.friction,
                "subsidy_domain": domain,
            }
            W, U, omega, Tm = prof.W, prof.Upsilon, sol.omega, sol.T
        else:
            sol = auc.solve_auction(T, env)
            res = {"revenue": sol.revenue, "theta_star": sol.theta_star, "info": sol.info}
            W, U, omega, Tm = sol.W, sol.Upsilon, sol.omega, sol.T
        res["mechanism"] = sol.mechanism.to_dict()
        res["audit"] = _auction_audit(sol.mechanism, T, env.spec, tol)
        results[T] = res
        files[f"auction_{T}.csv"] = _csv(["theta", "W", "Upsilon", "omega", "T"], zip(env.theta, W, U, omega, Tm))
    return results, files


def run_public_good(cfg, tol):
    env = public_good_env(cfg)
    verdicts = {T: pg.ic_condition(T, env) for T in pg.PG_TIMELINES}
    results = {
        "interesting": env.interesting,
        "c_tilde": env.c_tilde,
        "verdicts": {T: v.summary() for T, v in verdicts.items()},
    }
    Q = verdicts["A"].Q
    rows = zip(env.F.support, Q, *(verdicts[T].W for T in pg.PG_TIMELINES))
    files = {"public_good.csv": _csv(["theta", "Q", "W_A", "W_B", "W_C"], rows)}
    if cfg.get("scan.N") is not None:
        Ns = [int(x) for x in expand_range(cfg.get("scan.N"))]
        cost = env.cost_per_capita
        scan = pg.min_population_for_ic(env.F, env.mu_g, env.Lambda_g, lambda N: cost, Ns)
        results["population"] = scan.summary()
        files["population.csv"] = _csv(["N", "ic_all_timelines"], sorted(scan.verdicts.items()))
    return results, files


def random_menu_problem(rng, menu_size=3, atoms=3, classical=False):
    def lottery():
        k = int(rng.integers(1, atoms + 1))
        return DiscreteDistribution(np.round(rng.normal(0, 1, k), 3), rng.dirichlet(np.ones(k)))

    menu = [(lottery(), lottery()) for _ in range(menu_size)]
    if classical:
        spec = GainLossSpec(0.0, 0.0, 1.0, 1.0)
    else:
        spec = GainLossSpec(float(rng.uniform(0, 2)), float(rng.uniform(0, 2)),
                            float(rng.uniform(1, 4)), float(rng.uniform(1, 4)))
    return oracle.MenuProblem(lottery(), lottery(), menu, spec, "A")


def run_simulate(cfg, tol):
    seed = cfg.integer("seed", 0)
    count = cfg.integer("simulate.count", 1000, lo=1)
    size = cfg.integer("simulate.menu_size", 3, lo=1)
    atoms = cfg.integer("simulate.atoms", 3, lo=1)
    rng = np.random.default_rng(seed)
    cd_fail, classical_fail = [], []
    rows = []
    for i in range(count):
        prob = random_menu_problem(rng, size, atoms)
        rep = oracle.verify_timeline_equivalence(prob)
        if not rep.ok:
            cd_fail.append(i)
        base = random_menu_problem(rng, size, atoms, classical=True)
        decisions = [oracle.simulate(base.with_timeline(T)) for T in oracle.ORACLE_TIMELINES]
        same = all(d == decisions[0] for d in decisions)
        if not same:
            classical_fail.append(i)
        rows.append((i, rep.decision_C[0], rep.decision_C[1], rep.decision_D[0], rep.decision_D[1], same))
    results = {
        "count": count,
        "cd_failures": cd_fail,
        "classical_failures": classical_fail,
        "pass": not cd_fail and not classical_fail,
    }
    header = ["problem", "accept_C", "choice_C", "accept_D", "choice_D", "classical_all_equal"]
    return results, {"simulate.csv": _csv(header, rows)}


RUNNERS = {
    "screening": run_screening,
    "auction": run_auction,
    "public-good": run_public_good,
    "simulate": run_simulate,
}


def result_document(cfg, kind, results):
    return {
        "schema": RESULT_SCHEMA,
        "version": __version__,
        "kind": kind,
        "config": cfg.effective(),
        "results": results,
    }


def _apply_overrides(cfg, args):
    if args.grid_size is not None:
        cfg.overrides["grid_size"] = args.grid_size
    if args.seed is not None:
        cfg.overrides["seed"] = args.seed
    if args.timeline is not None:
        cfg.overrides["timeline"] = args.timeline


def cmd_run(args):
    cfg = ScenarioConfig.load(args.config)
    _apply_overrides(cfg, args)
    results, files = RUNNERS[cfg.kind](cfg, args.tol)
    files["result.json"] = dumps(result_document(cfg, cfg.kind, results))
    write_outputs(args.out_dir, files)
    return 0


def cmd_sweep(args):
    cfg = ScenarioConfig.load(args.config)
    _apply_overrides(cfg, args)
    kind = cfg.kind
    if kind == "auction":
        env = auction_env(cfg)
        xs = expand_range(cfg.require("sweep.friction"))
        lam_m = cfg.number("env.lambda_m", 2.0, lo=1.0)
        domain = cfg.get("env.subsidy_domain", "full")
        parts = _map(lambda x: auc.revenue_compare(env, [x], lam_m, domain), xs)
        rev_A = np.array([p.rev_A[0] for p in parts])
        rev_C = np.array([p.rev_C[0] for p in parts])
        d = rev_C - rev_A
        crossing = None
        idx = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
        if idx.size:
            i = int(idx[0])
            crossing = float(xs[i] - d[i] * (xs[i + 1] - xs[i]) / (d[i + 1] - d[i]))
        results = {
            "friction": xs, "rev_A": rev_A, "rev_C": rev_C,
            "sign_changes": auc.count_sign_changes(d), "crossing": crossing,
        }
        files = {"sweep.csv": _csv(["friction", "rev_A", "rev_C"], zip(xs, rev_A, rev_C))}
    elif kind == "screening":
        env = screening_env(cfg)
        costs = expand_range(cfg.require("sweep.c"))

        def one(c):
            e = scr.ScreeningEnv(env.F, env.G, env.alpha, float(c))
            return [scr.profit(scr.solve(T, e), e) for T in scr.SCREENING_TIMELINES]

        table = np.array(_map(one, costs))
        results = {"c": costs, "profit_A": table[:, 0], "profit_B": table[:, 1], "profit_C": table[:, 2]}
        files = {"sweep.csv": _csv(["c", "profit_A", "profit_B", "profit_C"], zip(costs, *table.T))}
    elif kind == "public-good":
        Ls = expand_range(cfg.require("sweep.Lambda_g"))

        def one(L):
            env = public_good_env(cfg, Lambda_g=float(L))
            return [pg.ic_condition(T, env).ok for T in pg.PG_TIMELINES]

        table = _map(one, Ls)
        results = {"Lambda_g": Ls, "ic": {T: [row[i] for row in table] for i, T in enumerate(pg.PG_TIMELINES)}}
        files = {"sweep.csv": _csv(["Lambda_g", "ic_A", "ic_B", "ic_C"], ([L, *row] for L, row in zip(Ls, table)))}
    else:
        raise ValidationError(f"sweep is not defined for kind {kind!r}")
    files["result.json"] = dumps(result_document(cfg, kind + "-sweep", results))
    write_outputs(args.out_dir, files)
    return 0


# ---------------------------------------------------------------------------
# audit


def _load_result(path):
    try:
        text = Path(path).read_text()
        doc = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read result document {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != RESULT_SCHEMA:
        raise ValidationError(f"schema mismatch: expected {RESULT_SCHEMA!r}")
    for key in ("kind", "config", "results"):
        if key not in doc:
            raise ValidationError(f"schema mismatch: missing {key!r}")
    return doc, text


def audit_document(doc, tol):
    cfg = ScenarioConfig(dict(doc["config"]), "<result>")
    kind = doc["kind"]
    res = doc["results"]
    checks = {}
    try:
        if kind == "screening":
            env = screening_env(cfg)
            for T in scr.SCREENING_TIMELINES:
                if T in res:
                    menu = scr.ScreeningMenu.from_dict(res[T]["menu"])
                    checks[T] = _screening_audit(menu, env, tol)
        elif kind == "auction":
            spec = gain_loss_spec(cfg)
            for T in ("A", "B", "C"):
                if T in res:
                    mech = DirectMechanism.from_dict(res[T]["mechanism"])
                    checks[T] = _auction_audit(mech, T, spec, tol)
        elif kind == "public-good":
            env = public_good_env(cfg)
            for T in pg.PG_TIMELINES:
                v = pg.ic_condition(T, env).summary()
                checks[T] = {"recomputed": v, "pass": v == res["verdicts"][T]}
        elif kind == "simulate":
            again, _ = run_simulate(cfg, tol)
            checks["replay"] = {"pass": again == {k: res[k] for k in again}}
        else:
            raise ValidationError(f"no audit defined for kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"schema mismatch: {exc!r}") from None
    return checks


def cmd_audit(args):
    doc, text = _load_result(args.result)
    checks = audit_document(doc, args.tol)
    ok = all(c["pass"] for c in checks.values())
    verdict = {
        "schema": VERDICT_SCHEMA,
        "kind": doc["kind"],
        "result_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "tolerance": args.tol,
        "checks": checks,
        "pass": ok,
    }
    out = Path(args.out) if args.out else Path(args.result).with_name("verdict.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps(verdict))
    return 0 if ok else AUDIT_FAILED


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="newsmech", description="Mechanism design with news-utility agents.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--grid-size", type=int, default=None, help="grid points (default 201)")
        sp.add_argument("--tol", type=float, default=1e-8, help="audit tolerance (default 1e-8)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--timeline", choices=["A", "B", "C", "all"], default=None)
        sp.add_argument("--out-dir", default="out")

    r = sub.add_parser("run", help="solve one scenario")
    r.add_argument("config")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one parameter of a scenario")
    s.add_argument("config")
    common(s)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="replay oracle audits on a result document")
    a.add_argument("result")
    a.add_argument("--tol", type=float, default=1e-8)
    a.add_argument("--out", default=None, help="verdict path (default: verdict.json beside the result)")
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NewsMechError as exc:
        err = {"error": {"code": exc.code, "exit_code": exc.exit_code, "message": str(exc)}}
        gap = getattr(exc, "gap", None)
        if gap is not None:
            err["error"]["gap"] = gap
        sys.stderr.write(dumps(err))
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
