"""Command-line surface: detect, arl, cadd, klinf, sweep, verify, lab.

Exit codes: 0 success (or alarm fired), 1 input error, 2 stream ended
without an alarm, 3 verification failure.  Every randomized command either
takes an explicit --seed or generates one and echoes it; reports embed the
fully resolved configuration so any run can be replayed exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import secrets
import sys
import time

from . import detector, klinf, lowerbound, sim, verify
from .distributions import SeedSpec, dist_from_json, dist_to_json, rescale_affine

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NO_ALARM = 2
EXIT_VERIFY_FAILED = 3

SCHEMA_VERSION = 1


class CliError(Exception):
    """Input or usage error; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from sys.exit(2)
        raise CliError(message)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise CliError("config file must hold a JSON object")
    return obj


def _resolve(flag_value, config: dict, key: str, default=None, required: bool = False):
    """CLI flag beats config file beats default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    if required and default is None:
        raise CliError(f"missing required parameter {key!r} (flag or config file)")
    return default


def _parse_dist(spec, what: str):
    if spec is None:
        raise CliError(f"missing {what} distribution")
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise CliError(f"bad {what} distribution literal: {exc}") from exc
    try:
        return dist_from_json(spec)
    except ValueError as exc:
        raise CliError(f"bad {what} distribution: {exc}") from exc


def _resolve_seed(flag_value, config: dict) -> int:
    seed = _resolve(flag_value, config, "master_seed")
    if seed is None:
        seed = secrets.randbits(63)
        print(f"generated master_seed: {seed}", file=sys.stderr)
    return int(seed)


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(tok) for tok in str(text).replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise CliError(f"bad {what} list {text!r}") from exc


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in str(text).replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise CliError(f"bad {what} list {text!r}") from exc


def _emit_report(report: dict, out_path: str | None) -> None:
    payload = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)


def _emit_csv(rows: list[dict], path: str | None) -> None:
    if not path or not rows:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _report(command: str, config: dict, results, started: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "results": results,
        "wall_time": time.time() - started,
    }


def _grid_from(depth: int) -> detector.LambdaGrid:
    return detector.dyadic_grid(depth)


# ---------------------------------------------------------------------------
# commands


def _cmd_detect(args, config: dict) -> int:
    m = float(_resolve(args.m, config, "m", required=True))
    gamma = float(_resolve(args.gamma, config, "gamma", required=True))
    depth = int(_resolve(args.depth, config, "depth", 6))
    lo = _resolve(args.lo, config, "lo")
    hi = _resolve(args.hi, config, "hi")
    if (lo is None) != (hi is None):
        raise CliError("--lo and --hi must be given together")
    cfg = detector.DetectorConfig(m=m, grid=_grid_from(depth), gamma=gamma)

    state = None
    if args.load_state:
        try:
            with open(args.load_state, "rb") as fh:
                state = detector.deserialize_state(fh.read())
        except (OSError, detector.StateDecodeError) as exc:
            raise CliError(f"cannot load state: {exc}") from exc
    if state is None:
        state = detector.fresh_state(cfg)

    def save_state() -> None:
        if args.save_state:
            with open(args.save_state, "wb") as fh:
                fh.write(detector.serialize_state(state))

    if args.input == "-":
        fh = sys.stdin
        close = False
    else:
        try:
            fh = open(args.input, "r", encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot open input: {exc}") from exc
        close = True
    try:
        for line_no, line in enumerate(fh, 1):
            text = line.strip()
            try:
                value = float(text)
            except ValueError:
                print(f"line {line_no}: cannot parse {text!r} as a decimal",
                      file=sys.stderr)
                return EXIT_INPUT_ERROR
            if lo is not None:
                try:
                    value = rescale_affine(value, float(lo), float(hi))
                except ValueError as exc:
                    print(f"line {line_no}: {exc}", file=sys.stderr)
                    return EXIT_INPUT_ERROR
            if not (0.0 <= value <= 1.0):
                print(f"line {line_no}: value {value} outside [0,1]",
                      file=sys.stderr)
                return EXIT_INPUT_ERROR
            detector.sr_update(state, cfg, value)
            alarmed = state.alarmed_at == state.n
            print(f"{state.n}\t{state.M:.10g}" + ("\tALARM" if alarmed else ""))
            if alarmed:
                save_state()
                return EXIT_OK
    finally:
        if close:
            fh.close()
    save_state()
    return EXIT_NO_ALARM


def _cmd_arl(args, config: dict) -> int:
    started = time.time()
    m = float(_resolve(args.m, config, "m", required=True))
    gamma = float(_resolve(args.gamma, config, "gamma", required=True))
    depth = int(_resolve(args.depth, config, "depth", 6))
    reps = int(_resolve(args.reps, config, "reps", 2000))
    horizon = _resolve(args.horizon, config, "horizon")
    seed = _resolve_seed(args.seed, config)
    pre = _parse_dist(_resolve(args.pre, config, "pre", required=True), "pre-change")
    cfg = detector.DetectorConfig(m=m, grid=_grid_from(depth), gamma=gamma)
    est = sim.estimate_arl(cfg, pre, reps,
                           int(horizon) if horizon is not None else None,
                           SeedSpec(seed))
    resolved = {"m": m, "gamma": gamma, "depth": depth, "reps": reps,
                "horizon": est.horizon, "master_seed": seed,
                "pre": dist_to_json(pre)}
    results = {"mean_run_length": est.mean_run_length,
               "std_error": est.std_error, "censor_rate": est.censor_rate,
               "replications": est.replications}
    _emit_report(_report("arl", resolved, results, started), args.out)
    _emit_csv([{"gamma": gamma, "estimate": est.mean_run_length,
                "se": est.std_error, "censor_rate": est.censor_rate,
                "seed": seed}], args.csv)
    return EXIT_OK


def _cmd_cadd(args, config: dict) -> int:
    started = time.time()
    m = float(_resolve(args.m, config, "m", required=True))
    gamma = float(_resolve(args.gamma, config, "gamma", required=True))
    depth = int(_resolve(args.depth, config, "depth", 6))
    reps = int(_resolve(args.reps, config, "reps", 5000))
    k_list = _int_list(_resolve(args.k_list, config, "k_list", "1,10,50,200"), "k")
    post_horizon = _resolve(args.post_horizon, config, "post_horizon")
    seed = _resolve_seed(args.seed, config)
    pre = _parse_dist(_resolve(args.pre, config, "pre", required=True), "pre-change")
    post = _parse_dist(_resolve(args.post, config, "post", required=True), "post-change")
    cfg = detector.DetectorConfig(m=m, grid=_grid_from(depth), gamma=gamma)
    est = sim.estimate_cadd(cfg, pre, post, k_list, reps, SeedSpec(seed),
                            int(post_horizon) if post_horizon is not None else None)
    resolved = {"m": m, "gamma": gamma, "depth": depth, "reps": reps,
                "k_list": k_list, "master_seed": seed,
                "pre": dist_to_json(pre), "post": dist_to_json(post)}
    results = {
        "per_k": [{"k": p.k, "mean_delay": p.mean_delay, "std_error": p.std_error,
                   "survivors": p.survivors, "censored": p.censored}
                  for p in est.per_k],
        "pooled": est.pooled,
        "pooled_se": est.pooled_se,
    }
    _emit_report(_report("cadd", resolved, results, started), args.out)
    _emit_csv([{"gamma": gamma, "estimate": p.mean_delay, "se": p.std_error,
                "censor_rate": (p.censored / reps), "seed": seed}
               for p in est.per_k if p.mean_delay is not None], args.csv)
    return EXIT_OK


def _cmd_klinf(args, config: dict) -> int:
    m = float(_resolve(args.m, config, "m", required=True))
    tol = float(_resolve(args.tol, config, "tol", 1e-10))
    dist = _parse_dist(_resolve(args.dist, config, "dist", required=True),
                       "projected")
    res = klinf.klinf_dual_solve(dist, m, tol)
    payload = {"value": res.value, "lambda_star": res.lambda_star,
               "diverges_at_one": res.diverges_at_one}
    if args.oracle:
        if not dist.is_discrete:
            raise CliError("the primal oracle needs a discrete distribution")
        oracle = klinf.klinf_primal_oracle(dist, m, int(args.grid_resolution))
        payload["oracle_value"] = oracle
        payload["gap"] = abs(oracle - res.value)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_sweep(args, config: dict) -> int:
    started = time.time()
    m = float(_resolve(args.m, config, "m", required=True))
    depth = int(_resolve(args.depth, config, "depth", 6))
    gammas = _float_list(_resolve(args.gamma_grid, config, "gamma_grid",
                                  required=True), "gamma")
    if not gammas:
        raise CliError("gamma grid is empty")
    reps_arl = int(_resolve(args.reps_arl, config, "reps_arl", 2000))
    reps_cadd = int(_resolve(args.reps_cadd, config, "reps_cadd", 5000))
    k_list = _int_list(_resolve(args.k_list, config, "k_list", "1"), "k")
    seed = _resolve_seed(args.seed, config)
    pre = _parse_dist(_resolve(args.pre, config, "pre", required=True), "pre-change")
    post = _parse_dist(_resolve(args.post, config, "post", required=True), "post-change")

    rows = []
    csv_rows = []
    for i, gamma in enumerate(gammas):
        cfg = detector.DetectorConfig(m=m, grid=_grid_from(depth), gamma=gamma)
        arl = sim.estimate_arl(cfg, pre, reps_arl, None, SeedSpec(seed, 2 * i * 10 ** 6))
        cadd = sim.estimate_cadd(cfg, pre, post, k_list, reps_cadd,
                                 SeedSpec(seed, (2 * i + 1) * 10 ** 6))
        rows.append({
            "gamma": gamma,
            "arl": arl.mean_run_length, "arl_se": arl.std_error,
            "arl_censor_rate": arl.censor_rate,
            "cadd": cadd.pooled, "cadd_se": cadd.pooled_se,
        })
        csv_rows.append({"gamma": gamma, "estimate": cadd.pooled,
                         "se": cadd.pooled_se,
                         "censor_rate": arl.censor_rate, "seed": seed})
    slope = None
    delay_points = [(r["gamma"], r["cadd"]) for r in rows if r["cadd"] is not None]
    if len(delay_points) >= 3:
        try:
            fit = sim.slope_fit(delay_points)
            slope = {"slope": fit.slope, "intercept": fit.intercept,
                     "r_squared": fit.r_squared}
        except ValueError:
            slope = None
    resolved = {"m": m, "depth": depth, "gamma_grid": gammas,
                "reps_arl": reps_arl, "reps_cadd": reps_cadd,
                "k_list": k_list, "master_seed": seed,
                "pre": dist_to_json(pre), "post": dist_to_json(post)}
    results = {"table": rows, "slope_fit": slope}
    _emit_report(_report("sweep", resolved, results, started), args.out)
    _emit_csv(csv_rows, args.csv)
    return EXIT_OK


def _cmd_verify(args, config: dict) -> int:
    suite = _resolve(args.suite, config, "suite", "fast")
    if suite not in verify.SUITES:
        raise CliError(f"unknown suite {suite!r}; choose from {sorted(verify.SUITES)}")
    results = verify.run_suite(suite)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        seed_note = f" (seed={r.seed})" if (not r.passed and r.seed is not None) else ""
        print(f"{status}  {r.name}: {r.detail}{seed_note}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY_FAILED


def _parse_stopping_law(text: str) -> lowerbound.StoppingLaw:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"bad stopping-law literal: {exc}") from exc
    try:
        atoms = tuple((int(n), float(p)) for n, p in obj.get("atoms", []))
        tail = obj.get("tail")
        if tail:
            return lowerbound.StoppingLaw(
                atoms=atoms, tail_start=int(tail["start"]),
                tail_mass=float(tail["mass"]), tail_ratio=float(tail["ratio"]))
        return lowerbound.StoppingLaw(atoms=atoms)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad stopping law: {exc}") from exc


def _cmd_lab(args, config: dict) -> int:
    if args.action == "blocks":
        law = _parse_stopping_law(args.law)
        stats = lowerbound.block_stats(law, int(args.f), float(args.gamma))
        best = stats.best
        payload = {
            "r_star": stats.r_star,
            "ratio": best.ratio,
            "bound": stats.f / stats.gamma,
            "sum_x": stats.sum_x,
            "sum_y": stats.sum_y,
            "expected_T": stats.expected_T,
            "blocks_enumerated": len(stats.blocks),
            "blocks": [row._asdict() for row in stats.blocks[:25]],
        }
    elif args.action == "schedule":
        grid = _float_list(args.grid, "gamma") if args.grid else (1e3, 1e6, 1e9, 1e12)
        rows, limits = lowerbound.schedule_limit_table(
            float(args.epsilon), float(args.delta), float(args.info),
            float(args.mu), float(args.b), grid)
        params = lowerbound.schedule_params(
            float(grid[-1]), float(args.epsilon), float(args.delta),
            float(args.info), float(args.mu), float(args.b))
        payload = {"rows": [r._asdict() for r in rows], "limits": limits,
                   "eta": params.eta, "gamma0": params.gamma0}
    elif args.action == "com-check":
        P = lowerbound.two_point(float(args.p))
        Q = lowerbound.two_point(float(args.q))
        rule = lowerbound.running_sum_rule(float(args.threshold))
        res = lowerbound.exact_change_of_measure_check(
            P, Q, int(args.k), int(args.horizon), rule)
        prefix_gap = lowerbound.prefix_equality_check(
            P, Q, min(int(args.k), int(args.horizon) + 1), int(args.horizon))
        payload = {"lhs": res.lhs, "rhs": res.rhs,
                   "max_abs_gap": res.max_abs_gap, "events": res.events,
                   "prefix_gap": prefix_gap}
    elif args.action == "slln":
        values = _float_list(args.values, "value")
        probs = _float_list(args.probs, "probability")
        try:
            law = lowerbound.FiniteLaw(values=tuple(values), probs=tuple(probs))
        except ValueError as exc:
            raise CliError(f"bad increment law: {exc}") from exc
        seed = _resolve_seed(args.seed, config)
        probes = lowerbound.maximal_slln_probe(
            law, float(args.eta), _int_list(args.n_grid, "n"),
            int(args.reps), SeedSpec(seed))
        payload = {"probes": [{"n": n, "probability": p} for n, p in probes],
                   "master_seed": seed}
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown lab action {args.action!r}")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="bmdetect",
                     description="Streaming changepoint detection for bounded data")
    parser.add_argument("--config", help="JSON config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detector on a stream of decimals")
    p.add_argument("--m", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--lo", type=float, help="rescale: lower endpoint of the data range")
    p.add_argument("--hi", type=float, help="rescale: upper endpoint of the data range")
    p.add_argument("--input", default="-", help="stream file, or - for stdin")
    p.add_argument("--load-state", help="resume from a state snapshot")
    p.add_argument("--save-state", help="write the final state snapshot here")

    p = sub.add_parser("arl", help="estimate the mean time to false alarm")
    p.add_argument("--m", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--pre", help="pre-change distribution literal (JSON)")
    p.add_argument("--reps", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--csv", help="also write a CSV table here")

    p = sub.add_parser("cadd", help="estimate conditional detection delays")
    p.add_argument("--m", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--pre")
    p.add_argument("--post")
    p.add_argument("--k-list", dest="k_list")
    p.add_argument("--reps", type=int)
    p.add_argument("--post-horizon", dest="post_horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--csv")

    p = sub.add_parser("klinf", help="project a law onto the bounded-mean class")
    p.add_argument("--dist", help="distribution literal (JSON)")
    p.add_argument("--m", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--oracle", action="store_true",
                   help="cross-check with the independent grid oracle")
    p.add_argument("--grid-resolution", dest="grid_resolution", type=int,
                   default=1000)

    p = sub.add_parser("sweep", help="ARL and delay across a threshold grid")
    p.add_argument("--m", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--gamma-grid", dest="gamma_grid")
    p.add_argument("--pre")
    p.add_argument("--post")
    p.add_argument("--k-list", dest="k_list")
    p.add_argument("--reps-arl", dest="reps_arl", type=int)
    p.add_argument("--reps-cadd", dest="reps_cadd", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--csv")

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--suite", help="fast or full")

    p = sub.add_parser("lab", help="lower-bound proof machinery")
    lab_sub = p.add_subparsers(dest="action", required=True)

    q = lab_sub.add_parser("blocks", help="block decomposition of a stopping law")
    q.add_argument("--law", required=True, help='e.g. {"atoms": [[10, 1.0]]}')
    q.add_argument("--f", required=True, type=int)
    q.add_argument("--gamma", required=True, type=float)

    q = lab_sub.add_parser("schedule", help="window/budget schedule ratios")
    q.add_argument("--gamma", type=float, default=1e12)
    q.add_argument("--epsilon", type=float, default=0.1)
    q.add_argument("--delta", type=float, default=0.1)
    q.add_argument("--info", type=float, default=0.1308120360)
    q.add_argument("--mu", type=float, default=0.1308120360)
    q.add_argument("--b", type=float, default=0.7)
    q.add_argument("--grid")

    q = lab_sub.add_parser("com-check", help="exact change-of-measure check")
    q.add_argument("--p", required=True, type=float,
                   help="pre-change success probability (binary alphabet)")
    q.add_argument("--q", required=True, type=float)
    q.add_argument("--k", required=True, type=int)
    q.add_argument("--horizon", required=True, type=int)
    q.add_argument("--threshold", type=float, default=2.0,
                   help="running-sum stopping threshold")

    q = lab_sub.add_parser("slln", help="running-maximum exceedance probe")
    q.add_argument("--values", required=True)
    q.add_argument("--probs", required=True)
    q.add_argument("--eta", required=True, type=float)
    q.add_argument("--n-grid", dest="n_grid", required=True)
    q.add_argument("--reps", type=int, default=10000)
    q.add_argument("--seed", type=int)

    return parser


_COMMANDS = {
    "detect": _cmd_detect,
    "arl": _cmd_arl,
    "cadd": _cmd_cadd,
    "klinf": _cmd_klinf,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "lab": _cmd_lab,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except BrokenPipeError:
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
