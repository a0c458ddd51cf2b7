"""Command-line front end: ``channel-stab <resolvent|evolve|simulate|scan|fit|report>``.

Outputs go to ``<output-dir>/<campaign>/<subcommand>/`` together with
``config.json``, the effective configuration after merging the JSON config
file with explicit flags (flags win). Existing outputs are never overwritten
without ``--force``.

Exit codes: 0 success, 1 runtime error, 2 too many flagged resolvent samples,
64 usage error, 66 missing input, 73 output exists.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

EX_OK, EX_ERROR, EX_FLAGGED, EX_USAGE, EX_NOINPUT, EX_CANTCREAT = 0, 1, 2, 64, 66, 73

log = logging.getLogger("channel_stab")


class UsageError(Exception):
    pass


class MissingInput(Exception):
    pass


class OutputExists(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- shared helpers -------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {p} must hold a JSON object")
    return data


def _merge(file_cfg: dict, flags: dict) -> dict:
    out = dict(file_cfg)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _outdir(args, sub: str) -> Path:
    return Path(args.output_dir) / args.campaign / sub


def _guard(paths, force: bool) -> None:
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise OutputExists("refusing to overwrite existing outputs (use --force): " + ", ".join(existing))


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _echo(out: Path, args, effective: dict) -> None:
    glob = dict(campaign=args.campaign, seed=args.seed, threads=args.threads, log_level=args.log_level)
    _write_json(out / "config.json", dict(subcommand=args.command, global_flags=glob, effective=effective))


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, int(args.threads))
    env = os.environ.get("CHANNEL_STAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"CHANNEL_STAB_THREADS must be an integer, got {env!r}") from exc
    return 1


# -- resolvent --------------------------------------------------------------------------


def cmd_resolvent(args) -> int:
    from . import resolvent_verify as rv
    from .plotting import loglog_lines

    cfg = _merge(_load_config(args.config), dict(nus=args.nu, ks=args.k, lambdas=args.lam, ids=args.ineq, n=args.n,
                                                 bank=args.bank, refine=None if args.refine is None else args.refine))
    point_mode = any(cfg.get(key) is not None for key in ("nus", "ks", "lambdas"))
    if point_mode:
        nus = cfg.get("nus") or [1e-3]
        ks = cfg.get("ks") or [1]
        lams = cfg.get("lambdas") or [0.5]
    else:
        nus, ks, lams = list(rv.DEFAULT_NUS), list(rv.DEFAULT_KS), list(rv.DEFAULT_LAMBDAS)
    try:
        ids = [rv.resolve_id(i) for i in (cfg.get("ids") or rv.INEQUALITY_IDS)]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if any(k == 0 for k in ks):
        raise UsageError("wavenumbers must be nonzero")
    if any(nu <= 0 for nu in nus):
        raise UsageError("viscosities must be positive")
    bank = cfg.get("bank") or "vanishing"
    if bank not in ("vanishing", "nonvanishing", "both"):
        raise UsageError(f"--bank must be vanishing, nonvanishing or both, got {bank!r}")
    n = int(cfg.get("n") or 128)
    refine = bool(cfg.get("refine", True))
    effective = dict(nus=[float(v) for v in nus], ks=[int(v) for v in ks], lambdas=[float(v) for v in lams],
                     ids=ids, n=n, bank=bank, refine=refine)
    out = _outdir(args, "resolvent")
    banks = ["vanishing", "nonvanishing"] if bank == "both" else [bank]
    # the H^1_k-forced group is only defined for forcings vanishing at the walls
    ids_for = {b: [i for i in ids if b == "vanishing" or i != "resol_slip_c"] for b in banks}
    if not any(ids_for.values()):
        raise UsageError("resol_slip_c needs the vanishing forcing bank")
    stems = [iid if bank != "both" else f"{iid}_{b}" for b in banks for iid in ids_for[b]]
    targets = [out / f"{s}.{ext}" for s in stems for ext in ("csv", "json")] + [out / "worst_ratio.svg"]
    _guard(targets + [out / "config.json"], args.force)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args, effective)

    total = flagged = 0
    series = {}
    summary = {}
    for b in banks:
        plan = rv.SweepPlan(nus=nus, ks=ks, lambdas=lams, n=n, vanishing=(b == "vanishing"), refine=refine,
                            workers=_threads(args))
        if not ids_for[b]:
            continue
        reports = rv.sweep_and_fit(plan, ids_for[b])
        for iid, rep in reports.items():
            stem = iid if bank != "both" else f"{iid}_{b}"
            rv.write_report(rep, out, stem)
            total += len(rep.samples)
            flagged += rep.excluded
            xs = sorted(rep.worst_by_nu)
            series[stem] = (xs, [rep.worst_by_nu[x] for x in xs])
            summary[stem] = dict(worst_ratio=rep.worst_ratio, fitted_exponent_vs_nu=rep.fitted_exponent_vs_nu,
                                 excluded=rep.excluded)
            log.info("%s: worst ratio %.4g, exponent %s", stem, rep.worst_ratio, rep.fitted_exponent_vs_nu)
    loglog_lines(series, out / "worst_ratio.svg", "nu", "worst LHS/RHS", title="resolvent ratios")
    _write_json(out / "summary.json", dict(reports=summary, samples=total, flagged=flagged))
    if total and flagged > 0.1 * total:
        log.error("%d of %d samples flagged (conditioning)", flagged, total)
        return EX_FLAGGED
    return EX_OK


# -- evolve -------------------------------------------------------------------------------


def cmd_evolve(args) -> int:
    from . import linear_evolution as le
    from . import linop
    from .plotting import semilog_curves
    from .spectral_core import build_grid, l2_norm

    cfg = _merge(_load_config(args.config), dict(nu=args.nu, k=args.k, n=args.n, dt=args.dt, T=args.T, c=args.c,
                                                 init=args.init, slot=args.slot))
    nu = float(cfg.get("nu", 1e-3))
    k = int(cfg.get("k", 1))
    n = int(cfg.get("n", 128))
    c = float(cfg.get("c", le.DEFAULT_C))
    init = cfg.get("init", "sine")
    slot = cfg.get("slot", "none")
    if k == 0 or nu <= 0:
        raise UsageError("evolve needs nu > 0 and k != 0")
    if init not in ("sine", "random", "eigenmode"):
        raise UsageError(f"unknown --init {init!r}")
    if slot not in ("none", "f1", "f2", "f3", "f4"):
        raise UsageError(f"unknown --slot {slot!r}")
    dt = float(cfg.get("dt") or min(0.05, le.cfl_limit(nu, k)))
    T = float(cfg.get("T") or le.default_horizon(nu, k))
    if dt > le.cfl_limit(nu, k):
        raise UsageError(f"dt={dt} exceeds the advection limit {le.cfl_limit(nu, k):.4g}")
    effective = dict(nu=nu, k=k, n=n, dt=dt, T=T, c=c, init=init, slot=slot, seed=args.seed)
    out = _outdir(args, "evolve")
    targets = [out / f for f in ("trajectory.csv", "summary.json", "decay.svg", "config.json")]
    if args.snapshot:
        targets.append(out / "trajectory.cstb")
    _guard(targets, args.force)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args, effective)

    g = build_grid(n)
    op = linop.assemble(g, nu, k)
    y = g.nodes
    if init == "sine":
        w0 = (np.sin(np.pi * (y + 1) / 2) * (1 - y**2)).astype(complex)
    elif init == "random":
        w0 = le.smooth_random_profile(g, args.seed or 0)
    else:
        vals, vecs = np.linalg.eig(op.matrix)
        j = int(np.argmin(vals.real))
        w0 = g.embed(vecs[:, j])
    w0 = w0 / l2_norm(g, w0)
    slots, lam = (None, None) if slot == "none" else le.adversarial_slots(op, slot)
    traj, norms = le.evolve(op, w0, slots, T, dt, c)
    le.write_trajectory_csv(traj, out / "trajectory.csv")
    if args.snapshot:
        le.write_trajectory_snapshots(traj, out / "trajectory.cstb")
    report = le.verify_prop41(op, w0, slots, T, dt, c)
    fit = le.measure_decay_rate(traj) if slots is None else None
    gap = linop.pseudospectral_gap(op)
    semilog_curves({"||w||_L2": (traj.times, traj.series["w_l2"]), "||u||_L2": (traj.times, traj.series["u_l2"])},
                   out / "decay.svg", "t", "norm", title=f"nu={nu:g}, k={k}")
    _write_json(out / "summary.json", dict(
        nu=nu, k=k, gap=gap.gap, gap_lambda=gap.argmin_lambda, forcing_lambda=lam,
        decay_rate=None if fit is None else fit.rate, decay_low_confidence=None if fit is None else fit.low_confidence,
        combined_ratio=report.combined, term_ratios=report.full.term_ratios, lhs=report.full.lhs, rhs=report.full.rhs,
        inhomogeneous=None if report.inhomogeneous is None else dict(combined=report.inhomogeneous.combined,
                                                                    term_ratios=report.inhomogeneous.term_ratios),
        binding_branch=report.binding_branch, weight_guard=report.weight_guard, violation=report.violation,
        sup_at_positive_time=norms.sup_at_positive_time,
    ))
    return EX_OK


# -- simulate -------------------------------------------------------------------------------


def _sim_config(args, file_cfg: dict):
    from .nonlinear_sim import SimConfig

    flags = dict(nu=args.nu, K=args.K, n=args.n, dt=args.dt, T=args.T, c=args.c, amplitude=args.amp,
                 family=args.family, seed=args.seed, dealias=False if args.no_dealias else None)
    try:
        return SimConfig.from_dict(_merge(file_cfg, flags))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid simulation config: {exc}") from exc


def cmd_simulate(args) -> int:
    from . import nonlinear_sim as ns
    from .plotting import stacked_bars

    cfg = _sim_config(args, _load_config(args.config))
    out = _outdir(args, "simulate")
    targets = [out / f for f in ("summary.json", "timeseries.csv", "bootstrap.json", "energy.svg", "config.json")]
    if args.snapshot_every:
        targets.append(out / "snapshots.cstb")
    _guard(targets, args.force)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args, cfg.to_dict())
    try:
        rec = ns.simulate(cfg, snapshot_every=args.snapshot_every or 0, keep_final=False)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ns.write_run_csv(rec, out / "timeseries.csv")
    if args.snapshot_every:
        ns.write_run_snapshots(rec, out / "snapshots.cstb")
    _write_json(out / "summary.json", rec.summary())
    _write_json(out / "bootstrap.json", ns.verify_bootstrap(rec))
    b = rec.breakdown()
    kk = min(8, cfg.K)
    stacked_bars([str(k) for k in range(1, kk + 1)],
                 {"amp": b.amp[1:kk + 1], "heat": b.heat[1:kk + 1], "enh": b.enh[1:kk + 1], "invd": b.invd[1:kk + 1]},
                 out / "energy.svg", "E_k parts", title=f"nu={cfg.nu:g}, A={cfg.amplitude:g}")
    log.info("outcome: %s", ns.classify_outcome(rec))
    return EX_OK


# -- scan and fit -----------------------------------------------------------------------------


def cmd_scan(args) -> int:
    from . import scan_orchestrator as so

    file_cfg = _load_config(args.config)
    template = dict(file_cfg.get("template", {}))
    template.update({k: v for k, v in dict(K=args.K, n=args.n, dt=args.dt, T=args.T, family=args.family).items()
                     if v is not None})
    plan_cfg = {k: v for k, v in file_cfg.items() if k != "template"}
    plan_cfg = _merge(plan_cfg, dict(nu_list=args.nu, eps_lo=args.eps_lo, eps_hi=args.eps_hi, tolerance=args.tol,
                                     seeds=args.seeds, max_runs_per_nu=args.max_runs))
    if args.absolute:
        plan_cfg["g"] = None
    elif args.g is not None:
        plan_cfg["g"] = args.g
    plan_cfg.update(template=template, campaign=args.campaign, workers=_threads(args))
    synthetic = plan_cfg.pop("synthetic_gamma", None) if args.synthetic is None else args.synthetic
    try:
        plan = so.ScanPlan.from_dict(plan_cfg)
        for nu in plan.nu_list:
            plan.config(nu, plan.bracket(nu)[0], plan.seeds[0])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scan plan: {exc}") from exc
    out = _outdir(args, "scan")
    _guard([out / f for f in ("report.json", "thresholds.csv", "threshold_plot.csv", "threshold.svg")], args.force)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args, dict(plan=plan.identity(), synthetic_gamma=synthetic))
    runner = so.SyntheticRunner(gamma=float(synthetic)) if synthetic is not None else None
    try:
        report = so.run_campaign(plan, out, runner)
    except so.CheckpointError as exc:
        log.error("%s", exc)
        return EX_ERROR
    log.info("campaign %s: %d runs (%d new); fit: %s", plan.campaign, report.runs, report.new_runs,
             report.fit.gamma_hat if report.fit else report.fit_error)
    return EX_OK


def _read_pairs(path: Path):
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                pairs.append((float(row["nu"]), float(row["a_star"]), row.get("one_sided") or None))
            except (KeyError, ValueError) as exc:
                raise UsageError(f"malformed thresholds file {path}: {exc}") from exc
    return pairs


def cmd_fit(args) -> int:
    from .scan_orchestrator import fit_gamma

    src = Path(args.input) if args.input else _outdir(args, "scan") / "thresholds.csv"
    if not src.exists():
        raise MissingInput(f"missing input: {src}")
    out = _outdir(args, "fit")
    _guard([out / "fit.json", out / "config.json"], args.force)
    pairs = _read_pairs(src)
    try:
        fit = fit_gamma(pairs)
    except ValueError as exc:
        log.error("%s", exc)
        return EX_ERROR
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args, dict(input=str(src)))
    _write_json(out / "fit.json", fit.to_dict())
    print(f"gamma_hat={fit.gamma_hat:.6f} epsilon={fit.epsilon:.6g} residual={fit.residual:.3g}")
    return EX_OK


# -- report ---------------------------------------------------------------------------------------


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def cmd_report(args) -> int:
    from .plotting import loglog_lines, semilog_curves, stacked_bars

    root = Path(args.output_dir) / args.campaign
    expected = {
        "resolvent": root / "resolvent" / "summary.json",
        "evolve": root / "evolve" / "trajectory.csv",
        "simulate": root / "simulate" / "summary.json",
        "scan": root / "scan" / "thresholds.csv",
    }
    present = {k: p for k, p in expected.items() if p.exists()}
    missing = [str(p) for k, p in expected.items() if k not in present]
    if not present:
        raise MissingInput("no inputs to aggregate; absent: " + ", ".join(missing))
    out = root / "report"
    _guard([out / "summary.md", out / "config.json"], args.force)
    out.mkdir(parents=True, exist_ok=True)
    _echo(out, args, dict(inputs=sorted(str(p) for p in present.values()), missing=missing))
    lines = [f"# Campaign `{args.campaign}`", ""]

    if "resolvent" in present:
        summ = json.loads(present["resolvent"].read_text())
        lines += ["## Resolvent ratios", "", "| inequality | worst ratio | exponent vs nu | excluded |",
                  "|---|---|---|---|"]
        series = {}
        for stem, r in sorted(summ["reports"].items()):
            lines.append(f"| {stem} | {_fmt(r['worst_ratio'])} | {_fmt(r['fitted_exponent_vs_nu'])} | {r['excluded']} |")
            detail = json.loads((root / "resolvent" / f"{stem}.json").read_text())
            xs = sorted(float(x) for x in detail["worst_by_nu"])
            series[stem] = (xs, [detail["worst_by_nu"][repr(x)] for x in xs])
        loglog_lines(series, out / "resolvent_ratios.svg", "nu", "worst ratio", title="resolvent ratios")
        lines += ["", "![resolvent](resolvent_ratios.svg)", ""]

    if "evolve" in present:
        rows = _read_csv(present["evolve"])
        t = [float(r["t"]) for r in rows]
        semilog_curves({"||w||_L2": (t, [float(r["w_l2"]) for r in rows]),
                        "||u||_L2": (t, [float(r["u_l2"]) for r in rows])}, out / "decay.svg", "t", "norm",
                       title="linear decay")
        summ_path = root / "evolve" / "summary.json"
        lines += ["## Linear evolution", ""]
        if summ_path.exists():
            s = json.loads(summ_path.read_text())
            lines += [f"- gap: {_fmt(s['gap'])} at lambda = {_fmt(s['gap_lambda'])}",
                      f"- decay rate: {_fmt(s['decay_rate'])}",
                      f"- combined space-time ratio: {_fmt(s['combined_ratio'])} (binding f4 branch: "
                      f"{s['binding_branch']})"]
            gap_pts = ([s["nu"]], [s["gap"]])
            loglog_lines({"gap": gap_pts}, out / "gap_scaling.svg", "nu", "gap", title="pseudospectral gap",
                         reference=(0.5, s["nu"], s["gap"]))
            lines += ["", "![gap](gap_scaling.svg)"]
        lines += ["", "![decay](decay.svg)", ""]

    if "simulate" in present:
        s = json.loads(present["simulate"].read_text())
        E = s["E"]
        kk = min(8, len(E) - 1)
        stacked_bars([str(k) for k in range(0, kk + 1)], {"E_k": E[: kk + 1]}, out / "energy_stack.svg", "E_k",
                     title="energy functional")
        lines += ["## Nonlinear run", "", f"- outcome: **{s['outcome']}**",
                  f"- sum of E_k: {_fmt(s['energy_total'])}", f"- amplitude: {_fmt(s['config']['amplitude'])}",
                  "", "![energy](energy_stack.svg)", ""]

    if "scan" in present:
        pairs = _read_pairs(present["scan"])
        two = [(nu, a) for nu, a, side in pairs if not side]
        one = [(nu, a) for nu, a, side in pairs if side]
        series = {"A*": ([p[0] for p in two], [p[1] for p in two])}
        if one:
            series["one-sided"] = ([p[0] for p in one], [p[1] for p in one])
        anchor = (two or one)[0]
        loglog_lines(series, out / "threshold.svg", "nu", "A*", title="threshold",
                     reference=(2.0 / 3.0, anchor[0], anchor[1]))
        lines += ["## Threshold scan", "", "| nu | A* | one-sided |", "|---|---|---|"]
        lines += [f"| {_fmt(nu)} | {_fmt(a)} | {side or ''} |" for nu, a, side in pairs]
        fit_path = root / "fit" / "fit.json"
        if fit_path.exists():
            fit = json.loads(fit_path.read_text())
            lines += ["", f"- fitted exponent: {_fmt(fit['gamma_hat'])} (pairwise {_fmt(fit['slope_min'])} to "
                          f"{_fmt(fit['slope_max'])})"]
        lines += ["", "![threshold](threshold.svg)", ""]
    if missing:
        lines += ["## Not available", ""] + [f"- {m}" for m in missing] + [""]
    (out / "summary.md").write_text("\n".join(lines))
    return EX_OK


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, str):
        return v
    return f"{v:.4g}"


# -- parser ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="channel-stab", description="Stability toolkit for plane Poiseuille flow with slip walls.")
    p.add_argument("--output-dir", default="runs")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--threads", type=int, default=None, help="worker count (default $CHANNEL_STAB_THREADS or 1)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config; explicit flags override its values")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--campaign", default="default")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("resolvent", help="measure the resolvent inequalities over a sweep")
    r.add_argument("--nu", type=float, nargs="+")
    r.add_argument("--k", type=int, nargs="+")
    r.add_argument("--lam", type=float, nargs="+")
    r.add_argument("--ineq", nargs="+")
    r.add_argument("--n", type=int)
    r.add_argument("--bank", choices=["vanishing", "nonvanishing", "both"])
    r.add_argument("--no-refine", dest="refine", action="store_false", default=None)

    e = sub.add_parser("evolve", help="linear evolution of one mode and the space-time check")
    e.add_argument("--nu", type=float)
    e.add_argument("--k", type=int)
    e.add_argument("--n", type=int)
    e.add_argument("--dt", type=float)
    e.add_argument("--T", type=float)
    e.add_argument("--c", type=float)
    e.add_argument("--init", choices=["sine", "random", "eigenmode"])
    e.add_argument("--slot", choices=["none", "f1", "f2", "f3", "f4"])
    e.add_argument("--snapshot", action="store_true")

    s = sub.add_parser("simulate", help="nonlinear simulation")
    s.add_argument("--nu", type=float)
    _sim_flags(s)
    s.add_argument("--amp", type=float)
    s.add_argument("--c", type=float)
    s.add_argument("--no-dealias", action="store_true")
    s.add_argument("--snapshot-every", type=int, default=0)

    sc = sub.add_parser("scan", help="bisect stability thresholds and fit their exponent")
    _sim_flags(sc)
    sc.add_argument("--nu", dest="nu", type=float, nargs="+")
    sc.add_argument("--eps-lo", type=float)
    sc.add_argument("--eps-hi", type=float)
    sc.add_argument("--g", type=float, help="bracket exponent: A = eps * nu^g")
    sc.add_argument("--absolute", action="store_true", help="treat eps-lo/eps-hi as absolute amplitudes")
    sc.add_argument("--tol", type=float)
    sc.add_argument("--seeds", type=int, nargs="+")
    sc.add_argument("--max-runs", type=int)
    sc.add_argument("--synthetic", type=float, default=None,
                    help="replace simulations by the oracle 'Stable iff A <= nu^gamma' with this gamma")

    f = sub.add_parser("fit", help="fit the threshold exponent from a thresholds CSV")
    f.add_argument("--input")

    sub.add_parser("report", help="aggregate existing outputs into summary.md and figures")
    return p


def _sim_flags(s):
    s.add_argument("--K", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--T", type=float)
    s.add_argument("--family", choices=["random_sobolev", "critical_layer", "optimal_linear"])


COMMANDS = dict(resolvent=cmd_resolvent, evolve=cmd_evolve, simulate=cmd_simulate, scan=cmd_scan, fit=cmd_fit,
                report=cmd_report)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"channel-stab: usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"channel-stab: usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except MissingInput as exc:
        print(f"channel-stab: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except OutputExists as exc:
        print(f"channel-stab: {exc}", file=sys.stderr)
        return EX_CANTCREAT
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.exception("failed: %s", exc)
        return EX_ERROR


if __name__ == "__main__":
    sys.exit(main())
