"""``cwta`` command line: simulate, power, analyze.

Exit codes: 0 success, 2 usage/config error, 3 data-quality error, 4 internal.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import ingest, report
from .errors import ConfigError, CwtaError, DataQualityError
from .matrices import load_matrix
from .power import ENDPOINTS, grid_json, parse_range, power_grid
from .sim import MODELS, SimConfig, load_default, scenario_3x3, simulate_states, simulate_trial
from .stats import logrank, weighted_curve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
SCENARIOS = ("i", "ii", "iii", "iv", "v")


class UsageError(ConfigError):
    pass


def _float_list(text: str, flag: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{flag}: empty list")
    return vals


def _base_config(args) -> SimConfig:
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: cannot read {args.config}: {exc}") from None
        base = SimConfig.from_json(doc)
        if args.model and MODELS[base.model] is not MODELS[SimConfig(model=args.model).model]:
            raise UsageError(f"--model {args.model} disagrees with --config model {base.model}")
        return base
    if not args.model:
        raise UsageError("--model is required unless --config is given")
    return load_default(args.model)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# --- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    base = _base_config(args)
    if args.scenario and (args.hr_eff is not None or args.hr_tox is not None):
        raise UsageError("use either --scenario or --hr-eff/--hr-tox, not both")
    he, ht = base.hr_efficacy, base.hr_toxicity
    if args.scenario:
        he, ht = scenario_3x3(args.scenario)
    if args.hr_eff is not None:
        he = args.hr_eff
    if args.hr_tox is not None:
        ht = args.hr_tox
    if args.n < 2 or args.n % 2:
        raise UsageError(f"--n must be an even integer >= 2, got {args.n}")
    cfg = replace(
        base,
        sample_size=args.n,
        duration_weeks=args.weeks if args.weeks is not None else base.duration_weeks,
        hr_efficacy=he,
        hr_toxicity=ht,
        seed=args.seed,
    )
    ds = simulate_trial(cfg, endpoint=args.endpoint)
    res = logrank(ds, method=args.method, n_perm=args.perms, seed=args.seed)
    out = _out_dir(args)
    _write(out / "dataset.csv", report.dataset_csv(ds))
    curves = [weighted_curve(ds, g) for g in ds.group_names]
    title = f"{cfg.model} HR eff {he:g} / tox {ht:g}, n={cfg.sample_size}"
    svg = report.curve_pair_svg(curves, "week", title, res.p_two_sided, res.method, ends=[cfg.duration_weeks] * 2)
    _write(out / "curves.svg", svg)
    man = report.manifest("simulate", cfg.to_json() | {"endpoint": args.endpoint, "method": args.method}, cfg.seed)
    _write(out / "result.json", report.dumps({"result": report.result_json(res), "manifest": man}))
    report.write_manifest(out, man)
    print(f"{title}: U={res.U:.4f} Z={res.Z:.4f} {report.p_annotation(res.p_two_sided)} -> {out}")
    return EXIT_OK


# --- power -------------------------------------------------------------------


def cmd_power(args) -> int:
    base = _base_config(args)
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    if args.weeks is not None:
        base = replace(base, duration_weeks=args.weeks)
    out = _out_dir(args)
    if args.scenarios:
        cases = [c.strip() for c in args.scenarios.split(",") if c.strip()]
        hrs = [scenario_3x3(c) for c in cases]
        ss = [args.n if args.n is not None else base.sample_size]
    else:
        cases = []
        he_list = _float_list(args.hr_eff_list, "--hr-eff-list")
        ht_list = _float_list(args.hr_tox_list, "--hr-tox-list") if args.hr_tox_list else he_list
        if len(ht_list) == 1:
            ht_list = ht_list * len(he_list)
        if len(ht_list) != len(he_list):
            raise UsageError("--hr-tox-list must have one entry or as many as --hr-eff-list")
        hrs = list(zip(he_list, ht_list))
        ss = parse_range(args.ss)
    grid = power_grid(
        base, ss, hrs, endpoint=args.endpoint, replications=args.reps, seed=args.seed, alpha=args.alpha, workers=args.workers
    )
    _write(out / "power.csv", grid.to_csv())
    man = report.manifest(
        "power",
        {"base": base.to_json(), "ss": ss, "hrs": hrs, "endpoint": args.endpoint, "reps": args.reps, "alpha": args.alpha},
        args.seed,
    )
    doc = json.loads(grid_json(grid, args.target))
    _write(out / "power.json", report.dumps(doc | {"manifest": man}))
    _write(out / "ss_at_target.csv", report.ss_table_csv(grid, args.target))
    if cases:
        pts = {(p.hr_efficacy, p.hr_toxicity): p for p in grid.points if p.endpoint == grid.endpoints()[0]}
        vals = [pts[h].power for h in hrs]
        _write(out / "scenarios.svg", report.bar_svg(cases, vals, f"{base.model} power by scenario, n={ss[0]}"))
        for c, v in zip(cases, vals):
            print(f"scenario {c}: power {v:.3f}")
    else:
        for he, ht in grid.hrs():
            curves = {ep: grid.curve((he, ht), ep)[1] for ep in grid.endpoints()}
            svg = report.power_svg(grid.curve((he, ht), grid.endpoints()[0])[0], curves, f"HR {he:g} / {ht:g}", args.target)
            _write(out / f"power_hr{he:g}_{ht:g}.svg", svg)
        for (he, ht, ep), v in grid.ss_at_target(args.target).items():
            print(f"HR {he:g}/{ht:g} {ep}: SS at {args.target:g} power = {'not bracketed' if v is None else f'{v:.1f}'}")
    report.write_manifest(out, man)
    return EXIT_OK


# --- analyze -----------------------------------------------------------------


def cmd_analyze(args) -> int:
    try:
        matrix = load_matrix(args.matrix)
    except ConfigError as exc:
        raise UsageError(f"--matrix: {exc}") from None
    try:
        records = ingest.parse_patient_days(args.input)
    except OSError as exc:
        raise UsageError(f"--input: cannot read {args.input}: {exc}") from None
    ds = ingest.daily_trajectories(records, matrix, gap_policy=args.gap_policy, exit_policy=args.exit_policy)
    cohorts = list(ds.group_names) if args.all_cohorts else [args.cohort]
    kw = dict(method=args.method, alpha=args.alpha, n_perm=args.perms, seed=args.seed, exact=True if args.exact else None)
    rows = [ingest.cohort_vs_rest(ds, c, **kw) for c in cohorts]
    out = _out_dir(args)
    _write(out / "comparisons.csv", ingest.comparisons_csv(rows))
    man = report.manifest(
        "analyze",
        {"matrix": matrix.to_json(), "gap_policy": args.gap_policy, "exit_policy": args.exit_policy, **{k: v for k, v in kw.items()}},
        args.seed,
        inputs=[args.input],
    )
    # file digests are keyed by path as given; keep the payload independent of it
    man["inputs"] = {Path(k).name: v for k, v in man["inputs"].items()}
    _write(out / "comparisons.json", report.dumps({"comparisons": ingest.comparisons_json(rows), "manifest": man}))
    for c in rows:
        two = ds.cohort_vs_rest(c.cohort)
        curves = [weighted_curve(two, g) for g in two.group_names]
        ends = [max(p.exit_time for p in two.groups[g]) for g in two.group_names]
        title = f"Weighted Health Status {c.cohort} vs others"
        svg = report.curve_pair_svg(curves, ds.time_unit, title, c.p_value, c.method, args.alpha, ends=ends)
        _write(out / f"{report.safe_name(c.cohort)}_vs_others.svg", svg)
        print(f"{c.cohort:>10}  n={c.n_cohort:<3} {c.direction:<10} {c.label()}  [{c.method}]")
    report.write_manifest(out, man)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwta", description="Weighted trajectory analysis of efficacy and toxicity.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one two-arm trial and test it")
    s.add_argument("--model", choices=["3x3", "6x5"])
    s.add_argument("--scenario", choices=SCENARIOS)
    s.add_argument("--hr-eff", type=float)
    s.add_argument("--hr-tox", type=float)
    s.add_argument("--n", type=int, required=True, help="total sample size (even)")
    s.add_argument("--weeks", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config")
    s.add_argument("--endpoint", choices=ENDPOINTS, default="rba")
    s.add_argument("--method", choices=["normal", "permutation"], default="normal")
    s.add_argument("--perms", type=int, default=10_000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="Monte Carlo power over an (HR, SS) grid or the 3x3 scenarios")
    p.add_argument("--model", choices=["3x3", "6x5"])
    p.add_argument("--config")
    p.add_argument("--ss", default="20:320:30")
    p.add_argument("--hr-eff-list", default="0.6,0.7,0.8")
    p.add_argument("--hr-tox-list")
    p.add_argument("--scenarios", help="comma list of 3x3 cases, e.g. i,ii,iii,iv,v")
    p.add_argument("--n", type=int, help="sample size for --scenarios")
    p.add_argument("--weeks", type=int)
    p.add_argument("--endpoint", choices=["rba", "efficacy", "both"], default="rba")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--target", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="default: $CWTA_WORKERS or all cores")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_power)

    a = sub.add_parser("analyze", help="cohort-vs-rest analysis of patient-day records")
    a.add_argument("--input", required=True)
    a.add_argument("--matrix", default="6x5", help="built-in name or JSON grid")
    g = a.add_mutually_exclusive_group(required=True)
    g.add_argument("--cohort")
    g.add_argument("--all-cohorts", action="store_true")
    a.add_argument("--method", choices=["normal", "permutation"], default="permutation")
    a.add_argument("--perms", type=int, default=10_000)
    a.add_argument("--exact", action="store_true", help="enumerate every label assignment")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--gap-policy", choices=list(ingest.GAP_POLICIES), default="carry_forward")
    a.add_argument("--exit-policy", choices=list(ingest.EXIT_POLICIES), default="censor")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataQualityError as exc:
        print(f"cwta: data-quality error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, CwtaError) as exc:
        print(f"cwta: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort contract
        print(f"cwta: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
