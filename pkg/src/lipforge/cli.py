"""Command-line front end.

Subcommands: construct (run the ball game, write artifacts), probe (witness
difference-quotient and sub-gradient reports for stored artifacts), verify
(invariant suites), eval (evaluate an artifact on a grid to CSV) and net
(emit the nested net family as CSV). Configuration is a flat INI file with
sections; every numeric field is parsed from its string form so locale
drift cannot change a run. All commands are deterministic given the config
and seeds; reruns produce byte-identical outputs.

The LIPFORGE_LOG environment variable (quiet, info, debug) controls logging.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import mpmath
import numpy as np

from . import verify as verify_mod
from .game import GameTranscript, load_transcript, run_game
from .lipfun import deserialize, eval_batch, fun_to_dict
from .nets import TargetSet, nested_nets
from .numerics import CONSTRUCTION_DPS, LipForgeError, exact_mpf, to_float
from .probe import (
    witness_bound_report,
    witness_dini_report,
)
from .space import Domain, LinearMap, NormKind

log = logging.getLogger("lipforge")


def _setup_logging() -> None:
    level_name = os.environ.get("LIPFORGE_LOG", "info").strip().lower()
    levels = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        level_name = "info"
    logging.basicConfig(stream=sys.stderr, level=levels[level_name], format="%(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    target: TargetSet
    operators: tuple[LinearMap, ...]
    rounds: int
    adversary: str
    seed: int
    dps: int
    sup_budget: int
    probe_budget: int | None
    per_round: int
    min_round: int
    ladder_steps: int
    ladder_ratio: float
    dini_direction: np.ndarray


def _cfg_error(path: str, section: str, key: str, message: str) -> LipForgeError:
    return LipForgeError(f"config {path}: [{section}] {key}: {message}")


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def load_config(path: str) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise LipForgeError(f"config not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(p.read_text(encoding="utf-8"))
    except configparser.Error as e:
        raise LipForgeError(f"config {path}: {e}") from e

    def get(section: str, key: str, default=None):
        if not parser.has_section(section) or not parser.has_option(section, key):
            if default is None:
                raise _cfg_error(path, section, key, "missing required field")
            return default
        return parser.get(section, key)

    # domain
    shape = get("domain", "shape", "box").strip().lower()
    kind = NormKind.parse(get("domain", "norm", "euclidean"))
    try:
        if shape == "box":
            lo = _parse_floats(get("domain", "lo"))
            hi = _parse_floats(get("domain", "hi"))
            domain = Domain.box(lo, hi, kind)
        elif shape == "ball":
            center = _parse_floats(get("domain", "center"))
            radius = float(get("domain", "radius"))
            domain = Domain.ball(center, radius, kind)
        else:
            raise _cfg_error(path, "domain", "shape", f"unknown shape {shape!r}")
    except ValueError as e:
        raise _cfg_error(path, "domain", "lo/hi", str(e)) from e

    # target set
    tkind = get("target", "kind", "grid").strip().lower()
    if tkind == "grid":
        try:
            step = float(get("target", "step"))
        except ValueError as e:
            raise _cfg_error(path, "target", "step", "not a decimal") from e
        if domain.shape != "box":
            raise _cfg_error(path, "target", "kind", "grid targets need a box domain")
        target = TargetSet.grid(domain.lo, domain.hi, step)
    elif tkind == "points":
        file = get("target", "file")
        fpath = Path(file)
        if not fpath.is_absolute():
            fpath = p.parent / fpath
        if not fpath.exists():
            raise _cfg_error(path, "target", "file", f"file not found: {fpath}")
        rows = [
            _parse_floats(line)
            for line in fpath.read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        target = TargetSet.from_points(rows)
    elif tkind == "halton":
        try:
            count = int(get("target", "count"))
        except ValueError as e:
            raise _cfg_error(path, "target", "count", "not an integer") from e
        target = TargetSet.low_discrepancy(domain, count, seed=int(get("target", "seed", "0")))
    else:
        raise _cfg_error(path, "target", "kind", f"unknown target kind {tkind!r}")

    # operators
    if not parser.has_section("operators"):
        raise _cfg_error(path, "operators", "op1", "missing section")
    try:
        rows = int(get("operators", "rows", "1"))
    except ValueError as e:
        raise _cfg_error(path, "operators", "rows", "not an integer") from e
    out_kind = NormKind.parse(get("operators", "out_norm", "euclidean"))
    ops = []
    idx = 1
    while parser.has_option("operators", f"op{idx}"):
        flat = _parse_floats(parser.get("operators", f"op{idx}"))
        if rows <= 0 or len(flat) % rows != 0:
            raise _cfg_error(path, "operators", f"op{idx}", f"cannot reshape {len(flat)} entries into {rows} rows")
        cols = len(flat) // rows
        matrix = np.asarray(flat, dtype=float).reshape(rows, cols)
        ops.append(LinearMap(matrix, domain.norm, out_kind))
        idx += 1
    if not ops:
        raise _cfg_error(path, "operators", "op1", "need at least one operator")

    def get_int(section: str, key: str, default: str) -> int:
        try:
            return int(get(section, key, default))
        except ValueError as e:
            raise _cfg_error(path, section, key, "not an integer") from e

    def get_float(section: str, key: str, default: str) -> float:
        try:
            return float(get(section, key, default))
        except ValueError as e:
            raise _cfg_error(path, section, key, "not a decimal") from e

    direction_text = get("probe", "dini_direction", " ".join(["1"] + ["0"] * (domain.dim - 1)))
    direction = np.asarray(_parse_floats(direction_text), dtype=float)
    if len(direction) != domain.dim:
        raise _cfg_error(path, "probe", "dini_direction", "wrong dimension")

    probe_budget = get_int("probe", "budget", "0")
    return RunConfig(
        domain=domain,
        target=target,
        operators=tuple(ops),
        rounds=get_int("game", "rounds", "8"),
        adversary=get("game", "adversary", "stay").strip().lower(),
        seed=get_int("game", "seed", "0"),
        dps=get_int("game", "dps", str(CONSTRUCTION_DPS)),
        sup_budget=get_int("game", "sup_budget", "192"),
        probe_budget=probe_budget if probe_budget > 0 else None,
        per_round=get_int("probe", "per_round", "1"),
        min_round=get_int("probe", "min_round", "1"),
        ladder_steps=get_int("probe", "ladder_steps", "20"),
        ladder_ratio=get_float("probe", "ladder_ratio", "0.5"),
        dini_direction=direction,
    )


# ---------------------------------------------------------------------------
# Output helpers


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _scale_str(x) -> str:
    return mpmath.nstr(exact_mpf(x), 12, strip_zeros=False)


def _svg_plot(points_by_round: dict[int, tuple[float, float]], path: Path) -> None:
    """Scatter of log10 dq against log10 scale, one mark per round.

    Takes (log10_scale, dq) pairs; scales are passed pre-logged because deep
    rounds sit far below the float64 exponent range.
    """
    if not points_by_round:
        return
    import math

    w, h, margin = 480, 320, 48
    lx = [p[0] for p in points_by_round.values()]
    ly = [math.log10(max(p[1], 1e-18)) for p in points_by_round.values()]
    x0, x1 = min(lx), max(lx) + 1e-9
    y0, y1 = min(ly), max(ly) + 1e-9

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (w - 2 * margin)

    def sy(v):
        return h - margin - (v - y0) / (y1 - y0) * (h - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<line x1="{margin}" y1="{h - margin}" x2="{w - margin}" y2="{h - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{h - margin}" stroke="black"/>',
        f'<text x="{w // 2}" y="{h - 8}" font-size="12" text-anchor="middle">log10 scale</text>',
        f'<text x="12" y="{h // 2}" font-size="12" transform="rotate(-90 12 {h // 2})" text-anchor="middle">log10 dq</text>',
    ]
    for k in sorted(points_by_round):
        px, py = sx(points_by_round[k][0]), sy(math.log10(max(points_by_round[k][1], 1e-18)))
        parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="4" fill="steelblue"/>')
        parts.append(f'<text x="{px + 6:.1f}" y="{py - 6:.1f}" font-size="10">k={k}</text>')
    parts.append("</svg>")
    _write_text(path, "\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_construct(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    out = Path(args.out)
    log.info("running %d rounds (adversary=%s, seed=%d, dps=%d)", cfg.rounds, cfg.adversary, seed, cfg.dps)
    transcript = run_game(
        cfg.domain,
        cfg.target,
        cfg.operators,
        adversary_kind=cfg.adversary,
        rounds=cfg.rounds,
        seed=seed,
        dps=cfg.dps,
        sup_budget=cfg.sup_budget,
    )
    out.mkdir(parents=True, exist_ok=True)
    transcript.save(out / "transcript.json")
    _write_text(out / "function.json", json.dumps(fun_to_dict(transcript.final_fun), separators=(",", ":")))
    _write_text(out / "nets.csv", transcript.nets.to_csv())
    print(f"rounds: {transcript.k_max}")
    for rec in transcript.rounds:
        log.info(
            "round %d: net=%d alpha=%s s=%s", rec.round_k, rec.net_size, _scale_str(rec.alpha), _scale_str(rec.s)
        )
    print(f"tail bound s_K = {_scale_str(transcript.tail_bound)}")
    return 0


def _probe_rows(transcript: GameTranscript, per_round: int, budget: int | None, seed: int):
    report = witness_bound_report(transcript, per_round=per_round, budget=budget, seed=seed)
    d = transcript.domain.dim
    header = "k," + ",".join(f"x{i + 1}" for i in range(d)) + ",op,scale,dq,bound,ok"
    lines = [header]
    per_round_vals: dict[int, list[float]] = {}
    for pr in report:
        w = pr.witness
        x = [to_float(v) for v in (w.center if w.offset is None else w.point())]
        per_round_vals.setdefault(w.round_k, []).append(pr.value)
        lines.append(
            f"{w.round_k},"
            + ",".join(repr(v) for v in x)
            + f",{w.op_index},{_scale_str(w.alpha)},{pr.value!r},{pr.bound!r},{int(pr.ok)}"
        )
    for k in sorted(per_round_vals):
        vals = per_round_vals[k]
        ok = sum(1 for v in vals if v <= 4.0 / k + 1e-9)
        fields = [str(k)] + [""] * d + ["summary", "", repr(max(vals)), repr(4.0 / k), f"{ok}/{len(vals)}"]
        lines.append(",".join(fields))
    return report, lines


def cmd_probe(args) -> int:
    art_path = Path(args.artifact)
    if not art_path.exists():
        raise LipForgeError(f"artifact not found: {art_path}")
    transcript = load_transcript(args.transcript)
    fun = deserialize(art_path.read_bytes())
    # Probe against the standalone artifact tree (transcripts embed the same
    # mapping; the artifact file is the authority here).
    transcript = dataclasses.replace(transcript, final_fun=fun)
    out = Path(args.out)
    seed = args.seed if args.seed is not None else transcript.seed

    report, lines = _probe_rows(transcript, args.per_round, args.budget, seed)
    ok_count = sum(1 for r in report if r.ok)
    summary = [
        "witness difference-quotient report",
        f"witnesses: {len(report)}",
        f"meeting 4/k bound: {ok_count} ({ok_count / max(len(report), 1):.1%})",
    ]
    per_round_stats: dict[int, list[float]] = {}
    for r in report:
        per_round_stats.setdefault(r.witness.round_k, []).append(r.value)
    plot_points = {}
    for k in sorted(per_round_stats):
        vals = per_round_stats[k]
        rec = transcript.rounds[k - 1]
        summary.append(f"round {k}: witnesses={len(vals)} max_dq={max(vals)!r} bound={4.0 / k!r}")
        plot_points[k] = (float(mpmath.log10(exact_mpf(rec.alpha))), max(vals))

    dini = witness_dini_report(
        transcript,
        args.dini_direction,
        min_round=args.min_round,
        per_round=args.per_round,
        seed=seed,
        coarse_steps=args.ladder_steps,
        ratio=args.ladder_ratio,
    )
    fired = sum(1 for r in dini if r.report.fires)
    summary.append("")
    summary.append("sub-gradient emptiness certificates")
    summary.append(f"direction: {' '.join(repr(float(v)) for v in args.dini_direction)}")
    summary.append(f"witnesses probed (rounds >= {args.min_round}): {len(dini)}")
    summary.append(f"certificates fired: {fired} ({fired / max(len(dini), 1):.1%})")
    fired_by_round: dict[int, list[int]] = {}
    for r in dini:
        fired_by_round.setdefault(r.witness.round_k, []).append(1 if r.report.fires else 0)
    for k in sorted(fired_by_round):
        hits = fired_by_round[k]
        summary.append(f"round {k}: fired {sum(hits)}/{len(hits)}")

    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "probe_report.csv", "\n".join(lines) + "\n")
    _write_text(out / "probe_summary.txt", "\n".join(summary) + "\n")
    if args.plot:
        _svg_plot(plot_points, out / "dq_scales.svg")
    for line in summary:
        print(line)
    return 0 if ok_count == len(report) else 1


def cmd_verify(args) -> int:
    results: list[verify_mod.CheckResult] = []
    if args.artifact is None and args.transcript is None:
        suites = [
            (verify_mod.blend_suite, (args.seed or 0,)),
            (verify_mod.lipschitz_suite, (args.seed or 0,)),
            (verify_mod.net_suite, ()),
            (verify_mod.perturb_suite, (args.seed or 0,)),
        ]
        if args.jobs and args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(fn, *fargs) for fn, fargs in suites]
                for fut in futures:
                    results += fut.result()
        else:
            for fn, fargs in suites:
                results += fn(*fargs)
    if args.artifact is not None:
        path = Path(args.artifact)
        if not path.exists():
            raise LipForgeError(f"artifact not found: {path}")
        fun = deserialize(path.read_bytes())
        results += verify_mod.artifact_suite(fun, seed=args.seed or 0)
    if args.transcript is not None:
        transcript = load_transcript(args.transcript)
        results += verify_mod.transcript_suite(transcript, per_round=args.per_round, budget=args.budget)

    failures = [r for r in results if not r.ok]
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{status:4s} {r.name}" + (f"  ({r.detail})" if r.detail else ""))
    print(f"{len(results) - len(failures)}/{len(results)} checks passed")
    if failures:
        print(f"first failing invariant: {failures[0].name}", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    path = Path(args.artifact)
    if not path.exists():
        raise LipForgeError(f"artifact not found: {path}")
    fun = deserialize(path.read_bytes())
    lo = np.asarray(_parse_floats(args.lo), dtype=float)
    hi = np.asarray(_parse_floats(args.hi), dtype=float)
    if len(lo) != fun.in_dim or len(hi) != fun.in_dim:
        raise LipForgeError("grid bounds have wrong dimension")
    domain = Domain.box(lo, hi)
    pts = domain.grid(args.per_axis)
    vals = eval_batch(fun, pts)
    header = ",".join(f"x{i + 1}" for i in range(fun.in_dim)) + "," + ",".join(
        f"f{j + 1}" for j in range(fun.out_dim)
    )
    lines = [header]
    for p, v in zip(pts, vals):
        lines.append(",".join(repr(float(c)) for c in p) + "," + ",".join(repr(float(c)) for c in v))
    out = Path(args.out)
    _write_text(out / "eval.csv", "\n".join(lines) + "\n")
    print(f"evaluated {len(pts)} points")
    return 0


def cmd_net(args) -> int:
    cfg = load_config(args.config)
    family = nested_nets(cfg.target, cfg.domain, cfg.rounds)
    out = Path(args.out)
    _write_text(out / "nets.csv", family.to_csv())
    for k in range(1, family.k_max + 1):
        print(f"level {k}: {len(family.level(k))} points")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="run the ball game and write artifacts")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(fn=cmd_construct)

    p = sub.add_parser("probe", help="witness probes for stored artifacts")
    p.add_argument("--artifact", required=True)
    p.add_argument("--transcript", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--per-round", dest="per_round", type=int, default=1)
    p.add_argument("--min-round", dest="min_round", type=int, default=1)
    p.add_argument("--ladder-steps", dest="ladder_steps", type=int, default=20)
    p.add_argument("--ladder-ratio", dest="ladder_ratio", type=float, default=0.5)
    p.add_argument("--dini-direction", dest="dini_direction_text", default=None)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_probe)

    v = sub.add_parser("verify", help="run invariant suites")
    v.add_argument("--artifact", default=None)
    v.add_argument("--transcript", default=None)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--budget", type=int, default=None)
    v.add_argument("--per-round", dest="per_round", type=int, default=1)
    v.set_defaults(fn=cmd_verify)

    e = sub.add_parser("eval", help="evaluate an artifact on a grid to CSV")
    e.add_argument("--artifact", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--lo", required=True, help="grid lower corner, e.g. '0 0'")
    e.add_argument("--hi", required=True, help="grid upper corner, e.g. '1 1'")
    e.add_argument("--per-axis", dest="per_axis", type=int, default=11)
    e.set_defaults(fn=cmd_eval)

    n = sub.add_parser("net", help="emit the nested net family as CSV")
    n.add_argument("--config", required=True)
    n.add_argument("--out", required=True)
    n.set_defaults(fn=cmd_net)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "dini_direction_text", None) is not None:
        args.dini_direction = np.asarray(_parse_floats(args.dini_direction_text), dtype=float)
    elif args.command == "probe":
        args.dini_direction = None
    try:
        if args.command == "probe" and args.dini_direction is None:
            transcript = load_transcript(args.transcript)
            direction = np.zeros(transcript.domain.dim)
            direction[0] = 1.0
            args.dini_direction = direction
        return args.fn(args)
    except LipForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
