"""Command-line interface: validate, spectrum, expansion, potential.

Exit codes: 0 when every requested check passes, 1 when a mathematical check
fails (inequality violated, solver disagreement over budget, residual above
tolerance), 2 on unusable input.  All randomized checks take a seed and the
reports are deterministic byte-for-byte given the same configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import boundary, expansion, fem, potentials, secular
from .functions import GridFunction, load_function_csv
from .graph import EdgePoint, MetricGraph, Point, VertexPoint, load_graph, validate

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


@dataclass
class RunConfig:
    graph_path: str
    bc_path: str
    command: str
    h_max: float = 0.02
    lam_min: float | None = None
    lam_max: float = 50.0
    modes: int = 8
    tol: float = 1e-6
    seed: int = 0
    out_dir: str | None = None
    potential: str | None = None
    weight_eps: float = 1.0
    weight_base: str | None = None
    hs_shift: float | None = None
    check_file: str | None = None
    check_lambda: float | None = None
    scan_points: int = 600
    samples: int = 1000
    bc_tol: float = boundary.DEFAULT_MATRIX_TOL


def _json_dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _emit(cfg: RunConfig, name: str, report: dict) -> None:
    text = _json_dump(report)
    print(text)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text + "\n", encoding="utf-8")


def _write_csv(cfg: RunConfig, name: str, header: list[str], rows: list) -> None:
    if not cfg.out_dir:
        return
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _load_inputs(cfg: RunConfig) -> tuple[MetricGraph, boundary.BoundaryCondition]:
    g = load_graph(cfg.graph_path)
    bc = boundary.load_bc(cfg.bc_path, g)
    return g, bc


def _parse_base_point(g: MetricGraph, spec: str | None) -> Point:
    if spec is None:
        return VertexPoint(g.vertices[0])
    if ":" in spec:
        eid_raw, t_raw = spec.split(":", 1)
        for e in g.edges:
            if str(e.id) == eid_raw:
                return EdgePoint(e.id, float(t_raw))
        raise ValueError(f"unknown edge {eid_raw!r} in --weight-base")
    for v in g.vertices:
        if str(v) == spec:
            return VertexPoint(v)
    raise ValueError(f"unknown vertex {spec!r} in --weight-base")


def _scan_range(cfg: RunConfig, const: boundary.CoercivityConstant) -> tuple[float, float]:
    lam_min = cfg.lam_min
    if lam_min is None:
        lam_min = -((2.0 * const.C) ** 2)  # safely below the proven form lower bound
    return lam_min, cfg.lam_max


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig) -> int:
    g = load_graph(cfg.graph_path)
    graph_violations = validate(g)
    report: dict = {
        "command": "validate",
        "graph": {
            "path": cfg.graph_path,
            "u": g.u,
            "n_vertices": len(g.vertices),
            "n_edges": len(g.edges),
            "total_length": g.total_length if g.is_compact else "inf",
            "compact": g.is_compact,
            "violations": [vars(v) for v in graph_violations],
        },
    }
    if graph_violations:
        report["valid"] = False
        _emit(cfg, "validate", report)
        return EXIT_CHECK_FAILED
    bc = boundary.load_bc(cfg.bc_path, g)
    bc_violations, S = boundary.validate_bc(g, bc, cfg.bc_tol)
    fatal = [v for v in bc_violations if v.code != "lp-mixing"]
    warn = [v for v in bc_violations if v.code == "lp-mixing"]
    const = boundary.coercivity_constant(S, g.u)
    report["boundary"] = {
        "path": cfg.bc_path,
        "S": S,
        "violations": [vars(v) for v in fatal],
        "warnings": [vars(v) for v in warn],
    }
    report["coercivity"] = {"S": const.S, "u": const.u, "eps": const.eps, "C": const.C}
    report["valid"] = not fatal
    _emit(cfg, "validate", report)
    return EXIT_OK if not fatal else EXIT_CHECK_FAILED


def _two_solver_spectra(cfg: RunConfig, g: MetricGraph, bc: boundary.BoundaryCondition):
    S = boundary.require_valid_bc(g, bc, cfg.bc_tol)
    const = boundary.coercivity_constant(S, g.u)
    lam_min, lam_max = _scan_range(cfg, const)
    hits = secular.eigenvalue_scan(g, bc, lam_min, lam_max, num=cfg.scan_points)
    exact = [h.lam for h in hits for _ in range(h.multiplicity)][: cfg.modes]
    if len(exact) < cfg.modes:
        raise ValueError(
            f"scan up to lambda={lam_max} found only {len(exact)} modes; raise --lambda-max"
        )
    fa = fem.assemble(g, bc, cfg.h_max)
    es = fem.eigensystem(fa, cfg.modes)
    return hits, exact, fa, es


def cmd_spectrum(cfg: RunConfig) -> int:
    g, bc = _load_inputs(cfg)
    g.require_compact("spectral computation")
    hits, exact, fa, es = _two_solver_spectra(cfg, g, bc)
    from .functions import edge_grid

    h = max(float(np.diff(edge_grid(g, e.id, cfg.h_max))[0]) for e in g.edges)
    pairs = []
    worst = 0.0
    ok = True
    for i in range(cfg.modes):
        lam_s = exact[i]
        lam_f = float(es.eigenvalues[i])
        budget = 10.0 * h * h * max(1.0, abs(lam_s))
        diff = abs(lam_s - lam_f)
        worst = max(worst, diff)
        ok = ok and diff <= budget
        pairs.append(
            {"index": i, "secular": lam_s, "fem": lam_f, "diff": diff, "budget": budget}
        )
    report = {
        "command": "spectrum",
        "mesh": cfg.h_max,
        "modes": cfg.modes,
        "eigenvalues": pairs,
        "multiplicities": [{"lambda": hh.lam, "multiplicity": hh.multiplicity} for hh in hits],
        "max_disagreement": worst,
        "within_budget": ok,
    }
    _write_csv(cfg, "secular_spectrum", ["index", "eigenvalue"], list(enumerate(exact)))
    _write_csv(
        cfg,
        "secular_report",
        ["lambda", "multiplicity", "sigma_min"],
        [(hh.lam, hh.multiplicity, hh.sigma_min) for hh in hits],
    )
    _write_csv(cfg, "fem_spectrum", ["index", "eigenvalue"], fem.spectrum_csv_rows(es))
    _emit(cfg, "spectrum", report)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _expansion_core(cfg: RunConfig, g: MetricGraph, bc: boundary.BoundaryCondition):
    S = boundary.require_valid_bc(g, bc, cfg.bc_tol)
    const = boundary.coercivity_constant(S, g.u)
    lam_min, lam_max = _scan_range(cfg, const)
    hits = secular.eigenvalue_scan(g, bc, lam_min, lam_max, num=cfg.scan_points)
    flat = [h for h in hits for _ in range(h.multiplicity)][: cfg.modes]
    if len(flat) < cfg.modes:
        raise ValueError(
            f"scan up to lambda={lam_max} found only {len(flat)} modes; raise --lambda-max"
        )
    kept = []
    count = 0
    for h in hits:
        if count >= cfg.modes:
            break
        kept.append(h)
        count += h.multiplicity
    rep = expansion.DiscreteSpectralRep.from_secular(g, bc, kept, cfg.h_max)
    base = _parse_base_point(g, cfg.weight_base)
    wf = expansion.build_weight(g, base, cfg.weight_eps)
    weight_grid = wf.sample(cfg.h_max)
    C = cfg.hs_shift if cfg.hs_shift is not None else const.C + 1.0
    return const, rep, wf, weight_grid, C


def cmd_expansion(cfg: RunConfig) -> int:
    g, bc = _load_inputs(cfg)
    g.require_compact("the expansion report")
    const, rep, wf, weight_grid, C = _expansion_core(cfg, g, bc)
    hs = expansion.hs_norm_sq(rep, weight_grid, C, inverse_sup=wf.inverse_sup)

    rng = np.random.default_rng(cfg.seed)
    battery = {}
    coeffs = rng.standard_normal(len(rep.modes))
    span_f = expansion.reconstruct(rep, coeffs.astype(complex))
    battery["random_span"] = expansion.parseval(rep, span_f)
    bump_f = GridFunction.from_callable(
        g, cfg.h_max, lambda eid, ts: (ts * (g.edge(eid).length - ts)).astype(complex)
    )
    battery["bridge_poly"] = expansion.parseval(rep, bump_f)

    worst_resid = 0.0
    per_mode = []
    for idx, m in enumerate(rep.modes):
        rr = expansion.generalized_eigenfunction_residual(g, bc, m.exact, m.lam)
        winv_norm = math.sqrt(max(hs.per_mode[idx] * (C + m.lam), 0.0))
        worst_resid = max(worst_resid, rr.max_residual)
        per_mode.append(
            {
                "j": m.j,
                "lambda": m.lam,
                "residual": rr.max_residual,
                "weighted_norm": winv_norm,
            }
        )

    check_result = None
    if cfg.check_file is not None:
        if cfg.check_lambda is None:
            raise ValueError("--check-file needs --check-lambda")
        phi = load_function_csv(cfg.check_file, g, cfg.h_max)
        rr = expansion.generalized_eigenfunction_residual(g, bc, phi, cfg.check_lambda)
        check_result = {"lambda": cfg.check_lambda, "residual": rr.max_residual}
        worst_resid = max(worst_resid, rr.max_residual)

    report = {
        "command": "expansion",
        "modes": len(rep.modes),
        "weight": {
            "eps": cfg.weight_eps,
            "base": str(cfg.weight_base),
            "integral_inverse_square": wf.integral_inverse_square(),
        },
        "hs": {"C": C, "partial": hs.partial, "tail_bound": hs.tail, "total": hs.total},
        "hs_norm_sq": hs.total,
        "tail_bound": hs.tail,
        "parseval": {
            name: {"norm_sq": p.norm_sq, "coeff_sq": p.coeff_sq, "gap": p.gap, "relative_gap": p.relative_gap}
            for name, p in battery.items()
        },
        "parseval_gap": max(p.gap for p in battery.values()),
        "worst_genef_residual": worst_resid,
        "per_mode": per_mode,
        "level_sets": {str(j): lams for j, lams in rep.level_sets().items()},
        "tolerance": cfg.tol,
    }
    if check_result is not None:
        report["check_file"] = check_result
    _emit(cfg, "expansion", report)
    return EXIT_OK if worst_resid <= cfg.tol else EXIT_CHECK_FAILED


def cmd_potential(cfg: RunConfig) -> int:
    g, bc = _load_inputs(cfg)
    g.require_compact("the potential report")
    if cfg.potential is None:
        raise ValueError("--potential is required for this command")
    if Path(cfg.potential).exists():
        V = potentials.load_potential_csv(cfg.potential, g, cfg.h_max)
    else:
        V = potentials.parse_potential_expr(cfg.potential, g, cfg.h_max)
    S = boundary.require_valid_bc(g, bc, cfg.bc_tol)
    const = boundary.coercivity_constant(S, g.u)
    mv = potentials.uniform_l2_norm(g, V)
    fa = fem.assemble(g, bc, cfg.h_max)
    es0 = fem.eigensystem(fa, cfg.modes)
    fa_v = potentials.assemble_perturbed(fa, V)
    es1 = fem.eigensystem(fa_v, cfg.modes)

    bound_reports = []
    worst_margin = math.inf
    for frac in (0.25, 0.5, 1.0):
        a = frac * g.u
        rb = potentials.check_relative_bound(fa, V, a, const.C, n_samples=cfg.samples, seed=cfg.seed)
        worst_margin = min(worst_margin, rb.worst_margin, rb.worst_window_margin)
        bound_reports.append(
            {
                "a": a,
                "M": rb.M,
                "C_a": rb.C_a,
                "worst_margin": rb.worst_margin,
                "worst_window_margin": rb.worst_window_margin,
            }
        )

    vvals = np.concatenate([np.asarray(V.values[e.id], dtype=float) for e in g.edges])
    shift_check = None
    if float(np.max(vvals) - np.min(vvals)) < 1e-12:
        c = float(vvals[0])
        shift_check = float(np.max(np.abs(es1.eigenvalues - (es0.eigenvalues + c))))

    pr = potentials.perturbed_eigen_report(g, bc, V, es1)
    report = {
        "command": "potential",
        "potential": cfg.potential,
        "m_v": {
            "value": mv.M,
            "segment": {"edge": str(mv.segment.edge), "t0": mv.segment.t0, "t1": mv.segment.t1},
        },
        "relative_bound": bound_reports,
        "spectrum": {
            "unperturbed": [float(x) for x in es0.eigenvalues],
            "perturbed": [float(x) for x in es1.eigenvalues],
        },
        "perturbed_modes": [
            {
                "lambda": m.lam,
                "interior_residual": m.interior_residual,
                "star_residual": m.star_residual,
                "trace_defect": m.trace_defect,
            }
            for m in pr.modes
        ],
        "tolerance": cfg.tol,
    }
    if shift_check is not None:
        report["constant_shift_error"] = shift_check
    _emit(cfg, "potential", report)
    ok = worst_margin >= -1e-8 and (shift_check is None or shift_check <= 1e-8)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metricgraph",
        description="Spectra and eigenfunction expansions for operators on metric graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("validate", "check a graph and boundary-condition file"),
        ("spectrum", "compute the spectrum with both solvers and cross-check"),
        ("expansion", "weighted expansion report: HS norm, Parseval, residuals"),
        ("potential", "perturb by a potential and verify the relative bounds"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--graph", required=True, help="graph description JSON")
        p.add_argument("--bc", required=True, help="boundary-condition JSON")
        p.add_argument("--mesh", type=float, default=0.02, help="grid width h_max")
        p.add_argument("--lambda-min", type=float, default=None)
        p.add_argument("--lambda-max", type=float, default=50.0)
        p.add_argument("--modes", type=int, default=8)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="directory for reports and CSV exports")
        p.add_argument("--scan-points", type=int, default=600)
        p.add_argument("--samples", type=int, default=1000)
        p.add_argument("--bc-tol", type=float, default=boundary.DEFAULT_MATRIX_TOL)
        if name == "expansion":
            p.add_argument("--weight-eps", type=float, default=1.0)
            p.add_argument("--weight-base", default=None, help="vertex id or edge:t")
            p.add_argument("--hs-c", type=float, default=None, help="shift C in (C + H)^-1/2")
            p.add_argument("--check-file", default=None, help="function CSV to test")
            p.add_argument("--check-lambda", type=float, default=None)
        if name == "potential":
            p.add_argument("--potential", required=True, help="CSV path or const:c / well:edge,t0,t1,d")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        graph_path=args.graph,
        bc_path=args.bc,
        command=args.command,
        h_max=args.mesh,
        lam_min=args.lambda_min,
        lam_max=args.lambda_max,
        modes=args.modes,
        tol=args.tol,
        seed=args.seed,
        out_dir=args.out,
        potential=getattr(args, "potential", None),
        weight_eps=getattr(args, "weight_eps", 1.0),
        weight_base=getattr(args, "weight_base", None),
        hs_shift=getattr(args, "hs_c", None),
        check_file=getattr(args, "check_file", None),
        check_lambda=getattr(args, "check_lambda", None),
        scan_points=args.scan_points,
        samples=args.samples,
        bc_tol=args.bc_tol,
    )


_COMMANDS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "expansion": cmd_expansion,
    "potential": cmd_potential,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args)
    try:
        return _COMMANDS[cfg.command](cfg)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
