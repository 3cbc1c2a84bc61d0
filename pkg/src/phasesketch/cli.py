"""Command-line interface: run, analyze, fit, exact, report."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, config_from_dict, config_to_dict, load_config
from .store import RecordStore, StoreError
from .vqe_engine import best_records, mark_best, run_sweep

log = logging.getLogger("phasesketch")


def _col(name: str) -> str:
    return name.replace("_", "")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if (isinstance(v, float) and np.isnan(v)) else v for v in row])
    log.info("wrote %s (%d rows)", path, len(rows))


def _load(records_dir):
    store = RecordStore(records_dir)
    cfg = config_from_dict(store.manifest()["config"])
    recs = store.records()
    if not recs:
        raise StoreError(f"{records_dir} has no records")
    return store, cfg, recs


def _grid_holes(cfg, best):
    holes = [(g, p) for g in cfg.g_grid for p in cfg.p_grid if (g, p) not in best]
    if holes:
        warnings.warn(f"partial grid, {len(holes)} missing (g, p) cells: {holes}", stacklevel=2)
    return holes


# ---------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.output or cfg.output_dir
    if not out:
        raise ConfigError("no output directory: set output_dir in the config or pass --output")
    workers = args.workers or int(os.environ.get("PHASESKETCH_WORKERS", "0")) or cfg.workers
    store = RecordStore(out).open(config_to_dict(cfg), resume=args.resume)
    before = len(store.records())

    def progress(rec):
        log.info("stage %d g=%.6g p=%d restart=%d E=%.10f iters=%d", rec.stage, rec.g, rec.p,
                 rec.restart, rec.energy, rec.iterations)

    records = run_sweep(cfg, store, workers=workers, progress=progress)
    store.rewrite(mark_best(records))
    print(f"{len(records) - before} new records, {len(records)} total in {out}")
    return 0


def analysis_rows(cfg, recs, normalize=True, median_guard=False):
    """Rows of the per-(p, g) analysis table and its header."""
    best = best_records(recs)
    holes = _grid_holes(cfg, best)
    name = recs[0].param_name
    ops = sorted({k for r in recs for k in r.order_params})
    energies = {cell: r.energy for cell, r in best.items()}
    raw = analysis.energy_derivative_table(energies, False, g_grid=cfg.g_grid, p_grid=cfg.p_grid, allow_holes=True)
    norm = analysis.normalize_table(raw)
    gs = list(cfg.g_grid)
    op_vals = {op: np.array([[best[(g, p)].order_params.get(op, np.nan) if (g, p) in best else np.nan for g in gs]
                             for p in cfg.p_grid]) for op in ops}
    op_deriv = {op: analysis.g_derivative(v, gs) if len(gs) >= 3 else np.full_like(v, np.nan)
                for op, v in op_vals.items()}
    header = ["p", name, "energy", "dE_dp", "dE_dp_norm"]
    for op in ops:
        header += [op, f"d{_col(op)}_d{_col(name)}"]
    rows = []
    for r, p in enumerate(cfg.p_grid):
        for c, g in enumerate(gs):
            e = energies.get((g, p), np.nan)
            de = raw.values[r - 1, c] if r > 0 else np.nan
            dn = norm.values[r - 1, c] if r > 0 else np.nan
            row = [p, g, e, de, dn]
            for op in ops:
                row += [op_vals[op][r, c], op_deriv[op][r, c]]
            rows.append(row)
    return header, rows, holes


def cmd_analyze(args) -> int:
    store, cfg, recs = _load(args.records)
    header, rows, holes = analysis_rows(cfg, recs, args.normalize, args.median_guard)
    out = Path(args.out or store.dir / "analysis.csv")
    _write_csv(out, header, rows)
    if holes:
        print(f"warning: {len(holes)} grid holes: {holes}", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    store, cfg, recs = _load(args.records)
    best = best_records(recs)
    _grid_holes(cfg, best)
    rows = []
    for g in cfg.g_grid:
        ps = [p for p in cfg.p_grid if (g, p) in best]
        if len(ps) < 4:
            rows.append([g, np.nan, np.nan, np.nan, np.nan])
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = analysis.exp_fit([best[(g, p)].energy for p in ps], ps)
        rows.append([g, fit.a, fit.gamma, fit.e0_fit, fit.residual])
    _write_csv(Path(args.out or store.dir / "fit.csv"), [recs[0].param_name, "a", "gamma", "e0_fit", "residual"], rows)
    return 0


def cmd_exact(args) -> int:
    from .exact_oracle import ground_order_parameter, ground_space, ground_space_fidelity
    from .flo_sim import FermionCircuit
    from .qudit_sim import SpinCircuit

    cfg = load_config(args.config)
    model = cfg.build_model()
    ops = cfg.order_params or analysis.ORDER_PARAMS[model.kind]
    spaces = {g: ground_space(model, g) for g in cfg.g_grid}
    rows = [[g, gs.energy, gs.degeneracy, gs.gap] + [ground_order_parameter(model, gs, op) for op in ops]
            for g, gs in spaces.items()]
    out_dir = Path(args.output or cfg.output_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "exact.csv", [model.param_name, "E0", "degeneracy", "gap", *ops], rows)
    store = RecordStore(out_dir)
    if store.exists():
        sim = FermionCircuit(model) if model.is_fermionic else SpinCircuit(model)
        recs = store.records()
        for r in recs:
            gs = spaces.get(r.g)
            if gs is None:
                continue
            state = sim.run(np.asarray(r.theta_final), r.p)
            r.exact_ref = {"E0": gs.energy, "fidelity": ground_space_fidelity(state, gs), "degeneracy": gs.degeneracy}
        store.rewrite(mark_best(recs))
        print(f"attached exact references to {len(recs)} records")
    return 0


def report_rows(cfg, recs, median_guard=False):
    best = best_records(recs)
    _grid_holes(cfg, best)
    name = recs[0].param_name
    energies = {cell: r.energy for cell, r in best.items()}
    table = analysis.energy_derivative_table(energies, True, g_grid=cfg.g_grid, p_grid=cfg.p_grid, allow_holes=True)
    de = analysis.locate_transition(table, "argmin", median_guard=median_guard)
    ops = sorted({k for r in recs for k in r.order_params})
    header = ["p", f"argmin_dE_dp_{_col(name)}"] + [f"argmax_abs_d{_col(op)}_d{_col(name)}" for op in ops]
    header.append("median_guard")
    rows = []
    gs = list(cfg.g_grid)
    for p in cfg.p_grid:
        row = [p, de.get(p, np.nan)]
        for op in ops:
            vals = [best[(g, p)].order_params.get(op, np.nan) if (g, p) in best else np.nan for g in gs]
            if len(gs) >= 3 and np.isfinite(vals).all():
                deriv = analysis.g_derivative(vals, gs)
                row.append(analysis.locate_transition(deriv, "argmax_abs", gs, median_guard=median_guard))
            else:
                row.append(np.nan)
        row.append(median_guard)
        rows.append(row)
    return header, rows


def cmd_report(args) -> int:
    store, cfg, recs = _load(args.records)
    header, rows = report_rows(cfg, recs, args.median_guard)
    out = Path(args.out or store.dir / "report.csv")
    _write_csv(out, header, rows)
    w = csv.writer(sys.stdout)
    w.writerow(header)
    w.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasesketch", description="Sketch phase diagrams with low-depth VQE.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run or resume a sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--output", help="record directory (overrides output_dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="energy-derivative and order-parameter tables")
    p.add_argument("--records", required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--median-guard", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit", help="exponential fits of E(p) per g")
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("exact", help="exact ground-space references")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="record directory (overrides output_dir)")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("report", help="per-depth transition estimates")
    p.add_argument("--records", required=True)
    p.add_argument("--median-guard", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StoreError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
