"""Command-line entry point: gen, solve, bench and plot."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import problems
from .ghost import BOUNDED, HEURISTIC, INFEASIBLE, OPTIMAL, TIME_LIMIT, Solution
from .model import InstanceFormatError, load_instance, save_instance

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_TIME_LIMIT = 4

ALGOS = ("ghost", "eps-ghost", "ecg", "greedy", "oracle")
SIZE_RANGE = {"point": problems.POINT_SIZES, "linear": problems.EDGE_SIZES, "bezier": problems.EDGE_SIZES}
SUMMARY_FIELDS = [
    "instance",
    "family",
    "size",
    "seed",
    "algo",
    "epsilon",
    "status",
    "cost",
    "runtime",
    "rho",
    "lb_star",
    "tours_explored",
    "paths_unfolded",
    "conic_solves",
    "cache_hits",
    "rtsp_solves",
    "error",
]
BEZIER_SAMPLES = 48


class UsageError(Exception):
    pass


def exit_code(status: str) -> int:
    if status in (OPTIMAL, BOUNDED, HEURISTIC):
        return EXIT_OK
    if status == INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_TIME_LIMIT


# --- gen ----------------------------------------------------------------------


def make_instance(family: str, size: int, seed: int, continuity: int = 0):
    if family not in SIZE_RANGE:
        raise UsageError(f"unknown family {family!r}")
    lo, hi = SIZE_RANGE[family]
    if not lo <= size <= hi:
        raise UsageError(f"--size for {family} must lie in [{lo}, {hi}]")
    if continuity not in (0, 1):
        raise UsageError("--continuity must be 0 or 1")
    try:
        return problems.generate(family, size, seed, continuity)
    except (ValueError, problems.GenerationError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_gen(args) -> int:
    inst = make_instance(args.family, args.size, args.seed, args.continuity)
    if args.out:
        save_instance(inst, args.out)
    else:
        from .model import serialize_instance

        sys.stdout.write(serialize_instance(inst) + "\n")
    return EXIT_OK


# --- solve --------------------------------------------------------------------


def run_algo(instance, algo: str, epsilon: float = 0.0, time_limit: float | None = 100.0, on_event=None) -> Solution:
    if algo not in ALGOS:
        raise UsageError(f"unknown algorithm {algo!r}")
    if algo in ("ghost", "eps-ghost"):
        from .ghost import solve

        eps = 0.0 if algo == "ghost" else epsilon
        if not 0.0 <= eps < 1.0:
            raise UsageError("--epsilon must lie in [0, 1)")
        return solve(instance, epsilon=eps, time_limit=time_limit, on_event=on_event)
    if algo == "ecg":
        from .baselines import solve_ecg

        return solve_ecg(instance, time_limit)
    if algo == "greedy":
        from .baselines import solve_greedy

        return solve_greedy(instance, time_limit)
    from .oracle import OracleIncomplete, brute_force

    try:
        return brute_force(instance, time_limit=time_limit)
    except OracleIncomplete as exc:
        return Solution(TIME_LIMIT, math.inf, None, None, stats={"error": str(exc)})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load(path):
    try:
        return load_instance(path)
    except (OSError, InstanceFormatError, ValueError) as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from exc


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    if args.time_limit is not None and args.time_limit < 0:
        raise UsageError("--time-limit must be non-negative")
    log = open(args.log, "w") if args.log else None
    try:
        on_event = (lambda ev: log.write(json.dumps(ev) + "\n")) if log else None
        sol = run_algo(inst, args.algo, args.epsilon, args.time_limit, on_event)
    finally:
        if log:
            log.close()
    text = sol.to_json(inst)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return exit_code(sol.status)


# --- bench --------------------------------------------------------------------


def read_manifest(path) -> list[dict]:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        rows = list(csv.DictReader(text.splitlines()))
    else:
        doc = json.loads(text)
        rows = doc["cells"] if isinstance(doc, dict) else doc
    cells = []
    for i, row in enumerate(rows):
        try:
            cells.append(
                {
                    "family": str(row["family"]),
                    "size": int(row["size"]),
                    "seed": int(row["seed"]),
                    "algo": str(row.get("algo") or "ghost"),
                    "epsilon": float(row.get("epsilon") or 0.0),
                    "continuity": int(row.get("continuity") or 0),
                    "time_limit": float(row.get("time_limit") or 100.0),
                }
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"manifest row {i}: {exc}") from exc
    return cells


def _cell_name(cell: dict) -> str:
    fam = cell["family"] + (str(cell["continuity"]) if cell["family"] == "bezier" else "")
    return f"{fam}-{cell['size']}-s{cell['seed']}"


def run_cell(cell: dict, out_dir: str) -> dict:
    name = _cell_name(cell)
    row = {k: "" for k in SUMMARY_FIELDS}
    row.update(instance=name, family=cell["family"], size=cell["size"], seed=cell["seed"], algo=cell["algo"], epsilon=cell["epsilon"])
    target = Path(out_dir) / f"{name}_{cell['algo']}_eps{cell['epsilon']:g}.json"
    try:
        inst = make_instance(cell["family"], cell["size"], cell["seed"], cell["continuity"])
        sol = run_algo(inst, cell["algo"], cell["epsilon"], cell["time_limit"])
        doc = sol.to_dict(inst)
    except Exception as exc:  # recorded per cell
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        target.write_text(json.dumps({"status": "error", "error": row["error"], "cell": cell}, indent=1) + "\n")
        return row
    doc["cell"] = cell
    target.write_text(json.dumps(doc, indent=1) + "\n")
    stats = doc["stats"]
    row.update(
        status=doc["status"],
        cost=doc["cost"] if doc["cost"] is not None else "inf",
        runtime=round(stats.get("wall_time_s") or 0.0, 3),
        rho=doc["rho"] if doc["rho"] is not None else "",
        lb_star=doc["lb_star"] if doc["lb_star"] is not None else "",
    )
    for key in ("tours_explored", "paths_unfolded", "conic_solves", "cache_hits", "rtsp_solves"):
        row[key] = stats.get(key, "")
    return row


def worker_cap(requested: int) -> int:
    cap = os.environ.get("GCS_TSP_SOLVER_THREADS")
    k = max(1, requested)
    if cap:
        try:
            k = min(k, max(1, int(cap)))
        except ValueError:
            pass
    return k


def cmd_bench(args) -> int:
    cells = read_manifest(args.manifest)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = worker_cap(args.parallel)
    if k == 1:
        rows = [run_cell(c, str(out)) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=k) as pool:
            rows = list(pool.map(run_cell, cells, [str(out)] * len(cells)))
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        wr.writeheader()
        wr.writerows(rows)
    failed = [r for r in rows if r["status"] == "error"]
    for r in failed:
        print(f"cell {r['instance']} ({r['algo']}): {r['error']}", file=sys.stderr)
    return EXIT_OK if not failed else 1


# --- plot ---------------------------------------------------------------------


def _polyline(points, cls: str, closed: bool = False) -> str:
    pts = " ".join(f"{x:.4f},{y:.4f}" for x, y in points)
    return f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{"#c0392b" if cls != "piece" else "#2c3e50"}" stroke-width="0.04"/>'


def trajectory_curves(instance, result: dict) -> list[np.ndarray]:
    """2D curves to draw for a result; raises UsageError on shape mismatch."""
    family = instance.meta.get("family")
    path = result.get("path") or []
    traj = [np.asarray(x, float) for x in result.get("trajectory") or []]
    if len(traj) != len(path):
        raise UsageError("result trajectory does not match its path")
    for vid, x in zip(path, traj):
        if vid not in instance.index or x.shape != (instance.vertices[vid].dim,):
            raise UsageError(f"dimension mismatch for vertex {vid}")
    if not traj:
        return []
    if family == "bezier":
        s = np.linspace(0.0, 1.0, BEZIER_SAMPLES)
        pieces = []
        for x in traj[:-1]:
            ctrl, _ = problems.bezier_pieces(x)
            pieces.append(problems.bezier_curve(ctrl, s))
        return pieces
    if family == "linear":
        pts = []
        for x in traj[:-1]:
            pts += [x[:2], x[2:4]]
        pts.append(traj[-1][:2])
        return [np.array(pts)]
    return [np.array([x[:2] for x in traj])]


def render_svg(instance, result: dict | None = None) -> str:
    family = instance.meta.get("family")
    regions = instance.meta.get("regions")
    if regions is None and any(v.dim != 2 for v in instance.vlist):
        raise UsageError("not plottable: no 2D layout metadata and vertices are not 2D")
    grid = int(instance.meta.get("grid", 0) or 0)
    body = []
    xs, ys = [], []
    if grid:
        for i in range(grid):
            body.append(f'<line class="grid" x1="{i}" y1="0" x2="{i}" y2="{grid - 1}" stroke="#ddd" stroke-width="0.02"/>')
            body.append(f'<line class="grid" x1="0" y1="{i}" x2="{grid - 1}" y2="{i}" stroke="#ddd" stroke-width="0.02"/>')
        xs += [0, grid - 1]
        ys += [0, grid - 1]
    if regions is not None:
        for vid in instance.ids:
            x0, y0, x1, y1 = regions[vid]
            body.append(
                f'<rect class="region" x="{x0:.4f}" y="{y0:.4f}" width="{x1 - x0:.4f}" height="{y1 - y0:.4f}" '
                f'fill="#3498db" fill-opacity="0.15" stroke="#2980b9" stroke-width="0.02"><title>{vid}</title></rect>'
            )
            xs += [x0, x1]
            ys += [y0, y1]
    else:
        for vid in instance.ids:
            p = _vertex_point(instance.vertices[vid])
            body.append(f'<circle class="marker" cx="{p[0]:.4f}" cy="{p[1]:.4f}" r="0.08" fill="#2c3e50"><title>{vid}</title></circle>')
            xs.append(p[0])
            ys.append(p[1])
    if result is not None:
        curves = trajectory_curves(instance, result)
        cls = "piece" if family == "bezier" else "trajectory"
        for c in curves:
            body.append(_polyline(c, cls))
            xs += list(c[:, 0])
            ys += list(c[:, 1])
    pad = 0.5
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    w, h = x1 - x0, y1 - y0
    scale = 100.0
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w * scale:.0f}" height="{h * scale:.0f}" '
        f'viewBox="{x0:.4f} {y0:.4f} {w:.4f} {h:.4f}">\n'
        f"<title>{instance.name or 'instance'}</title>\n"
        # flip y so the grid reads like a plot
        f'<g transform="translate(0,{y0 + y1:.4f}) scale(1,-1)">\n'
    )
    return head + "\n".join(body) + "\n</g>\n</svg>\n"


def _vertex_point(vert) -> np.ndarray:
    from .conic import chebyshev_center

    c, _ = chebyshev_center(vert.set)
    return np.asarray(c, float)[:2]


def cmd_plot(args) -> int:
    inst = _load(args.instance)
    result = None
    if args.result:
        try:
            result = json.loads(Path(args.result).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read result {args.result}: {exc}") from exc
    svg = render_svg(inst, result)
    Path(args.out).write_text(svg)
    return EXIT_OK


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gcs-tsp", description="Tours over graphs of convex sets.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a seeded instance")
    g.add_argument("--family", required=True, choices=sorted(SIZE_RANGE))
    g.add_argument("--size", required=True, type=int, help="N for point, M (edges) for linear/bezier")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--continuity", type=int, default=0, choices=(0, 1))
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("--instance", required=True)
    s.add_argument("--algo", default="ghost", choices=ALGOS)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--time-limit", type=float, default=100.0)
    s.add_argument("--out")
    s.add_argument("--log", help="JSON-lines event log")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a manifest of cells")
    b.add_argument("--manifest", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--parallel", type=int, default=1)
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render an instance and result as SVG")
    p.add_argument("--instance", required=True)
    p.add_argument("--result")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{ap.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
