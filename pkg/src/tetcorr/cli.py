"""Batch command-line front-end.

Subcommands: ``map`` (solve a correspondence), ``analyze-energies``
(classify the energy catalog), ``metrics`` (score an existing map), and
``push-forward`` (transport geometry or pull back a vertex field).

Exit codes: 0 success, 1 input/usage error, 2 solver failure. Outputs are
deterministic for fixed inputs, seed, and thread count; timing information
is written to a separate sidecar so reports are byte-identical across
reruns.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import io as tio
from .energies import ENERGY_NAMES, check_symmetry_condition, classify_energy
from .mapping import init_from_landmarks, init_from_surface_map
from .mesh import TetMesh
from .metrics import (compute_map_metrics, normalized_jacobian_det,
                      per_tet_distortion)
from .objective import PairObjective
from .solver import SolverConfig, StageToggles, closest_point_init, solve
from .transfer import EmbeddedGeometry, pull_back_field, push_forward

# Aliases for the energies as named in the collapse experiment: the "s"
# variants arise from summing the raw energy over both map directions.
_ENERGY_ALIASES = {"sarap": "arap", "sdirichlet": "dirichlet",
                   "sdirichlet3": "dirichlet3"}
_SOLVER_ENERGIES = ("arap", "sdirichlet", "sdirichlet3",
                    "dirichlet", "dirichlet3")


class CliError(ValueError):
    """Usage or input error (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _build_parser():
    top = _Parser(prog="tetcorr", description=__doc__.splitlines()[0])
    top.add_argument("--threads", type=int, default=None,
                     help="worker thread count for parallel kernels")
    top.add_argument("--seed", type=int, default=0,
                     help="random seed (multi-start energy analysis)")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", parents=[], help="solve a correspondence")
    p.add_argument("--source", required=True, help="source tet mesh (.node/.ele or .mesh)")
    p.add_argument("--target", required=True, help="target tet mesh")
    p.add_argument("--landmarks", help="paired landmark file")
    p.add_argument("--surface-map", help="boundary vertex map file")
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--beta-start", type=float, default=None)
    p.add_argument("--beta-end", type=float, default=None)
    p.add_argument("--beta-ramp", type=int, default=None,
                   help="iterations over which the coupling weight ramps")
    p.add_argument("--max-outer", type=int, default=None)
    p.add_argument("--energy", choices=_SOLVER_ENERGIES, default=None)
    p.add_argument("--hard-boundary", action="store_true", default=None)
    p.add_argument("--no-repair", action="store_true",
                   help="disable both repair stages")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("analyze-energies", help="classify the energy catalog")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--symmetry-samples", type=int, default=10_000)

    p = sub.add_parser("metrics", help="score an existing map")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--x12", required=True, help="vertex-image table (source direction)")
    p.add_argument("--x21", help="vertex-image table (target direction)")
    p.add_argument("--p12", help="barycentric table (source direction)")
    p.add_argument("--p21", help="barycentric table (target direction)")
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("push-forward", help="transport geometry through a map")
    p.add_argument("--source", required=True, help="source tet mesh")
    p.add_argument("--x12", required=True, help="vertex-image table for the map")
    p.add_argument("--geometry", help="OBJ points/polylines/faces or a tet mesh")
    p.add_argument("--field", help="CSV vertex field to pull back instead")
    p.add_argument("--p12", help="barycentric table (required with --field)")
    p.add_argument("--target", help="target mesh (required with --field)")
    p.add_argument("--out", required=True)
    return top


def _load(flag, path, loader):
    if path is None:
        raise CliError(f"--{flag} is required here")
    try:
        return loader(path)
    except OSError as e:
        raise CliError(f"--{flag}: cannot read '{path}': {e.strerror or e}") from e
    except ValueError as e:
        raise CliError(f"--{flag}: {e}") from e


def _read_config_file(path):
    """Parse a key=value config file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            body = raw.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in body.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _coerce(key, val, target_type):
    try:
        if target_type is bool:
            if str(val).lower() in ("true", "1", "yes"):
                return True
            if str(val).lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {val}")
        return target_type(val)
    except (TypeError, ValueError) as e:
        raise CliError(f"config key '{key}': {e}") from e


def _solver_config(args):
    """SolverConfig from defaults <- config file <- explicit flags."""
    base = {
        "alpha": 0.5, "gamma": 25.0, "beta_start": 0.25, "beta_end": 5.0,
        "beta_ramp": 20, "max_outer": 50, "energy": "arap",
        "hard_boundary": False,
    }
    types = {k: type(v) for k, v in base.items()}
    if args.config:
        file_vals = _load("config", args.config, _read_config_file)
        for key, val in file_vals.items():
            if key not in base:
                raise CliError(f"config key '{key}' is not a solver setting")
            base[key] = _coerce(key, val, types[key])
    for key in list(base):
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            base[key] = flag_val
    energy = _ENERGY_ALIASES.get(base["energy"], base["energy"])
    toggles = StageToggles()
    if args.no_repair:
        toggles.repair = False
        toggles.post_repair = False
    try:
        return SolverConfig(
            energy=energy, alpha=base["alpha"], gamma=base["gamma"],
            beta_start=base["beta_start"], beta_end=base["beta_end"],
            beta_ramp_iters=base["beta_ramp"], max_outer_iters=base["max_outer"],
            hard_boundary=base["hard_boundary"], stages=toggles,
        )
    except ValueError as e:
        raise CliError(str(e)) from e


def _cmd_map(args):
    m1 = _load("source", args.source, tio.read_mesh).normalized()
    m2 = _load("target", args.target, tio.read_mesh).normalized()
    config = _solver_config(args)
    if args.landmarks and args.surface_map:
        raise CliError("--landmarks and --surface-map are mutually exclusive")
    if args.landmarks:
        pairs = _load("landmarks", args.landmarks, tio.read_landmarks)
        init = init_from_landmarks(m1, m2, pairs)
    elif args.surface_map:
        smap = _load("surface-map", args.surface_map, tio.read_surface_map)
        init = init_from_surface_map(m1, m2, smap)
    else:
        init = closest_point_init(m1, m2)

    t0 = time.perf_counter()
    try:
        pair, report = solve(m1, m2, init, config)
    except (RuntimeError, FloatingPointError) as e:
        raise RuntimeError(f"solve failed: {e}") from e
    elapsed = time.perf_counter() - t0

    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    tio.write_bary_table(pair.p12.tet_ids, pair.p12.weights, os.path.join(out, "p12.txt"))
    tio.write_bary_table(pair.p21.tet_ids, pair.p21.weights, os.path.join(out, "p21.txt"))
    tio.write_point_table(pair.x12, os.path.join(out, "x12.txt"))
    tio.write_point_table(pair.x21, os.path.join(out, "x21.txt"))
    for name, src, x in (("12", m1, pair.x12), ("21", m2, pair.x21)):
        dist = per_tet_distortion(src, x)
        det_hat, _, _ = normalized_jacobian_det(src, x)
        rows = np.column_stack([np.arange(src.n_tets), dist, det_hat])
        tio.write_csv(os.path.join(out, f"distortion_{name}.csv"), rows,
                      header=["tet_id", "distortion", "det_j_hat"])
    tio.write_json(os.path.join(out, "report.json"), report.to_dict())
    tio.write_json(os.path.join(out, "timing.json"),
                   {"wall_time_s": elapsed, "solver_wall_time_s": report.wall_time_s})
    print(f"wrote map artifacts to {out}")
    return 0


def _cmd_analyze_energies(args):
    energies = {}
    for name in ENERGY_NAMES:
        props = classify_energy(name, rng=np.random.default_rng(args.seed))
        sym = check_symmetry_condition(
            name, n_samples=args.symmetry_samples,
            rng=np.random.default_rng(args.seed), which="f_sym",
        )
        raw = check_symmetry_condition(
            name, n_samples=args.symmetry_samples,
            rng=np.random.default_rng(args.seed), which="f",
        )
        energies[name] = {
            "favors_isometry": props.favors_isometry,
            "preserves_structure": props.preserves_structure,
            "nonsingular": props.nonsingular,
            "sigma_min": list(props.sigma_min),
            "symmetry_violation": sym,
            "symmetry_violation_raw": raw,
        }
    tio.write_json(args.out, {"seed": args.seed, "energies": energies})
    print(f"wrote energy analysis for {len(energies)} energies to {args.out}")
    return 0


def _cmd_metrics(args):
    """Score one or both directions; energy terms need the full map state."""
    m1 = _load("source", args.source, tio.read_mesh).normalized()
    m2 = _load("target", args.target, tio.read_mesh).normalized()
    x12 = _load("x12", args.x12, tio.read_point_table)
    x21 = _load("x21", args.x21, tio.read_point_table) if args.x21 else None
    payload = {}
    terms = (None, None)
    have_pair = x21 is not None and args.p12 and args.p21
    if have_pair:
        from .mapping import BarycentricMap, MapPair
        from .objective import ObjectiveWeights

        p12 = BarycentricMap(*_load("p12", args.p12, tio.read_bary_table))
        p21 = BarycentricMap(*_load("p21", args.p21, tio.read_bary_table))
        pair = MapPair(p12, p21, x12, x21)
        bd = PairObjective(m1, m2).breakdown(pair, ObjectiveWeights())
        payload["breakdown"] = bd.to_dict()
        terms = bd.directions

    def _one(src, dst, x, t):
        mm = compute_map_metrics(
            src, dst, x,
            t["arap"] if t else float("nan"), t["r"] if t else float("nan"),
        ).to_dict()
        if t is None:
            mm["e_arap"] = None
            mm["e_r"] = None
        return mm

    payload["d12"] = _one(m1, m2, x12, terms[0])
    if x21 is not None:
        payload["d21"] = _one(m2, m1, x21, terms[1])
    tio.write_json(args.out, payload)
    print(f"wrote metrics to {args.out}")
    return 0


def _read_geometry(path):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        verts, lines, faces = tio.read_obj(path)
        if len(lines):
            return EmbeddedGeometry("polylines", verts, lines), ("obj", faces)
        if len(faces):
            return EmbeddedGeometry("indexed-mesh", verts, faces), ("obj", faces)
        return EmbeddedGeometry("points", verts), ("obj", faces)
    mesh = tio.read_mesh(path)
    return EmbeddedGeometry("indexed-mesh", mesh.vertices, mesh.tets), ("mesh", None)


def _cmd_push_forward(args):
    raw_src = _load("source", args.source, tio.read_mesh)
    scale = raw_src.total_volume ** (-1.0 / 3.0)
    src = raw_src.normalized()
    x12 = _load("x12", args.x12, tio.read_point_table)
    if x12.shape != (src.n_vertices, 3):
        raise CliError(
            f"--x12: table has {x12.shape[0]} rows, mesh has {src.n_vertices} vertices"
        )
    if args.field:
        if not (args.p12 and args.target):
            raise CliError("--field needs --p12 and --target")
        from .mapping import BarycentricMap

        target = _load("target", args.target, tio.read_mesh).normalized()
        p12 = BarycentricMap(*_load("p12", args.p12, tio.read_bary_table))
        with open(args.field) as fh:
            rows = [ln.strip() for ln in fh if ln.strip()]
        start = 1 if rows and any(c.isalpha() for c in rows[0]) else 0
        field = np.array(
            [[float(x) for x in r.split(",")] for r in rows[start:]], dtype=np.float64
        )
        pulled = pull_back_field(field, p12, target)
        tio.write_csv(args.out, pulled.reshape(len(pulled), -1))
        print(f"wrote pulled-back field to {args.out}")
        return 0
    if not args.geometry:
        raise CliError("push-forward needs --geometry (or --field)")
    geom, (fmt, faces) = _load("geometry", args.geometry, _read_geometry)
    # The x table lives in the unit-volume frame, so bring the geometry
    # (given in original source coordinates) into that frame first; outputs
    # stay in the table's frame, consistent with the other map artifacts.
    geom = EmbeddedGeometry(geom.kind, geom.points * scale, geom.connectivity)
    mapped, skipped = push_forward(geom, src, x12)
    if len(skipped):
        print(
            f"warning: {len(skipped)} points outside the source volume were "
            f"transported from their nearest boundary point",
            file=sys.stderr,
        )
    ext = os.path.splitext(args.out)[1].lower()
    if ext == ".obj":
        lines = mapped.connectivity if mapped.kind == "polylines" else ()
        tri = faces if faces is not None and len(faces) else ()
        tio.write_obj(args.out, mapped.points, lines=lines, faces=tri)
    elif ext in (".node", ".ele", ".mesh") and mapped.kind == "indexed-mesh":
        tio.write_mesh(TetMesh(mapped.points, mapped.connectivity,
                               fix_orientation=False), args.out)
    else:
        tio.write_point_table(mapped.points, args.out)
    print(f"wrote transported geometry to {args.out}")
    return 0


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise CliError("--threads must be >= 1")
            import numba

            numba.set_num_threads(args.threads)
        if args.command == "map":
            return _cmd_map(args)
        if args.command == "analyze-energies":
            return _cmd_analyze_energies(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "push-forward":
            return _cmd_push_forward(args)
        raise CliError(f"unknown command {args.command}")
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RuntimeError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
