"""Command-line driver: `fvvem run ...` and `fvvem study ...`.

Exit codes: 0 on success (gates pass), 2 on an acceptance-gate failure,
1 on any error.  A config file with `key = value` lines supplies the same
options; command-line flags override the file.
"""

from __future__ import annotations

import argparse
import sys

from . import cases as case_lib
from .runner import convergence_study, run_case


def _parse_config_file(path: str) -> dict:
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _parse_mesh_arg(arg: str):
    """`file.msh` or `gen:h=0.2,seed=3`."""
    if arg is None:
        return None, {}
    if arg.startswith("gen:"):
        opts = {}
        for part in arg[4:].split(","):
            if not part:
                continue
            key, val = part.split("=", 1)
            opts[key.strip()] = float(val) if key.strip() != "seed" else int(val)
        return None, opts
    return arg, {}


def _coerce(val: str):
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            pass
    if val in ("true", "True"):
        return True
    if val in ("false", "False"):
        return False
    return val


def _build_case(args, overrides):
    params = {}
    for spec in args.param or []:
        key, val = spec.split("=", 1)
        params[key] = _coerce(val)
    mesh_file, gen = _parse_mesh_arg(args.mesh)
    if "h" in gen:
        params["h"] = gen["h"]
    if "seed" in gen:
        params["seed"] = int(gen["seed"])
    if "n" in gen:
        params["n_cells"] = int(gen["n"])
    for key in ("order", "scheme", "cfl", "tend", "dt"):
        val = getattr(args, key, None)
        if val is None and key in overrides:
            val = _coerce(overrides[key])
        if val is not None:
            params[{"order": "k", "tend": "t_end"}.get(key, key)] = val
    case = case_lib.get_case(args.case, **params)
    return case, mesh_file


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fvvem",
                                     description="Hybrid FV/VEM incompressible-flow solver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--case", required=True, choices=case_lib.case_names())
        p.add_argument("--mesh", help="mesh file or gen:h=H,seed=S[,n=N]")
        p.add_argument("--order", type=int, help="polynomial degree k (1..4)")
        p.add_argument("--scheme", choices=("SP111", "LSDIRK222", "SADIRK343"))
        p.add_argument("--cfl", type=float)
        p.add_argument("--tend", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--out", help="output path prefix (VTK/CSV/ledger)")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--param", action="append",
                       help="case parameter override, e.g. --param H0=1000")

    run_p = sub.add_parser("run", help="run a single case")
    common(run_p)
    study_p = sub.add_parser("study", help="convergence study over meshes")
    common(study_p)
    study_p.add_argument("--meshes", required=True,
                         help="comma-separated target h values")

    args = parser.parse_args(argv)
    overrides = _parse_config_file(args.config) if args.config else {}
    for key, val in overrides.items():
        if hasattr(args, key) and getattr(args, key) in (None, False):
            setattr(args, key, _coerce(val))

    try:
        if args.command == "run":
            case, mesh_file = _build_case(args, overrides)
            result = run_case(case, out_prefix=args.out, quiet=args.quiet,
                              mesh_file=mesh_file)
            return 0 if result.gate_passed else 2
        hs = [float(s) for s in args.meshes.split(",")]

        def factory(h):
            args.mesh = f"gen:h={h}"
            case, _ = _build_case(args, overrides)
            return case

        convergence_study(factory, hs, out_prefix=args.out, quiet=args.quiet)
        return 0
    except Exception as exc:                      # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
