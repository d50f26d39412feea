"""Command-line surface: one subcommand per toolkit operation.

All I/O is JSON.  Reports embed the fully resolved configuration and
are written atomically; identical (command, config, seed) runs produce
bitwise-identical files.  Exit codes: 0 computed/certified, 1 usage or
input error, 2 the mathematics said no (inequality violation or refusal
diagnostic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import convext, datum as datum_mod, ift, inputs as inputs_mod, quadrature, scales
from .polynomials import Polynomial

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REFUSED = 2

SEEDED_COMMANDS = {"gaussian-search", "decompose", "verify-step", "ball-check"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read input {path}: {exc}") from exc


def _write_report(path: str | None, report: dict) -> None:
    text = json.dumps(report, sort_keys=True, indent=2)
    if path is None:
        print(text)
        return
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".blt-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def _parse_datum(payload) -> datum_mod.BLDatum:
    try:
        return datum_mod.BLDatum(
            int(payload["d"]),
            [np.asarray(M, dtype=float) for M in payload["maps"]],
            np.asarray(payload["p"], dtype=float),
        )
    except KeyError as exc:
        raise UsageError(f"datum JSON missing field {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid datum: {exc}") from exc


def _parse_grid(payload) -> inputs_mod.GridFunction:
    try:
        values = np.asarray(payload["values"], dtype=float)
        if "shape" in payload:
            values = values.reshape(tuple(int(s) for s in payload["shape"]))  # row-major
        return inputs_mod.GridFunction(
            np.asarray(payload["origin"], dtype=float),
            float(payload["spacing"]),
            values,
        )
    except KeyError as exc:
        raise UsageError(f"grid JSON missing field {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid grid: {exc}") from exc


def _parse_poly(payload, n: int) -> Polynomial:
    return Polynomial.from_terms(n, payload["terms"])


def _parse_map_family(payload) -> scales.NonlinearMapFamily:
    try:
        d = int(payload["d"])
        comps = []
        for row in payload["rows"]:
            poly = Polynomial.linear_form(np.asarray(row["linear"], dtype=float))
            if row.get("terms"):
                poly = poly + _parse_poly(row, d)
            comps.append(poly)
        return scales.NonlinearMapFamily(
            d, comps, float(payload["beta"]), float(payload["kappa"]),
            payload.get("tag", "linear-plus-polynomial-perturbation"),
        )
    except KeyError as exc:
        raise UsageError(f"map JSON missing field {exc}") from exc


def _parse_field(payload) -> ift.ScalarField:
    try:
        n = int(payload["n"])
        poly = _parse_poly(payload, n + 1)
        return ift.ScalarField(n, poly, float(payload["beta"]), float(payload["kappa"]))
    except KeyError as exc:
        raise UsageError(f"field JSON missing field {exc}") from exc


def _parse_surface(payload) -> convext.SurfaceFunction:
    try:
        lo = np.asarray(payload["U"]["lo"], dtype=float)
        hi = np.asarray(payload["U"]["hi"], dtype=float)
        phi = _parse_poly(payload["phi"], lo.size)
        surf = convext.Hypersurface(lo, hi, phi, float(payload["beta"]), float(payload["kappa"]))
        values = _parse_grid(payload["values"]) if payload.get("values") else None
        return convext.SurfaceFunction(surf, values)
    except KeyError as exc:
        raise UsageError(f"surface JSON missing field {exc}") from exc


def _quad_spec(args, d: int | None = None) -> quadrature.QuadratureSpec:
    mode = args.mode
    if mode is None:
        mode = "tensor-midpoint" if (d or 3) <= 3 else "monte-carlo"
    return quadrature.QuadratureSpec(
        mode=mode,
        resolution=args.resolution,
        samples=args.samples,
        seed=args.seed,
    )


def _resolved_config(args) -> dict:
    keys = ("input", "output", "seed", "threads", "samples", "resolution", "tol", "mode")
    config = {k: getattr(args, k, None) for k in keys}
    for extra in ("budget", "beta", "kappa", "alpha0", "alpha1", "d", "m",
                  "freq_halfwidth", "max_cells", "x"):
        if hasattr(args, extra):
            config[extra] = getattr(args, extra)
    return _jsonable(config)


def build_parser() -> Parser:
    parser = Parser(prog="blt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: Parser, needs_input: bool = True) -> None:
        if needs_input:
            p.add_argument("--input", required=True, help="input JSON path")
        p.add_argument("--output", default=None, help="report path (stdout if omitted)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--samples", type=int, default=1_000_000)
        p.add_argument("--resolution", type=int, default=64)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--mode", choices=["tensor-midpoint", "monte-carlo"], default=None)

    common(sub.add_parser("bl-constant"))
    common(sub.add_parser("check-class-c"))
    common(sub.add_parser("reduce"))
    p = sub.add_parser("gaussian-search")
    common(p)
    p.add_argument("--budget", type=int, default=2000)
    common(sub.add_parser("finner-discrete"))
    common(sub.add_parser("extremizer"))
    common(sub.add_parser("ball-check"))
    p = sub.add_parser("delta0")
    common(p, needs_input=False)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--alpha0", type=float, required=True)
    p.add_argument("--alpha1", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int, default=2)
    p = sub.add_parser("decompose")
    common(p)
    p.add_argument("--max-cells", type=int, default=512)
    common(sub.add_parser("verify-step"))
    common(sub.add_parser("verify-nonlinear"))
    p = sub.add_parser("ift-solve")
    common(p)
    p.add_argument("--x", type=str, default=None, help="JSON list overriding the input point")
    common(sub.add_parser("delta-integral"))
    common(sub.add_parser("convolve-surfaces"))
    common(sub.add_parser("extension"))
    p = sub.add_parser("verify-thm74")
    common(p)
    p.add_argument("--freq-halfwidth", type=float, default=40.0)
    return parser


def _resolve_seed(args) -> None:
    if args.seed is None:
        env = os.environ.get("BLT_DEFAULT_SEED")
        if env is not None:
            args.seed = int(env)
    stochastic = args.command in SEEDED_COMMANDS or args.mode == "monte-carlo"
    if stochastic and args.seed is None:
        raise UsageError(
            f"{args.command} is stochastic: provide --seed or set BLT_DEFAULT_SEED"
        )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _resolve_seed(args)
        handler = HANDLERS[args.command]
        result, exit_code = handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = {
        "command": args.command,
        "config": _resolved_config(args),
        "result": _jsonable(result),
    }
    _write_report(args.output, report)
    return exit_code


def cmd_bl_constant(args):
    d = _parse_datum(_load_json(args.input))
    constant = datum_mod.bl_constant_classC(d)
    from .exterior import transversality_quantity

    return {"constant": constant, "transversality": transversality_quantity(d.maps)}, EXIT_OK


def cmd_check_class_c(args):
    d = _parse_datum(_load_json(args.input))
    ok, diag = datum_mod.is_class_C(d)
    return {
        "is_class_c": ok,
        "reason": diag.reason,
        "kernel_dim_sum": diag.kernel_dim_sum,
        "transversality": diag.transversality,
        "exponent_deviation": diag.exponent_deviation,
    }, EXIT_OK


def cmd_reduce(args):
    d = _parse_datum(_load_json(args.input))
    cert = datum_mod.reduce_to_projections(d)
    return {
        "A": cert.A,
        "Cj": cert.Cj,
        "blocks": cert.scheme.blocks,
        "det_A": cert.det_A,
        "det_Cj": cert.det_Cj,
        "projection_residual": cert.max_projection_residual(d),
    }, EXIT_OK


def cmd_gaussian_search(args):
    d = _parse_datum(_load_json(args.input))
    res = datum_mod.search_bl_constant(d, args.budget, args.seed)
    return {
        "estimate": res.estimate,
        "covariances": res.covariances,
        "evaluations": res.evaluations,
    }, EXIT_OK


def cmd_finner_discrete(args):
    payload = _load_json(args.input)
    scheme = datum_mod.ProjectionScheme(int(payload["d"]), [int(s) for s in payload["block_sizes"]])
    arrays = [np.asarray(f, dtype=float) for f in payload["inputs"]]
    lhs, rhs = quadrature.discrete_finner(arrays, scheme)
    tol = args.tol if args.tol is not None else 1e-12
    holds = lhs <= rhs * (1 + tol)
    return {"lhs": lhs, "rhs": rhs, "holds": bool(holds)}, (EXIT_OK if holds else EXIT_REFUSED)


def cmd_extremizer(args):
    d = _parse_datum(_load_json(args.input))
    boxes, ratio = quadrature.canonical_extremizer(d)
    constant = datum_mod.bl_constant_classC(d)
    tol = args.tol if args.tol is not None else 1e-10
    match = abs(ratio - constant) <= tol * max(abs(constant), 1.0)
    return {
        "ratio": ratio,
        "constant": constant,
        "match": bool(match),
        "boxes": [{"matrix": b.matrix, "offset": b.offset} for b in boxes],
    }, (EXIT_OK if match else EXIT_REFUSED)


def cmd_ball_check(args):
    payload = _load_json(args.input)
    d = _parse_datum(payload["datum"])
    f = [_parse_grid(g) for g in payload["f"]]
    if payload.get("fprime") == "extremizer":
        boxes, _ = quadrature.canonical_extremizer(d)
        fprime = [_box_to_grid(b, f[0].spacing) for b in boxes]
    else:
        fprime = [_parse_grid(g) for g in payload["fprime"]]
    xg = payload["x_grid"]
    if isinstance(xg, dict):
        axes = [
            np.asarray(xg["lo"], dtype=float)[a]
            + (np.asarray(xg["hi"], dtype=float)[a] - np.asarray(xg["lo"], dtype=float)[a])
            * np.arange(int(xg["count"]))
            / max(int(xg["count"]) - 1, 1)
            for a in range(d.d)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        x_grid = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        x_grid = np.asarray(xg, dtype=float)
    tol = args.tol if args.tol is not None else 5e-2
    report = quadrature.ball_inequality_report(d, f, fprime, x_grid, _quad_spec(args, d.d), tol)
    code = EXIT_OK if report.flag == "consistent" else EXIT_REFUSED
    return {
        "lhs": report.lhs,
        "sup_term": report.sup_term,
        "conv_term": report.conv_term,
        "slack": report.slack,
        "flag": report.flag,
        "sup_argmax": report.sup_argmax,
        "excluded_grid_points": report.excluded_grid_points,
        "tolerance": tol,
    }, code


def _box_to_grid(box: inputs_mod.BoxIndicator, spacing: float) -> inputs_mod.GridFunction:
    """Grid representation of a box indicator; exact when the box is
    axis-parallel and lattice-aligned (the case for coordinate-projection
    extremizers), cell-sampled otherwise."""
    lo, hi = box.support_box()
    lo_idx = np.floor(lo / spacing)
    hi_idx = np.ceil(hi / spacing)
    shape = tuple(int(h - l) for l, h in zip(lo_idx, hi_idx))
    origin = lo_idx * spacing
    g = inputs_mod.GridFunction(origin, spacing, np.zeros(shape))
    centers = g.cell_centers()
    vals = box.evaluate(centers).reshape(shape)
    return inputs_mod.GridFunction(origin, spacing, vals)


def cmd_delta0(args):
    params = scales.compute_delta0(args.beta, args.kappa, args.alpha0, args.alpha1, args.d, args.m)
    return {
        "beta": params.beta,
        "kappa": params.kappa,
        "alpha0": params.alpha0,
        "alpha1": params.alpha1,
        "d": params.d,
        "m": params.m,
        "c_d": params.c_d,
        "delta0": params.delta0,
    }, EXIT_OK


def _scales_setup(payload, args):
    maps = [_parse_map_family(mp) for mp in payload["maps"]]
    params_payload = payload["params"]
    params = scales.compute_delta0(
        float(params_payload["beta"]),
        float(params_payload["kappa"]),
        float(params_payload["alpha0"]),
        float(params_payload["alpha1"]),
        maps[0].d,
        len(maps),
        params_payload.get("M"),
    )
    cube_payload = payload.get("cube", {})
    center = np.asarray(cube_payload.get("center", [0.0] * maps[0].d), dtype=float)
    side = float(cube_payload.get("side", params.delta0))
    cube = scales.Cube(center, side)
    inputs_list = [_parse_grid(g) for g in payload["inputs"]]
    return maps, params, cube, inputs_list


def cmd_decompose(args):
    payload = _load_json(args.input)
    maps, params, cube, inputs_list = _scales_setup(payload, args)
    scheme = datum_mod.ProjectionScheme(cube.d, [cube.d - fam.d_out for fam in maps])
    sigma = scales.sigma_map(scheme)
    frame = scales.build_frame(maps, cube.center, scheme)
    sequences = [
        scales.pigeonhole_sequences(
            inputs_list[int(sigma[i])], cube, i, frame, sigma, params, maps[int(sigma[i])]
        )
        for i in range(cube.d)
    ]
    deco = scales.decompose_cube(cube, frame, sigma, sequences, params)
    cells = []
    total = 1
    for i in range(cube.d):
        total *= 2 * deco.main_count(i)
    count = 0
    for code_idx in range(2**cube.d):
        chi = np.array([(code_idx >> i) & 1 for i in range(cube.d)], dtype=np.int8)
        shape = tuple(deco.main_count(i) for i in range(cube.d))
        for n in np.ndindex(shape):
            if count >= args.max_cells:
                break
            bounds = [deco.interval_bounds(i, n[i], int(chi[i])) for i in range(cube.d)]
            cells.append(
                {
                    "n": list(n),
                    "chi": chi,
                    "slab_bounds": bounds,
                    "volume_estimate": deco.cell_volume_estimate(np.asarray(n), chi),
                }
            )
            count += 1
        if count >= args.max_cells:
            break
    result = {
        "frame": frame.a,
        "normals": frame.v,
        "sigma": sigma,
        "delta": cube.side,
        "delta0": params.delta0,
        "sequences": [
            {
                "axis": seq.axis,
                "map": seq.map_index,
                "s": seq.s,
                "certificates": [
                    {
                        "n": st.n,
                        "s_next": st.s_next,
                        "gap_ok": st.gap_lower_ok and st.gap_upper_ok,
                        "selected_mass": st.selected_mass,
                        "window_mass": st.window_mass,
                        "mass_bound_ok": st.mass_bound_ok,
                    }
                    for st in seq.steps
                ],
            }
            for seq in sequences
        ],
        "cell_count_total": total,
        "cells_listed": len(cells),
        "cells": cells,
    }
    ok = all(seq.certificates_hold() for seq in sequences)
    return result, (EXIT_OK if ok else EXIT_REFUSED)


def _params_block(params: scales.ScaleParams) -> dict:
    return {
        "beta": params.beta,
        "kappa": params.kappa,
        "alpha0": params.alpha0,
        "alpha1": params.alpha1,
        "c_d": params.c_d,
        "delta0": params.delta0,
        "M": params.M,
    }


def cmd_verify_step(args):
    payload = _load_json(args.input)
    maps, params, cube, inputs_list = _scales_setup(payload, args)
    spec = _quad_spec(args, cube.d)
    report = scales.verify_induction_step(maps, cube, inputs_list, params, spec, args.seed or 0)
    ok = report.finner_ok and report.buffer_bounds_ok and report.pigeonhole_ok
    return {
        "params": _params_block(params),
        "delta": report.delta,
        "lhs": report.lhs,
        "main_sum": report.main_sum,
        "finner_rhs": report.finner_rhs,
        "input_rhs": report.input_rhs,
        "main_fraction": report.main_fraction,
        "buffer_totals": {str(k): v for k, v in report.buffer_totals.items()},
        "certified_factor": report.certified_factor,
        "factor_bound": report.factor_bound,
        "finner_ok": report.finner_ok,
        "buffer_bounds_ok": report.buffer_bounds_ok,
        "pigeonhole_ok": report.pigeonhole_ok,
    }, (EXIT_OK if ok else EXIT_REFUSED)


def cmd_verify_nonlinear(args):
    payload = _load_json(args.input)
    maps, params, cube, inputs_list = _scales_setup(payload, args)
    spec = _quad_spec(args, cube.d)
    x0 = np.asarray(payload.get("x0", [0.0] * maps[0].d), dtype=float)
    report = scales.verify_nonlinear_bl(maps, x0, inputs_list, params, spec)
    return {
        "params": _params_block(params),
        "ratio": report.ratio,
        "log_ratio": report.log_ratio,
        "log_bound": report.log_bound,
        "bound": report.bound,
        "margin_log": report.margin_log,
        "delta0": report.delta0,
        "holds": report.holds,
    }, (EXIT_OK if report.holds else EXIT_REFUSED)


def cmd_ift_solve(args):
    payload = _load_json(args.input)
    field = _parse_field(payload)
    if args.x is not None:
        x = np.asarray(json.loads(args.x), dtype=float)
    else:
        x = np.asarray(payload["x"], dtype=float)
    x = np.atleast_2d(x)
    tol = args.tol if args.tol is not None else 1e-12
    sol = ift.solve_eta(field, x, tol=tol)
    grad = ift.eta_gradient(field, x, sol.eta, tol=tol)
    return {
        "x": x,
        "eta": sol.eta,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "iteration_cap": sol.iteration_cap,
        "max_contraction_ratio": sol.max_ratio,
        "gradient": grad,
    }, EXIT_OK


def cmd_delta_integral(args):
    payload = _load_json(args.input)
    field = _parse_field(payload["field"])
    window = None
    if payload.get("window"):
        window = (
            np.asarray(payload["window"]["lo"], dtype=float),
            np.asarray(payload["window"]["hi"], dtype=float),
        )
    integrand_payload = payload.get("integrand", "one")
    if integrand_payload == "one":
        integrand = lambda U: np.ones(U.shape[0])  # noqa: E731
    else:
        lo = np.asarray(integrand_payload["lo"], dtype=float)
        hi = np.asarray(integrand_payload["hi"], dtype=float)

        def integrand(U, lo=lo, hi=hi):
            return np.all((U >= lo) & (U <= hi), axis=1).astype(float)

    value, err = convext.delta_integral(field, integrand, window, _quad_spec(args, field.n))
    return {"value": value, "error_estimate": err}, EXIT_OK


def cmd_convolve_surfaces(args):
    payload = _load_json(args.input)
    sfuncs = [_parse_surface(s) for s in payload["surfaces"]]
    y = np.asarray(payload["y"], dtype=float)
    value, err = convext.surface_convolution(sfuncs, y, _quad_spec(args, len(sfuncs) - 1))
    return {"value": value, "error_estimate": err}, EXIT_OK


def cmd_extension(args):
    payload = _load_json(args.input)
    sf = _parse_surface(payload["surface"] if "surface" in payload else payload)
    xi = np.asarray(payload["xi"], dtype=float)
    value = convext.extension_operator(sf.surface, sf.values, xi, max_resolution=args.resolution)
    return {"real": value.real, "imag": value.imag}, EXIT_OK


def cmd_verify_thm74(args):
    payload = _load_json(args.input)
    sfuncs = [_parse_surface(s) for s in payload["surfaces"]]
    report = convext.verify_thm74(
        sfuncs, args.freq_halfwidth, args.resolution, _quad_spec(args, len(sfuncs))
    )
    return {
        "lhs": report.lhs,
        "conv_route": report.conv_route,
        "bridge_error": report.bridge_error,
        "ratio": report.ratio,
        "input_norms": report.input_norms,
        "frequency_halfwidth": report.frequency_halfwidth,
        "resolution": report.resolution,
        "constant": report.constant,
        "refusal": report.refusal,
    }, (EXIT_REFUSED if report.refusal else EXIT_OK)


HANDLERS = {
    "bl-constant": cmd_bl_constant,
    "check-class-c": cmd_check_class_c,
    "reduce": cmd_reduce,
    "gaussian-search": cmd_gaussian_search,
    "finner-discrete": cmd_finner_discrete,
    "extremizer": cmd_extremizer,
    "ball-check": cmd_ball_check,
    "delta0": cmd_delta0,
    "decompose": cmd_decompose,
    "verify-step": cmd_verify_step,
    "verify-nonlinear": cmd_verify_nonlinear,
    "ift-solve": cmd_ift_solve,
    "delta-integral": cmd_delta_integral,
    "convolve-surfaces": cmd_convolve_surfaces,
    "extension": cmd_extension,
    "verify-thm74": cmd_verify_thm74,
}


if __name__ == "__main__":
    sys.exit(main())
