"""
cs-lab: command-line driver.

    cs-lab coherence   --config cfg.json [--dump-section]
    cs-lab balancing   --config cfg.json [--theta-target 0.9]
    cs-lab ripl        --config cfg.json
    cs-lab allocate    --config cfg.json [--delta D --eps E --c-univ C]
    cs-lab reconstruct --config cfg.json [--mode infinite|finite|series]
    cs-lab filters     [--out DIR]

Every command writes its artifacts and a manifest.json below the output
directory. Exit codes: 0 success, 2 validation, 3 resource or cap, 4 no convergence.
"""

import argparse
import logging
import math
import sys

import numpy as np

import cslab.file
import cslab.log
import cslab.manifest
import cslab.plot
from cslab.basis import assemble_section, coherence_section, write_section_csv
from cslab.config import FLAG_KEYS, ExperimentConfig, load_config
from cslab.errors import (
    EXIT_OK,
    ConvergenceError,
    CsLabException,
    EnumerationCapError,
    ScanCapError,
    ValidationError,
)
from cslab.grid import GridFunction, relative_l2_error
from cslab.sampling import (
    LevelScheme,
    MeasurementOperator,
    allocate_samples,
    draw_pattern,
    general_allocate,
    haar_allocate,
    measure,
    recovery_allocate,
)
from cslab.solver import SolveRequest, solve_findim_baseline, solve_wqcbp
from cslab.structure import (
    Weights,
    balancing,
    balancing_scan,
    gripl_bruteforce,
    gripl_probe,
    inverse_sqrt_weights,
    local_coherence,
    recommended_weights,
    t_levels,
    unweighted,
)
from cslab.walsh import fwht_sequency, truncated_walsh_series
from cslab.wavelet import WaveletSystem, synthesize, write_filter_table

_logger = cslab.log.internal_logger()

COMMANDS = ("coherence", "balancing", "ripl", "allocate", "reconstruct", "filters")


def _levels_str(v) -> str:
    return ";".join(str(int(x)) for x in v)


def _weights(cfg: ExperimentConfig, scheme: LevelScheme, A: np.ndarray = None, G=None) -> Weights:
    mode = cfg.weights.mode
    if mode == "unweighted":
        return unweighted(scheme.r)
    if mode == "inverse-sqrt-s":
        return inverse_sqrt_weights(scheme.s)
    if mode == "explicit":
        return Weights(tuple(cfg.weights.values))
    if A is None or G is None:
        raise ValidationError("recommended weights need the measurement matrix and the Gram root")
    return recommended_weights(scheme, A, G, cfg.data_bandwidth())


def cmd_coherence(cfg: ExperimentConfig, out: str, dump_section: bool = False) -> dict:
    """local coherences and their ratio table."""
    sys = cfg.wavelet_system()
    scheme = cfg.level_scheme(with_m=False)
    sec = coherence_section(
        sys,
        scheme.N[-1],
        scheme.M[-1],
        quality=cfg.quality,
        averaging=cfg.coherence_averaging,
        margin=cfg.coherence_margin,
    )
    table = local_coherence(sec, scheme)

    rows = []
    for k in range(1, scheme.r + 1):
        for l in range(1, scheme.r + 1):
            rows.append((k, l, table.mu[k - 1, l - 1]))
    cslab.file.write_csv(cslab.file.safe_path_join(out, "coherence.csv"), ["k", "l", "mu"], rows)
    ratios = table.ratio_table()
    cslab.file.write_csv(cslab.file.safe_path_join(out, "ratios.csv"), ["k", "l", "ratio"], ratios)
    if dump_section:
        write_section_csv(sec, cslab.file.safe_path_join(out, "section.csv"))

    return {
        "quality": sec.quality,
        "averaging": sec.averaging,
        "entry_err": sec.entry_err,
        "ratios": len(ratios),
        "decay_spreads": table.decay_spreads(sys.j0),
        "guarantee_warning": sys.guarantee_warning(),
    }


def cmd_balancing(cfg: ExperimentConfig, out: str) -> dict:
    """scan of the balancing constant over N = 2^(k+q) for M = 2^k."""
    sys = cfg.wavelet_system()
    M = cfg.scheme.M[-1]
    if M & (M - 1) != 0:
        raise ValidationError("balancing scan needs M_r to be a power of two, got %d" % (M))
    k = M.bit_length() - 1
    path = cslab.file.safe_path_join(out, "theta_scan.csv")
    try:
        res = balancing_scan(sys, k, cfg.theta_target, q_max=cfg.scan_cap, quality=cfg.quality)
    except ScanCapError as ex:
        cslab.file.write_csv(path, ["q", "N", "theta"], getattr(ex, "trace", []))
        raise
    cslab.file.write_csv(path, ["q", "N", "theta"], res.trace)
    return {"q": res.q, "M": M, "theta_target": cfg.theta_target, "theta": res.trace[-1][2]}


def _delta(A, G, scheme, s, cfg: ExperimentConfig, seed: int) -> tuple[float, str]:
    try:
        return gripl_bruteforce(A, G, scheme, s=s, workers=cfg.workers), "bruteforce"
    except EnumerationCapError as ex:
        _logger.warning("%s, using %d random supports" % (ex, cfg.trials))
        return gripl_probe(A, G, scheme, cfg.trials, seed=seed, s=s), "probe"


def cmd_ripl(cfg: ExperimentConfig, out: str) -> dict:
    """G-adjusted restricted isometry constants over a sweep of pattern seeds."""
    sys = cfg.wavelet_system()
    scheme = cfg.level_scheme()
    M = scheme.M[-1]
    sec = assemble_section(sys, scheme.N[-1], max(M, cfg.data_bandwidth()), quality=cfg.quality)
    G = balancing(sec, scheme.N[-1], M)

    rows = []
    t = None
    for i in range(cfg.ripl_seeds):
        seed = cfg.seed + i
        pattern = draw_pattern(scheme, seed)
        A = MeasurementOperator(pattern, sec, cfg.data_bandwidth()).matrix
        if t is None:
            w = _weights(cfg, scheme, A, G)
            t = t_levels(scheme, w, G)
        for order, s in (("s", scheme.s), ("t", t)):
            d, method = _delta(A, G, scheme, s, cfg, seed)
            rows.append((seed, order, _levels_str(s), d, method, G.is_identity))

    cslab.file.write_csv(
        cslab.file.safe_path_join(out, "ripl_report.csv"),
        ["seed", "order", "levels", "delta", "method", "g_is_identity"],
        rows,
    )
    return {
        "t_levels": list(t),
        "theta": G.theta,
        "kappa": G.kappa,
        "g_is_identity": G.is_identity,
        "max_delta_t": max(r[3] for r in rows if r[1] == "t"),
    }


def cmd_allocate(cfg: ExperimentConfig, out: str) -> dict:
    """per level sample counts from the selected sampling condition."""
    scheme = cfg.level_scheme(with_m=False)
    f = cfg.formula
    need_sys = f in ("levels", "general", "recovery") and (cfg.theta is None or f != "levels")
    sec = G = None
    if need_sys:
        sys = cfg.wavelet_system()
        sec = assemble_section(sys, scheme.N[-1], scheme.M[-1], quality=cfg.quality)
        G = balancing(sec, scheme.N[-1], scheme.M[-1])

    if f == "levels":
        theta = cfg.theta if cfg.theta is not None else G.theta
        alloc = allocate_samples(scheme, cfg.delta, theta, cfg.eps, cfg.scheme.q, cfg.c_univ)
    elif f == "general":
        mu = local_coherence(sec, scheme).mu
        alloc = general_allocate(scheme, mu, cfg.delta, G.g_inv_norm, cfg.eps, cfg.c_univ)
    elif f == "recovery":
        mu = local_coherence(sec, scheme).mu
        theta = cfg.theta if cfg.theta is not None else G.theta
        alloc = recovery_allocate(scheme, mu, theta, cfg.eps, cfg.c_univ)
    else:
        alloc = haar_allocate(scheme, cfg.delta, cfg.eps, cfg.c_univ, weighted=(f == "haar-weighted"))

    rows = []
    for k in range(1, scheme.r + 1):
        lo, hi = scheme.sampling_range(k)
        rows.append(
            (k, lo, hi, hi - lo, alloc.factors[k - 1], alloc.L, alloc.m[k - 1], alloc.saturated[k - 1])
        )
    cslab.file.write_csv(
        cslab.file.safe_path_join(out, "allocation.csv"),
        ["level", "N_lo", "N_hi", "width", "factor", "L", "m", "saturated"],
        rows,
    )
    return {
        "formula": f,
        "m": list(alloc.m),
        "L": alloc.L,
        "iterations": alloc.iterations,
        "converged": alloc.converged,
    }


def _signal(cfg: ExperimentConfig) -> tuple[np.ndarray | None, GridFunction | None]:
    sig = cfg.signal
    if sig is None:
        raise ValidationError("reconstruct needs a signal")
    if sig.grid_file is not None:
        try:
            header, rows = cslab.file.read_csv(sig.grid_file)
        except (OSError, ValueError) as ex:
            raise ValidationError("cannot read signal %s" % (sig.grid_file), ex=ex)
        if "value" not in header:
            raise ValidationError("%s has no 'value' column" % (sig.grid_file))
        col = header.index("value")
        try:
            v = np.array([float(r[col]) for r in rows])
        except (ValueError, IndexError) as ex:
            raise ValidationError("%s has a malformed value row" % (sig.grid_file), ex=ex)
        n = v.shape[0]
        if n == 0 or n & (n - 1) != 0:
            raise ValidationError("grid signal needs 2^g values, got %d" % (n))
        return None, GridFunction(n.bit_length() - 1, v)
    if sig.position is not None:
        x = np.zeros(sig.position + 1)
        x[sig.position] = 1.0
        return x, None
    top = max(sig.coefficients.keys())
    x = np.zeros(top + 1)
    for p, c in sig.coefficients.items():
        x[p] = c
    return x, None


def _walsh_samples(sys: WaveletSystem, x, grid, n: int, quality: int = None) -> np.ndarray:
    # <f, w_k> for k < n
    if x is not None:
        return assemble_section(sys, n, x.shape[0], quality=quality).entries @ x
    if n > grid.size:
        raise ValidationError("%d Walsh samples need a grid of at least %d cells" % (n, n))
    return fwht_sequency(grid.values, "analysis")[:n]


def cmd_reconstruct(cfg: ExperimentConfig, out: str) -> dict:
    """recovers the signal from Walsh samples with the selected pipeline."""
    sys = cfg.wavelet_system()
    scheme = cfg.level_scheme()
    x, grid = _signal(cfg)
    depth = cfg.reference_depth
    reference = synthesize(sys, x, depth) if x is not None else grid
    data = {"mode": cfg.mode}
    sv = cfg.solver
    report = None

    if cfg.mode == "infinite":
        K = cfg.data_bandwidth()
        width = max(K, x.shape[0] if x is not None else 0, scheme.M[-1])
        sec = assemble_section(sys, scheme.N[-1], width, quality=cfg.quality)
        pattern = draw_pattern(scheme, cfg.seed)
        op = MeasurementOperator(pattern, sec, K)
        if x is not None:
            meas = measure(op, x)
            y = meas.y
            data["truncation_norm"] = meas.truncation_norm
        else:
            y = pattern.scales * _walsh_samples(sys, None, grid, scheme.N[-1])[pattern.rows]
        G = None
        if cfg.weights.mode == "recommended":
            G = balancing(sec, scheme.N[-1], scheme.M[-1])
        w = _weights(cfg, scheme, op.matrix, G)
        req = SolveRequest(op.matrix, y, sv.eta, w.column_weights(scheme, K), sv.tol_feas, sv.tol_gap, sv.max_iters)
        report = solve_wqcbp(req)
        recon = synthesize(sys, report.xhat, depth)
        pattern.write_csv(cslab.file.safe_path_join(out, "pattern.csv"))
        data["rows"] = pattern.rows.tolist()
        data["K"] = K
        data["weights"] = list(w.values)
        if x is not None:
            xx = np.zeros(max(K, x.shape[0]))
            xx[: x.shape[0]] = x
            xh = np.zeros_like(xx)
            xh[:K] = report.xhat
            data["coefficient_error"] = float(np.linalg.norm(xh - xx) / np.linalg.norm(xx))

    elif cfg.mode == "finite":
        n = scheme.N[-1]
        if n & (n - 1) != 0:
            raise ValidationError("finite mode needs N_r to be a power of two, got %d" % (n))
        r = n.bit_length() - 1
        pattern = draw_pattern(scheme, cfg.seed)
        rows = np.unique(pattern.rows)
        y = _walsh_samples(sys, x, grid, n, cfg.quality)[rows]
        recon, report = solve_findim_baseline(sys, r, rows, y, sv.eta, sv.tol_feas, sv.tol_gap, sv.max_iters)
        data["rows"] = rows.tolist()

    else:
        n = scheme.N[-1]
        y = _walsh_samples(sys, x, grid, n, cfg.quality)
        recon = truncated_walsh_series(y, max(0, math.ceil(math.log2(n))))
        data["samples"] = n

    d = max(reference.depth, recon.depth)
    data["grid_error"] = relative_l2_error(recon.refine(d), reference.refine(d))
    ref = reference.refine(d)
    rec = recon.refine(d)
    cslab.file.write_csv(
        cslab.file.safe_path_join(out, "reconstruction.csv"),
        ["x", "reference", "reconstruction"],
        zip(ref.midpoints(), ref.values, rec.values),
    )
    cslab.plot.write_line_plot(
        cslab.file.safe_path_join(out, "reconstruction.svg"),
        ref.midpoints(),
        {"reference": ref.values, "reconstruction (%s)" % (cfg.mode): rec.values},
        title="reconstruction, mode=%s, relative L2 error %.3g" % (cfg.mode, data["grid_error"]),
    )
    if report is not None:
        data["solver"] = report.to_dict()
        if not report.converged:
            raise ConvergenceError("solver ended with status %s after %d iterations" % (report.status, report.iterations))
    return data


def cmd_filters(out: str) -> dict:
    n = write_filter_table(cslab.file.safe_path_join(out, "filters.txt"))
    return {"filters": n}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="experiment configuration (json/json5).")
    common.add_argument("--seed", type=int, default=None, help="pattern seed.")
    common.add_argument("--quality", type=int, default=None, help="section grid depth.")
    common.add_argument("--out", type=str, default=None, help="output directory, overrides the config's out (default out).")
    common.add_argument("--log-level", type=str, default="INFO", help="DEBUG, INFO, WARNING, ERROR.")
    common.add_argument("--log-file", type=str, default=None, help="rotating log file.")

    parser = argparse.ArgumentParser(prog="cs-lab", description="Walsh sampling and wavelet recovery experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coherence", parents=[common], help="local coherences and ratio table.")
    p.add_argument("--dump-section", action="store_true", help="also write section.csv.")
    p = sub.add_parser("balancing", parents=[common], help="balancing constant scan.")
    p.add_argument("--theta-target", type=float, default=None)
    sub.add_parser("ripl", parents=[common], help="G-adjusted restricted isometry constants.")
    p = sub.add_parser("allocate", parents=[common], help="sample allocation.")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--c-univ", type=float, default=None)
    p = sub.add_parser("reconstruct", parents=[common], help="signal recovery.")
    p.add_argument("--mode", choices=["infinite", "finite", "series"], default=None)
    sub.add_parser("filters", parents=[common], help="write the filter table.")
    return parser


def _configured_out(args: argparse.Namespace) -> str:
    # --out, else the raw config's out key (readable even when the config is invalid), else "out"
    if args.out is not None:
        return args.out
    if args.config is not None:
        try:
            js = cslab.file.from_json_file(args.config)
        except (OSError, ValueError):
            js = None
        if isinstance(js, dict) and isinstance(js.get("out"), str):
            return js["out"]
    return "out"


def _write_error(out: str, js: dict) -> int:
    try:
        d = cslab.file.ensure_dir(out)
        cslab.file.to_json_file(cslab.file.safe_path_join(d, cslab.manifest.MANIFEST_FILENAME), js)
    except OSError as ex:
        _logger.error("cannot write the error manifest: %s" % (ex))
    return js["error"]["exit_code"]


def run(argv: list[str] = None) -> int:
    """
    runs one command.

    Args:
        argv (list[str], optional): the arguments. Defaults to sys.argv[1:].

    Returns:
        int: the exit code.
    """
    args = build_parser().parse_args(argv)
    cslab.log.internal_logger(log_to_file=args.log_file, level=logging.INFO, force_reconfigure=args.log_file is not None)
    cslab.log.set_level(args.log_level)

    overrides = {k: getattr(args, k, None) for k in FLAG_KEYS}
    out = _configured_out(args)
    cfg = None
    config_js = None
    run_id = cslab.manifest.generate_run_id()
    try:
        if args.command == "filters":
            out = cslab.file.ensure_dir(out)
            data = cmd_filters(out)
        else:
            cfg = load_config(args.config, overrides)
            config_js = cfg.model_dump(mode="json")
            out = cslab.file.ensure_dir(cfg.out)
            if args.command == "coherence":
                data = cmd_coherence(cfg, out, args.dump_section)
            elif args.command == "balancing":
                data = cmd_balancing(cfg, out)
            elif args.command == "ripl":
                data = cmd_ripl(cfg, out)
            elif args.command == "allocate":
                data = cmd_allocate(cfg, out)
            else:
                data = cmd_reconstruct(cfg, out)
    except CsLabException as ex:
        _logger.error("%s failed: %s" % (args.command, ex))
        return _write_error(out, cslab.manifest.error_manifest(args.command, config_js, ex, run_id))
    except Exception as ex:
        _logger.exception("%s failed unexpectedly" % (args.command))
        return _write_error(out, cslab.manifest.error_manifest(args.command, config_js, ex, run_id))

    js = cslab.manifest.success_manifest(args.command, config_js, data, run_id)
    cslab.file.to_json_file(cslab.file.safe_path_join(out, cslab.manifest.MANIFEST_FILENAME), js)
    _logger.info("%s done, artifacts in %s" % (args.command, out))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
