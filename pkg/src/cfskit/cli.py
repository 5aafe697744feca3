"""Command-line front end.

    cfskit <subcommand> [--metric NAME] [--param k=v ...] [--mass M] [--eps e1,e2]
           [--pairs N] [--seed S] [--out PATH] [--format csv|json] [--suite NAME]
           [--config FILE]

Exit codes: 0 success, 2 validation failure, 3 numerical-tolerance failure in verify.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, echo, parse_param_value, parse_text

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 2, 3

COMPUTES = {
    "geom": "curvature at sample points: scalar curvature, trace-free Ricci norm, Bianchi and Clifford residuals",
    "sigma": "world function sigma(x,y) by geodesic shooting with its identity and eikonal residuals",
    "vanvleck": "van Vleck determinant and the remainder of its covariant expansion",
    "symbols": "light-cone symbols T^(n) and the residual of their three-term recurrence",
    "regfield": "regularising field f(x,y) and the residual of its nonlinear defining equation",
    "sdw": "coincidence limit a1(x,x) of the spinor heat-kernel coefficient against -R/12",
    "projector": "leading projector kernel: conjugate-kernel and vector-structure residuals",
    "eigen": "closed-chain eigenvalues, analytic formula against the direct eigensolve",
    "perturb": "first-order eigenvalue perturbation formula against finite differences",
    "integrals": "tangent-space integrals C0, C1 and the coupling kappa(eps) with its log-log slope",
    "einstein": "trace-free Ricci residual and the reconstructed cosmological constant",
    "verify": "acceptance checks for the chosen metric",
}


class ToleranceFailure(RuntimeError):
    pass


def _threads() -> int:
    val = os.environ.get("CFS_THREADS", "1")
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"CFS_THREADS: cannot parse {val!r}") from None
    if n < 1:
        raise ConfigError("CFS_THREADS: must be positive")
    return n


def build_config(ns) -> RunConfig:
    cfg = RunConfig()
    if ns.config:
        try:
            with open(ns.config) as fh:
                cfg = parse_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"config: {exc}") from None
    over = {}
    if ns.metric is not None:
        over["metric"] = ns.metric
    if ns.mass is not None:
        over["mass"] = ns.mass
    if ns.eps is not None:
        try:
            over["eps"] = tuple(float(t) for t in ns.eps.split(",") if t.strip())
        except ValueError:
            raise ConfigError(f"eps: cannot parse {ns.eps!r}") from None
    for key in ("pairs", "seed", "out", "format"):
        v = getattr(ns, key)
        if v is not None:
            over[key] = v
    if ns.N is not None:
        over["N"] = ns.N
    cfg = dataclasses.replace(cfg, **over)
    params = dict(cfg.params)
    for item in ns.param or []:
        if "=" not in item:
            raise ConfigError(f"param: expected k=v, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = parse_param_value(v.strip())
    cfg.params = params
    return cfg.validate()


def make_chart_from(cfg: RunConfig):
    from .geometry import make_chart

    try:
        return make_chart(cfg.metric, **cfg.params)
    except TypeError as exc:
        raise ConfigError(f"metric.param: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands: each returns (columns, rows, summary)
# ---------------------------------------------------------------------------


def _rng(cfg):
    return np.random.default_rng(cfg.seed)


def _rf_config(cfg):
    from .regfield import RegFieldConfig

    return RegFieldConfig(nodes=cfg.quad_nodes)


def _pairs(cfg, chart, kind="spacelike"):
    from .sampling import sample_pairs

    return sample_pairs(chart, cfg.pairs, _rng(cfg), scale=cfg.scale, kind=kind,
                        t_sigma=float(chart.base_point[0]))


def cmd_geom(cfg, chart):
    from .geometry import bianchi_residual, clifford_residual, curvature_at, gamma_at, tetrad_at
    from .sampling import sample_points

    rows = []
    for p in sample_points(chart, cfg.pairs, _rng(cfg)):
        cb = curvature_at(chart, p)
        clif = clifford_residual(gamma_at(tetrad_at(chart, p)), cb.metric)
        rows.append([*p, cb.scalar, np.max(np.abs(cb.ricci_tf)), bianchi_residual(cb), clif])
    return ["t", "x1", "x2", "x3", "R", "ricci_tf_max", "bianchi", "clifford"], rows, {}


def cmd_sigma(cfg, chart):
    from .worldfunc import fundamental_identity_residuals, solve_bvp, world_function_batch

    X, Y = _pairs(cfg, chart, "any")
    w = world_function_batch(solve_bvp(chart, X, Y))
    fund, eik = fundamental_identity_residuals(w)
    rows = [[i, w.sigma[i], fund[i], eik[i]] for i in range(len(X))]
    return ["pair", "sigma", "identity_residual", "eikonal_residual"], rows, {}


def cmd_vanvleck(cfg, chart):
    from .bitensor import build_frames, covariant_expansion_remainder

    X, Y = _pairs(cfg, chart, "any")
    fr = build_frames(chart, X, Y)
    rem = covariant_expansion_remainder(fr, chart)
    rows = [[i, fr.wf.sigma[i], fr.delta[i], rem[i]] for i in range(len(X))]
    return ["pair", "sigma", "delta", "expansion_remainder"], rows, {}


def cmd_symbols(cfg, chart):
    from .symbols import check_t_recurrence

    rng = _rng(cfg)
    rows = []
    for i in range(cfg.pairs):
        n = int(rng.integers(0, 4))
        se = complex(rng.uniform(-2, 2), rng.uniform(0.01, 1))
        rows.append([i, n, se.real, se.imag, check_t_recurrence(n, se, cfg.mass)])
    return ["sample", "n", "sigma_eps_re", "sigma_eps_im", "recurrence_residual"], rows, {}


def cmd_regfield(cfg, chart):
    from .regfield import CauchyData, nonlinear_residual, regfield_batch

    X, Y = _pairs(cfg, chart, "any")
    cd = CauchyData(float(chart.base_point[0]), cfg.regfield_sign)
    N = min(cfg.N, 1)
    rf = regfield_batch(chart, X, Y, cd, N=N, eps=cfg.eps[0], cfg=_rf_config(cfg), both_slots=False)
    rows = []
    for e in cfg.eps:
        f = rf.value(e)
        res = nonlinear_residual(rf, e)
        rows += [[i, e, f[i].real, f[i].imag, res[i]] for i in range(len(X))]
    return ["pair", "eps", "f_re", "f_im", "nonlinear_residual"], rows, {"N": N}


def cmd_sdw(cfg, chart):
    from .geometry import curvature_at
    from .sampling import sample_points
    from .sdw import coincidence_a1

    rows = []
    for p in sample_points(chart, min(cfg.pairs, 5), _rng(cfg)):
        a1 = coincidence_a1(chart, p)
        R = curvature_at(chart, p).scalar
        dev = np.max(np.abs(a1 - (-R / 12) * np.eye(4)))
        rows.append([*p, R, np.real(np.trace(a1)) / 4, dev])
    return ["t", "x1", "x2", "x3", "R", "a1_scalar", "a1_plus_R_over_12"], rows, {}


def _pipeline(cfg, chart, eps):
    from .bitensor import build_frames
    from .regfield import CauchyData, regfield_batch

    X, Y = _pairs(cfg, chart)
    fr = build_frames(chart, X, Y)
    cd = CauchyData(float(chart.base_point[0]), cfg.regfield_sign)
    rf = regfield_batch(chart, X, Y, cd, N=0, eps=eps, cfg=_rf_config(cfg), both_slots=False)
    return fr, rf


def cmd_projector(cfg, chart):
    from .projector import closed_chain, p_leading, slash_trace_residual

    fr, rf = _pipeline(cfg, chart, cfg.eps[0])
    rows = []
    for e in cfg.eps:
        k = p_leading(fr, rf, cfg.mass, e)
        cs = closed_chain(k.P)
        sl = slash_trace_residual(k, fr)
        idem = np.max(np.abs(cs.proj_plus @ cs.proj_plus - cs.proj_plus), axis=(1, 2))
        rows += [[i, e, sl, idem[i], cs.eigvec_mismatch[i]] for i in range(len(fr))]
    return ["pair", "eps", "non_vector_fraction", "idempotency", "projector_mismatch"], rows, {}


def cmd_eigen(cfg, chart):
    from .action import lagrangian
    from .projector import analytic_eigenvalues, closed_chain, p_leading

    fr, rf = _pipeline(cfg, chart, cfg.eps[0])
    rows = []
    for e in cfg.eps:
        cs = closed_chain(p_leading(fr, rf, cfg.mass, e).P)
        lp, lm = analytic_eigenvalues(fr, rf, e, cfg.mass)
        rel = np.maximum(np.abs(lp - cs.lambda_plus) / np.abs(lp), np.abs(lm - cs.lambda_minus) / np.abs(lm))
        L = lagrangian(cs.eigenvalues) / np.abs(cs.lambda_plus) ** 2
        for i in range(len(fr)):
            rows.append([i, e, cs.lambda_plus[i].real, cs.lambda_plus[i].imag, cs.lambda_minus[i].real,
                         cs.lambda_minus[i].imag, rel[i], L[i]])
    return ["pair", "eps", "lp_re", "lp_im", "lm_re", "lm_im", "analytic_rel_diff", "lagrangian_rel"], rows, {}


def cmd_perturb(cfg, chart):
    from .action import delta_spectrum, fd_delta_spectrum
    from .projector import closed_chain, p_leading, spin_adjoint

    fr, rf = _pipeline(cfg, chart, cfg.eps[0])
    rng = _rng(cfg)
    cs = closed_chain(p_leading(fr, rf, cfg.mass).P)
    M = rng.normal(size=cs.A.shape) + 1j * rng.normal(size=cs.A.shape)
    dA = (M + spin_adjoint(M)) * np.abs(cs.lambda_plus)[:, None, None]
    pr = delta_spectrum(cs, dA, fr, rf)
    fp, fm = fd_delta_spectrum(cs.A, dA)
    rel = np.maximum(np.abs(pr.delta_lambda[0] - fp) / np.abs(fp), np.abs(pr.delta_lambda[1] - fm) / np.abs(fm))
    rows = [[i, pr.delta_abs[0][i], pr.delta_abs[1][i], rel[i]] for i in range(len(fr))]
    return ["pair", "delta_abs_plus", "delta_abs_minus", "fd_rel_diff"], rows, {}


def cmd_integrals(cfg, chart):
    from .action import TangentConfig, kappa_extract, tangent_integrals

    tc = TangentConfig(epsrel_outer=cfg.quad_tol, epsrel_inner=min(cfg.quad_tol / 10, 1e-10),
                       sign=cfg.regfield_sign)
    Cs = [tangent_integrals(chart, chart.base_point, e, cfg.mass, tc) for e in cfg.eps]
    rows = []
    for C in Cs:
        t0, t1 = C.traces()
        k = float(np.sum(C.C1_frame * C.C0_frame) / np.sum(C.C0_frame ** 2))
        rows.append([C.eps, C.C0_frame[0, 0], C.C1_frame[0, 0], t0, t1, C.quadrature_error[0, 0], k])
    summary = {}
    if len(Cs) >= 4:
        _, slope = kappa_extract(Cs)
        summary["kappa_slope"] = slope
    return ["eps", "C0_00", "C1_00", "trace_C0", "trace_C1", "quad_error", "kappa"], rows, summary


def cmd_einstein(cfg, chart):
    from .action import einstein_residual, lambda_reconstruct
    from .sampling import sample_points

    pts = sample_points(chart, cfg.pairs, _rng(cfg))
    rows = []
    for p in pts:
        r = einstein_residual(chart, p)
        rows.append([*p, r.norm])
    lam = lambda_reconstruct(chart, pts)
    return ["t", "x1", "x2", "x3", "residual"], rows, {"Lambda": lam.Lambda, "Lambda_constancy": lam.constancy}


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _verify_suites(cfg, chart):
    from .action import leading_criticality_check, lambda_reconstruct, einstein_residual
    from .bitensor import build_frames
    from .projector import analytic_eigenvalues, closed_chain, p_leading
    from .sampling import sample_pairs, sample_points
    from .symbols import check_t_recurrence
    from .worldfunc import check_fundamental_identity, world_function_batch, solve_bvp

    rng = _rng(cfg)

    def identities():
        X, Y = sample_pairs(chart, 20, rng, kind="any")
        return check_fundamental_identity(world_function_batch(solve_bvp(chart, X, Y))), 1e-6

    def flat():
        if cfg.metric != "minkowski":
            return 0.0, 1.0
        X, Y = sample_pairs(chart, 20, rng, kind="any")
        fr = build_frames(chart, X, Y)
        d = Y - X
        sig = 0.5 * (d[:, 0] ** 2 - np.sum(d[:, 1:] ** 2, axis=1))
        err = max(np.max(np.abs(fr.wf.sigma - sig)), np.max(np.abs(fr.delta - 1)),
                  np.max(np.abs(fr.U - np.eye(4))))
        return err, 1e-10

    def symbols():
        r = max(check_t_recurrence(n, complex(rng.uniform(-2, 2), rng.uniform(0.01, 1)), cfg.mass)
                for n in range(4) for _ in range(25))
        return r, 1e-12

    def criticality():
        X, Y = sample_pairs(chart, 100, rng, kind="spacelike", t_sigma=float(chart.base_point[0]))
        rep = leading_criticality_check(chart, X, Y, [cfg.eps[0]], cfg.mass)
        return rep.max_modulus_gap, 1e-8

    def spectrum():
        fr, rf = _pipeline(dataclasses.replace(cfg, pairs=20), chart, cfg.eps[0])
        cs = closed_chain(p_leading(fr, rf, cfg.mass).P)
        lp, _ = analytic_eigenvalues(fr, rf, None, cfg.mass)
        return float(np.max(np.abs(lp - cs.lambda_plus) / np.abs(lp))), 1e-6

    def einstein():
        pts = sample_points(chart, 5, rng)
        if cfg.metric in ("minkowski", "desitter", "schwarzschild"):
            r = max(einstein_residual(chart, p).norm for p in pts)
            return max(r, lambda_reconstruct(chart, pts).constancy), 1e-8
        return 0.0, 1.0

    return {"flat": flat, "identities": identities, "symbols": symbols, "criticality": criticality,
            "spectrum": spectrum, "einstein": einstein}


def cmd_verify(cfg, chart, suite="all"):
    suites = _verify_suites(cfg, chart)
    names = list(suites) if suite == "all" else [suite]
    rows = []
    ok = True
    for name in names:
        if name not in suites:
            raise ConfigError(f"suite: unknown suite {name!r}; choose from {sorted(suites)} or all")
        val, tol = suites[name]()
        passed = bool(val < tol)
        ok &= passed
        rows.append([name, val, tol, "PASS" if passed else "FAIL"])
    return ["suite", "value", "tolerance", "status"], rows, {"passed": ok}


COMMANDS = {
    "geom": cmd_geom, "sigma": cmd_sigma, "vanvleck": cmd_vanvleck, "symbols": cmd_symbols,
    "regfield": cmd_regfield, "sdw": cmd_sdw, "projector": cmd_projector, "eigen": cmd_eigen,
    "perturb": cmd_perturb, "integrals": cmd_integrals, "einstein": cmd_einstein, "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render(cmd, cfg, columns, rows, summary) -> str:
    buf = io.StringIO()
    if cfg.format == "json":
        def conv(v):
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            return v
        json.dump({"command": cmd, "computes": COMPUTES[cmd], "config": echo(cfg).splitlines(),
                   "columns": columns, "rows": [[conv(v) for v in r] for r in rows],
                   "summary": {k: conv(v) for k, v in summary.items()}}, buf, indent=1)
        buf.write("\n")
        return buf.getvalue()
    buf.write(f"# computes: {COMPUTES[cmd]}\n")
    buf.write(echo(cfg) + "\n")
    for k, v in summary.items():
        buf.write(f"# summary.{k} = {_cell(v)}\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfskit", description="Regularised light-cone kernels on curved charts.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--metric")
    p.add_argument("--param", action="append", metavar="K=V")
    p.add_argument("--mass", type=float)
    p.add_argument("--eps")
    p.add_argument("--pairs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--suite", default="all")
    p.add_argument("--config")
    return p


def run_command(argv) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        _threads()
        cfg = build_config(ns)
        chart = make_chart_from(cfg)
        fn = COMMANDS[ns.command]
        if ns.command == "verify":
            columns, rows, summary = fn(cfg, chart, ns.suite)
        else:
            columns, rows, summary = fn(cfg, chart)
    except (ConfigError, ValueError) as exc:
        print(f"cfskit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = render(ns.command, cfg, columns, rows, summary)
    if cfg.out in ("-", ""):
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    if ns.command == "verify" and not summary.get("passed", False):
        return EXIT_TOLERANCE
    return EXIT_OK


def main(argv=None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
