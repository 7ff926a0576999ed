"""The ``coopreg`` command.

Usage::

    coopreg {audit|mu|synthesize|simulate|reproduce-paper} [CONFIG | --config PATH]
            [--out PATH] [--gains PATH] [--mu X] [--seed N] [--horizon T] [--force]

``CONFIG`` is a YAML scenario file (schema in :mod:`coopreg.scenario`) or a
built-in fixture name: ``worked_example``, ``diag_leader``, ``zero_leader``,
``expanding_leader``.

Exit status
-----------
0  success (audit: every check passed; simulate: tail criterion met)
1  invalid input (parse, schema, shapes, bad arguments)
2  a solvability hypothesis fails, or synthesis refused after a failed audit
3  numerical failure (regulator residual, design, divergence, tail not met)

``COOPREG_LOG`` sets the log level (``DEBUG``, ``INFO``, ``WARNING``, ...).
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .exceptions import CoopregError, SimulationDiverged, ValidationError
from .observer import mu_interval, naive_observer_feasibility, pick_mu
from .scenario import load_scenario
from .simulation import convergence_metrics, error_coordinates, run, write_csv
from .spectral import char_poly_roots, lift, match_multisets, spectral_radius
from .synthesis import ASSUMPTION_TITLES, ControllerRealization, audit_assumptions, k1_loop, synthesize
from .topology import build_h_matrix

log = logging.getLogger("coopreg")

BUNDLE_FORMAT = "coopreg-gains/1"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ASSUMPTION = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _configure_logging():
    name = os.environ.get("COOPREG_LOG", "WARNING").strip().upper()
    level = int(name) if name.isdigit() else logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


# -- gain bundles ---------------------------------------------------------------


def bundle_dict(controllers, scenario_name=""):
    return {
        "format": BUNDLE_FORMAT,
        "scenario": scenario_name,
        "mu": controllers[0].mu if controllers else None,
        "controllers": [c.as_dict() for c in controllers],
    }


def write_bundle(controllers, path, scenario_name=""):
    Path(path).write_text(json.dumps(bundle_dict(controllers, scenario_name), indent=2))


def read_bundle(path, scenario):
    """Load controllers written by :func:`write_bundle` and check them against ``scenario``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"gains: cannot read {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != BUNDLE_FORMAT:
        raise ValidationError(f"gains: {path} is not a {BUNDLE_FORMAT} bundle")
    entries = doc.get("controllers") or []
    if len(entries) != len(scenario.agents):
        raise ValidationError(f"gains: {len(entries)} controllers for {len(scenario.agents)} agents")
    out = []
    for i, (d, agent) in enumerate(zip(entries, scenario.agents), start=1):
        try:
            out.append(ControllerRealization.from_dict(d, agent))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"gains: controllers[{i - 1}]: {exc}") from None
    return out


# -- report helpers ------------------------------------------------------------


def _fmt_bound(x):
    return f"{x:.12g}" if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def format_interval(interval):
    if not interval.feasible:
        return "infeasible"
    text = f"({_fmt_bound(interval.lower)}, {_fmt_bound(interval.upper)})"
    return text if interval.bounded else f"unbounded {text}"


def mu_report(scenario, override=None):
    """Text lines describing both observer families and the chosen gain."""
    H = build_h_matrix(scenario.network)
    interval = mu_interval(scenario.S0, H)
    naive = naive_observer_feasibility(scenario.S0, H)
    lines = [
        f"H spectrum: {_fmt_complex_list(H.spectrum)}",
        f"leader radius |lambda_q| = {interval.leader_radius:.12g}",
        f"proposed: {format_interval(interval)}",
    ]
    for c in interval.diagnostics:
        lines.append(
            f"  nu = {c.a:.6g}{c.b:+.6g}j  Delta = {c.delta:.6g}  "
            f"-> ({_fmt_bound(c.lower)}, {_fmt_bound(c.upper)})"
        )
    naive_text = (f"({_fmt_bound(naive.lower)}, {_fmt_bound(naive.upper)})"
                  if naive.feasible else "infeasible")
    lines.append(f"naive: {naive_text}")
    lines.append(f"proposed: {format_interval(interval)}; naive: {naive_text}")
    mu = override if override is not None else scenario.settings.mu
    if mu is not None:
        status = interval.classify(mu)
        lines.append(f"chosen mu = {mu:g} (overridden; {status})")
    elif interval.feasible:
        lines.append(f"chosen mu = {pick_mu(interval, scenario.S0, H):g} (default)")
    else:
        lines.append("chosen mu: none admissible")
    return lines, interval


def _fmt_complex_list(values):
    parts = []
    for z in values:
        z = complex(z)
        parts.append(f"{z.real:.6g}" if abs(z.imag) < 1e-12 else f"{z.real:.6g}{z.imag:+.6g}j")
    return "{" + ", ".join(parts) + "}"


def _fmt_mat(a, digits=10):
    a = np.round(np.asarray(a, dtype=float), digits) + 0.0
    rows = ["[" + ", ".join(f"{v:.{digits}g}" for v in r) + "]" for r in np.atleast_2d(a)]
    return "[" + ", ".join(rows) + "]"


def _scenario_from_args(args):
    source = args.config_pos or args.config
    if args.config_pos and args.config and args.config_pos != args.config:
        raise ValidationError("config given twice with different values")
    if not source:
        raise ValidationError("a config path or built-in fixture name is required")
    sc = load_scenario(source)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.horizon is not None:
        if args.horizon < 1:
            raise ValidationError("--horizon must be positive")
        changes["horizon"] = args.horizon
    return sc.with_settings(**changes) if changes else sc


# -- commands ------------------------------------------------------------------


def cmd_audit(args, out):
    sc = _scenario_from_args(args)
    if args.mu is not None:
        sc = sc.with_settings(mu=args.mu)
    report = audit_assumptions(sc)
    print(report.format_text(), file=out)
    for c in report.failed():
        who = "" if c.agent is None else f" (agent {c.agent})"
        print(f"violated: {c.key}{who}: {ASSUMPTION_TITLES[c.key]}", file=out)
    lines, _ = mu_report(sc, args.mu)
    print("\n".join(lines), file=out)
    if args.out:
        Path(args.out).write_text(json.dumps(report.as_dict(), indent=2, default=_json_default))
    return EXIT_OK if report.all_passed else EXIT_ASSUMPTION


def cmd_mu(args, out):
    sc = _scenario_from_args(args)
    lines, interval = mu_report(sc, args.mu)
    print("\n".join(lines), file=out)
    if args.out:
        Path(args.out).write_text(json.dumps(interval.as_dict(), indent=2, default=_json_default))
    return EXIT_OK if interval.feasible else EXIT_ASSUMPTION


def cmd_synthesize(args, out):
    sc = _scenario_from_args(args)
    if args.mu is not None:
        sc = sc.with_settings(mu=args.mu)
    report = audit_assumptions(sc)
    if not report.all_passed and not args.force:
        print(report.format_text(), file=out)
        keys = ", ".join(sorted({c.key for c in report.failed()}))
        print(f"refusing to synthesize: audit failed ({keys}); use --force to override", file=out)
        return EXIT_ASSUMPTION
    controllers = synthesize(sc, strict=not args.force, report=report)
    for i, c in enumerate(controllers, start=1):
        certs = ", ".join(f"{k}={v:.6g}" for k, v in c.certificates.items())
        print(f"agent {i}: K2 = {np.array2string(c.K2, precision=6)}  {certs}", file=out)
    if args.out:
        write_bundle(controllers, args.out, sc.name)
        print(f"wrote {args.out}", file=out)
    else:
        print(json.dumps(bundle_dict(controllers, sc.name), indent=2), file=out)
    return EXIT_OK


def cmd_simulate(args, out):
    sc = _scenario_from_args(args)
    if args.gains:
        controllers = read_bundle(args.gains, sc)
    else:
        controllers = synthesize(sc, strict=not args.force)
    mu = args.mu if args.mu is not None else controllers[0].mu
    interval = mu_interval(sc.S0, build_h_matrix(sc.network))
    if interval.classify(mu) != "inside":
        log.warning("mu = %g lies outside the admissible interval %s", mu, format_interval(interval))
    try:
        trace = run(sc, controllers, mu=mu)
    except SimulationDiverged as exc:
        print(f"diverged: {exc}", file=out)
        return EXIT_NUMERICAL
    if args.out:
        write_csv(trace, args.out)
    metrics = convergence_metrics(trace, sc.settings.tail_fraction)
    error_coordinates(trace, sc, controllers)
    print(f"horizon T = {trace.horizon}, mu = {mu:g}, tail from t = {metrics.tail_start}", file=out)
    for i, (tail, rate) in enumerate(zip(metrics.tail_max, metrics.rates), start=1):
        print(f"agent {i}: tail max |e| = {tail:.3e}  fitted rate = {rate:.4f}", file=out)
    print(f"observer: tail max = {metrics.observer_tail:.3e}  fitted rate = {metrics.observer_rate:.4f}", file=out)
    if metrics.diverging:
        print(f"diverging: estimation error not decaying (observer rate {metrics.observer_rate:.4f})", file=out)
        return EXIT_NUMERICAL
    ok = metrics.worst_tail < sc.settings.tail_tol
    print(f"tail criterion (< {sc.settings.tail_tol:g}): {'met' if ok else 'NOT met'}", file=out)
    return EXIT_OK if ok else EXIT_NUMERICAL


# -- worked example reproduction ---------------------------------------------------


def k1_matching_roots(agent, roots):
    """Least-squares ``K1`` whose delay loop has the given nonzero roots.

    For a single input the lifted characteristic polynomial is affine in
    ``K1``, so its coefficients are sampled at zero and the unit vectors.
    """
    if agent.m != 1:
        raise ValidationError("root matching needs a single-input agent")
    n = agent.n

    def coeffs(K):
        gains = [(d, b @ K) for d, b in zip(agent.delays, agent.B)]
        r = char_poly_roots(agent.A, gains)
        return np.real(np.poly(np.concatenate([r.nonzero, np.zeros(r.zero_roots)])))

    base = coeffs(np.zeros((1, n)))
    cols = [coeffs(np.eye(n)[[k]]) - base for k in range(n)]
    target = np.real(np.poly(np.concatenate([np.asarray(roots), np.zeros(len(base) - 1 - len(roots))])))
    k = np.linalg.lstsq(np.column_stack(cols), target - base, rcond=None)[0]
    return k.reshape(1, n)


def reproduce_rows(seed=0, horizon=500):
    """Computed-versus-published comparison for the built-in worked example.

    Returns
    -------
    list of dict
        ``quantity``, ``computed``, ``published``, ``deviation``, ``tol``, ``status``.
    """
    sc = fixtures.worked_example().with_settings(seed=seed, horizon=horizon)
    rows = []

    def row(quantity, computed, published, deviation, tol):
        status = "info" if tol is None else ("ok" if deviation <= tol else "MISMATCH")
        rows.append({"quantity": quantity, "computed": computed, "published": published,
                     "deviation": None if deviation is None else float(deviation), "tol": tol,
                     "status": status})

    H = build_h_matrix(sc.network)
    row("H spectrum", _fmt_complex_list(H.spectrum), "{1, 1, 1, 1}",
        match_multisets(H.spectrum, [1, 1, 1, 1]), 0.0)

    interval = mu_interval(sc.S0, H)
    dev = max(abs(interval.lower - 0.0), abs(interval.upper - 2.0))
    row("mu interval", format_interval(interval), "(0, 2)", dev, 1e-12)

    agent = sc.agents[0]
    K1 = sc.K1[0]
    gains = [(d, b @ K1) for d, b in zip(agent.delays, agent.B)]
    roots = char_poly_roots(agent.A, gains).nonzero
    published = np.array(fixtures.PUBLISHED_ROOTS)
    row("root set, K1 = (-0.0750, -0.4650)", _fmt_complex_list(roots), _fmt_complex_list(published),
        match_multisets(roots, published), 1e-3)
    k_fit = k1_matching_roots(agent, published)
    row("K1 reproducing the published roots", _fmt_mat(k_fit, 5), "(-0.0750, -0.4650)", None, None)

    report = audit_assumptions(sc)
    controllers = synthesize(sc, report=report)
    for i, c in enumerate(controllers, start=1):
        X_pub = np.array([[-1.0, 0, 1, 0], [0, 1, 0, 1]])
        U_pub = np.array([[1.0, 0, -1, -0.5 * i]])
        K2_pub = np.array([[0.925, 0.465, -0.925, -0.5 * i + 0.465]])
        row(f"X_{i}", _fmt_mat(c.X), _fmt_mat(X_pub), np.abs(c.X - X_pub).max(), 1e-8)
        row(f"U_{i}", _fmt_mat(c.U), _fmt_mat(U_pub), np.abs(c.U - U_pub).max(), 1e-8)
        row(f"K2_{i}", _fmt_mat(c.K2), _fmt_mat(K2_pub), np.abs(c.K2 - K2_pub).max(), 1e-8)
        row(f"estimator radius agent {i}", f"{c.certificates['estimator_radius']:.6f}", "< 1", None, None)
    row("delay loop radius", f"{spectral_radius(lift(k1_loop(agent, K1)).matrix):.6f}", "< 1", None, None)

    trace = run(sc, controllers)
    metrics = convergence_metrics(trace, sc.settings.tail_fraction)
    error_coordinates(trace, sc, controllers)
    row(f"tail max |e| over t >= {metrics.tail_start}", f"{metrics.worst_tail:.3e}", "-> 0",
        metrics.worst_tail, sc.settings.tail_tol)
    return rows


def cmd_reproduce(args, out):
    seed = 0 if args.seed is None else args.seed
    horizon = 500 if args.horizon is None else args.horizon
    rows = reproduce_rows(seed=seed, horizon=horizon)
    width = max(len(r["quantity"]) for r in rows)
    for r in rows:
        dev = "" if r["deviation"] is None else f"  dev {r['deviation']:.3e}"
        tol = "" if r["tol"] is None else f" (tol {r['tol']:g})"
        print(f"{r['status']:8s} {r['quantity']:{width}s}  computed  {r['computed']}", file=out)
        print(f"{'':8s} {'':{width}s}  published {r['published']}{dev}{tol}", file=out)
    bad = [r["quantity"] for r in rows if r["status"] == "MISMATCH"]
    if bad:
        print(f"mismatches: {', '.join(bad)}", file=out)
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2, default=_json_default))
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return str(obj)


COMMANDS = {
    "audit": cmd_audit,
    "mu": cmd_mu,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "reproduce-paper": cmd_reproduce,
}


def build_parser():
    p = _Parser(prog="coopreg", description="Cooperative output regulation with delayed inputs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config_pos", nargs="?", metavar="CONFIG", help="scenario file or built-in name")
    p.add_argument("--config", help="scenario file or built-in name")
    p.add_argument("--out", help="output path (report, gain bundle or CSV trace)")
    p.add_argument("--gains", help="gain bundle for simulate")
    p.add_argument("--mu", type=float, help="observer gain override")
    p.add_argument("--seed", type=int, help="initial-condition seed")
    p.add_argument("--horizon", type=int, help="last simulated step T")
    p.add_argument("--force", action="store_true", help="synthesize even if the audit fails")
    return p


def main(argv=None, out=None):
    _configure_logging()
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except CoopregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
