"""Command-line entry point: ``paneitz-lab {verify,crit,analyze,flow}``.

Exit codes: 0 success, 2 verification failure, 3 input-hypothesis violation
(e.g. a degenerate critical point), 4 regime violation, 64 usage error.
Every float in JSON and CSV output is printed with 17 significant digits and
files are written atomically.
"""

from dataclasses import dataclass, field
import argparse
import math
import os
import sys
import tempfile
import warnings

import numpy as np
from scipy.special import beta as beta_fn

from .bubble_kernel import (
    Bubble,
    Configuration,
    beta_n,
    bilaplacian_residual,
    profile,
    sample_bubble_measure,
    sobolev_mass,
)
from .infinity_catalog import (
    SCHEMA,
    BoundaryDegenerateError,
    TiedLevelsError,
    condition_H,
    enumerate_cpi,
    euler_characteristic_trace,
    theorem_report,
)
from .morse_analyzer import (
    CurvatureField,
    CurvatureFileError,
    IncompleteSearchWarning,
    MorseViolationError,
    euler_characteristic,
    find_critical_points,
)
from .paneitz_functional import (
    CalibrationError,
    RegimeWarning,
    J_expansion,
    balanced_alphas,
    calibrate_c3,
    interaction_constant,
    interaction_sweep,
    self_constant,
    self_estimate_sweep,
    single_bubble_check,
)
from .reduced_flow import (
    CriticalData,
    FlowParams,
    RegimeError,
    default_eta,
    in_tube,
    integrate_flow,
    seed_state,
)
from .sphere_geometry import DEFAULT_RULE, surface_area

EXIT_OK, EXIT_FAIL, EXIT_HYPOTHESIS, EXIT_REGIME, EXIT_USAGE = 0, 2, 3, 4, 64


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialization


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def fmt_float(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x + 0.0, ".17g")  # drops the sign of -0.0


def dumps17(obj, indent=2):
    """JSON text with sorted keys and every float at 17 significant digits."""
    import json

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(o[k], level + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return fmt_float(o)
        return json.dumps(str(o) if not isinstance(o, str) else o)

    return enc(_plain(obj), 0) + "\n"


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(cfg, name, text):
    if cfg.out:
        atomic_write(os.path.join(cfg.out, name), text)
    else:
        sys.stdout.write(text)


def csv_rows(header, rows):
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    n: int | None = None
    format: str = "json"
    out: str | None = None
    seed: int = 0
    quad_nodes: int | None = None
    mc_samples: int = 200_000
    lambda_min: float = 20.0
    eps_max: float = 1e-2
    flow_C: float = 10.0
    flow_m: float = 0.1
    samples: int = 8
    max_steps: int = 20000
    p: int = 1
    driver: str = "leading"
    lambda_sweep: list = field(default_factory=lambda: [10.0, 20.0, 40.0, 80.0])

    def validate(self):
        if self.n is not None and self.n not in (5, 6):
            raise UsageError("--n must be 5 or 6")
        if self.quad_nodes is not None and not 2 <= self.quad_nodes <= 64:
            raise UsageError("--quad-nodes must lie in [2, 64]")
        if not 1_000 <= self.mc_samples <= 100_000_000:
            raise UsageError("--mc-samples must lie in [1e3, 1e8]")
        if not self.lambda_min >= 1.0:
            raise UsageError("--lambda-min must be at least 1")
        if not 0 < self.eps_max < 1:
            raise UsageError("--eps-max must lie in (0, 1)")
        if not self.flow_C > 0 or not self.flow_m > 0:
            raise UsageError("flow constants must be positive")
        if self.samples < 0 or self.max_steps <= 0 or self.p < 1:
            raise UsageError("--samples, --max-steps and --p must be positive")
        if len(self.lambda_sweep) < 2 or min(self.lambda_sweep) <= 0:
            raise UsageError("--lambda-sweep needs at least two positive values")

    @property
    def rule(self):
        return DEFAULT_RULE if self.quad_nodes is None else DEFAULT_RULE.with_nodes(self.quad_nodes)

    def flow_params(self):
        return FlowParams(C=self.flow_C, m=self.flow_m, lambda_min=self.lambda_min,
                          eps_max=self.eps_max, max_steps=self.max_steps)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _sweep(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sweep {text!r}") from exc


def build_parser():
    ap = _Parser(prog="paneitz-lab",
                 description="Numerical laboratory for prescribing Paneitz curvature on spheres.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--input", help="curvature file (JSON)")
    common.add_argument("--n", type=int, choices=(5, 6))
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--quad-nodes", type=int)
    common.add_argument("--mc-samples", type=int, default=200_000)
    common.add_argument("--lambda-min", type=float, default=20.0)
    common.add_argument("--eps-max", type=float, default=1e-2)
    common.add_argument("--flow-C", type=float, default=10.0)
    common.add_argument("--flow-m", type=float, default=0.1)
    common.add_argument("--samples", type=int, default=8)
    common.add_argument("--max-steps", type=int, default=20000)
    v = sub.add_parser("verify", parents=[common], help="run the lemma and expansion suite")
    v.add_argument("--lambda-sweep", type=_sweep, default=[10.0, 20.0, 40.0, 80.0])
    sub.add_parser("crit", parents=[common], help="critical points of K")
    sub.add_parser("analyze", parents=[common], help="index sums and hypothesis checks")
    f = sub.add_parser("flow", parents=[common], help="simulate the reduced dynamics")
    f.add_argument("--p", type=int, default=1, help="number of bubbles per trajectory")
    f.add_argument("--driver", choices=("leading", "pseudogradient"), default="leading")
    return ap


def parse_config(argv):
    ns = build_parser().parse_args(argv)
    kw = {k: v for k, v in vars(ns).items() if v is not None or k in ("input", "n", "out")}
    cfg = RunConfig(**kw)
    cfg.validate()
    return cfg


def load_K(cfg, required=True):
    if cfg.input is None:
        if required:
            raise UsageError("--input is required for this subcommand")
        return None
    try:
        K = CurvatureField.load(cfg.input)
    except OSError as exc:
        raise UsageError(f"cannot read {cfg.input}: {exc}") from exc
    except CurvatureFileError as exc:
        raise UsageError(f"{cfg.input}: {exc}") from exc
    if cfg.n is not None and cfg.n != K.n:
        raise UsageError(f"--n {cfg.n} does not match the file (n = {K.n})")
    K.check_positive(seed=cfg.seed)
    return K


# ---------------------------------------------------------------------------
# verify


@dataclass
class Check:
    name: str
    value: float
    bound: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "value": self.value, "bound": self.bound,
                "passed": self.passed, "detail": self.detail}


def closed_form_c1(n):
    return beta_n(n) ** (2.0 * n / (n - 4)) * 2.0 * surface_area(n - 1) / (n * (n + 2))


def closed_form_c2(n):
    return (beta_n(n) ** (2.0 * n / (n - 4)) * surface_area(n - 1)
            * 0.5 * beta_fn(0.5 * (n + 2), 0.5 * (n - 2)) / (2.0 * n))


def default_verify_field(n):
    """A fixed non-symmetric cubic used when no curvature file is given."""
    terms = [([0] * (n + 1), 1.0)]
    for k, c in enumerate((0.3, -0.2, 0.15)):
        e = [0] * (n + 1)
        e[k] = 2
        terms.append((e, c))
    e = [0] * (n + 1)
    e[0], e[1] = 1, 2
    terms.append((e, 0.1))
    e = [0] * (n + 1)
    e[2] = 1
    terms.append((e, 0.05))
    return CurvatureField.from_terms(n, terms)


def run_verify_suite(n, K=None, rule=DEFAULT_RULE, lambda_sweep=(10, 20, 40, 80),
                     mc_samples=200_000, seed=0):
    """Every check of the verification suite for one dimension."""
    K = default_verify_field(n) if K is None else K
    checks = []
    S = sobolev_mass(n)
    radii = np.linspace(0.0, 50.0, 2001)
    res = bilaplacian_residual(n, radii)
    checks.append(Check("bubble profile solves the flat equation", res, "< 1e-8", res < 1e-8))
    for name, got, want in (("c1 quadrature vs closed form", interaction_constant(n),
                             closed_form_c1(n)),
                            ("c2 quadrature vs closed form", self_constant(n), closed_form_c2(n))):
        rel = abs(got - want) / abs(want)
        checks.append(Check(name, rel, "relative < 1e-6", rel < 1e-6,
                            {"quadrature": got, "closed_form": want}))
    for lam in (1.0, 10.0, 100.0):
        sb = single_bubble_check(n, lam, rule)
        for label, val in (("norm", sb.norm_sq), ("critical mass", sb.critical_mass)):
            rel = abs(val / S - 1.0)
            checks.append(Check(f"single bubble {label} equals S_n at lambda={lam:g}", rel,
                                "relative < 1e-4", rel < 1e-4, {"value": val, "S_n": S}))
        for label, val in (("lambda", sb.lambda_pairing), ("center", sb.center_pairing)):
            r = abs(val) / S
            checks.append(Check(f"{label}-direction orthogonality at lambda={lam:g}", r,
                                "< 1e-6 S_n", r < 1e-6))
    try:
        cal = calibrate_c3(n)
        analytic = (n - 4) / (2.0 * n) * S ** ((n - 12) / (2.0 * (n - 4)))
        rel = abs(cal.c3 - analytic) / analytic
        checks.append(Check("c3 calibration residual", cal.residual, "< 0.05",
                            cal.residual < cal.tolerance,
                            cal.to_dict()))
        checks.append(Check("c3 vs normalized closed form", rel, "relative < 1e-3", rel < 1e-3,
                            {"calibrated": cal.c3, "closed_form": analytic}))
    except CalibrationError as exc:
        checks.append(Check("c3 calibration residual", math.inf, "< 0.05", False,
                            {"error": str(exc)}))
    # one-bubble K-weighted estimates: decay at least O(lambda^-3)
    centers = [np.eye(n + 1)[0], np.eye(n + 1)[n]]
    for a in centers:
        sw = self_estimate_sweep(K, a, lambda_sweep, rule)
        for label, slope in (("mass", sw.mass_slope), ("lambda", sw.lambda_slope)):
            checks.append(Check(f"{label} residual decay slope at center e{int(np.argmax(np.abs(a)))}",
                                slope, "<= -2.5", slope <= -2.5, sw.to_dict()))
    isw = interaction_sweep(n, math.pi / 2, [1e2, 1e3, 1e4, 1e5], rule)
    tail = [r for r, e in zip(isw.ratios, isw.eps) if e <= 1e-4]
    worst = max(abs(r - 1.0) for r in tail)
    checks.append(Check("interaction integral / (c1 eps) at eps <= 1e-4", worst, "< 0.02",
                        worst < 0.02, isw.to_dict()))
    lb = max(isw.log_bound)
    checks.append(Check("log-interaction bound over the sweep", lb, "finite and < 1e7",
                        bool(math.isfinite(lb) and lb < 1e7)))
    # dual route: importance-sampled Monte Carlo for one interaction integral
    rng = np.random.default_rng(seed)
    a1, a2 = np.eye(n + 1)[0], np.eye(n + 1)[1]
    X = sample_bubble_measure(Bubble.at(a1, 5.0, n), mc_samples, rng)
    w = profile(n, 5.0, X @ a2) / profile(n, 5.0, X @ a1)
    mc, se = S * w.mean(), S * w.std(ddof=1) / math.sqrt(mc_samples)
    from .sphere_geometry import integrate_biaxisym
    e = (n + 4.0) / (n - 4)
    det = integrate_biaxisym(lambda Y: profile(n, 5.0, Y @ a1) ** e * profile(n, 5.0, Y @ a2),
                             a1, a2, n, rule=rule)
    z = abs(mc - det) / se
    checks.append(Check("interaction integral: Monte Carlo vs quadrature", z, "< 4 stderr",
                        z < 4.0, {"mc": mc, "stderr": se, "quadrature": det}))
    if n == 6:
        checks.append(_expansion_check(K, rule))
    return checks


def _expansion_check(K, rule):
    """Discrepancy / budget along a doubling lambda sweep for two bubbles."""
    n = K.n
    a1 = np.eye(n + 1)[0]
    a2 = np.eye(n + 1)[1]
    al = balanced_alphas(K, [a1, a2], n)
    ratios = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        for lam in (20.0, 40.0, 80.0, 160.0):
            cfg = Configuration.from_arrays(al, [a1, a2], [lam, 1.3 * lam], n)
            r = J_expansion(cfg, K, rule)
            ratios.append(r.abs_discrepancy / r.budget)
    mono = all(b < a for a, b in zip(ratios, ratios[1:]))
    return Check("expansion discrepancy / budget decreases (p = 2)", ratios[-1], "monotone",
                 mono, {"ratios": ratios})


def cmd_verify(cfg):
    K = load_K(cfg, required=False)
    ns = [K.n] if K is not None else ([cfg.n] if cfg.n else [6])
    report = {"schema": SCHEMA, "command": "verify", "checks": []}
    ok = True
    for n in ns:
        for c in run_verify_suite(n, K, cfg.rule, cfg.lambda_sweep, cfg.mc_samples, cfg.seed):
            d = c.to_dict()
            d["n"] = n
            report["checks"].append(d)
            ok &= c.passed
    report["passed"] = ok
    if cfg.format == "csv":
        text = csv_rows(["n", "name", "value", "bound", "passed"],
                        [[c["n"], c["name"], float(c["value"]), c["bound"], c["passed"]]
                         for c in report["checks"]])
        emit(cfg, "verify.csv", text)
    else:
        emit(cfg, "verify.json", dumps17(report))
    for c in report["checks"]:
        sys.stderr.write(f"{'PASS' if c['passed'] else 'FAIL'}  n={c['n']}  {c['name']}: "
                         f"{fmt_float(float(c['value']))} ({c['bound']})\n")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# crit / analyze


def _critical_points(cfg, K):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IncompleteSearchWarning)
        pts = find_critical_points(K, seed=cfg.seed)
    notes = [str(w.message) for w in caught if issubclass(w.category, IncompleteSearchWarning)]
    return pts, notes


def cmd_crit(cfg):
    K = load_K(cfg)
    pts, notes = _critical_points(cfg, K)
    chi = sum((-1) ** p.morse_index for p in pts)
    consistent = chi == euler_characteristic(K.n)
    if cfg.format == "csv":
        header = ["index"] + [f"x{k}" for k in range(K.n + 1)] + ["K", "morse_index",
                                                                   "laplacian", "class"]
        rows = [[i] + [float(v) for v in p.location] + [float(p.value), p.morse_index,
                                                          float(p.laplacian),
                                                          "first" if p.first_class else "second"]
                for i, p in enumerate(pts)]
        emit(cfg, "critical_points.csv", csv_rows(header, rows))
    else:
        emit(cfg, "critical_points.json", dumps17({
            "schema": SCHEMA, "command": "crit", "n": K.n,
            "points": [p.to_dict() for p in pts], "euler_sum": chi,
            "euler_characteristic": euler_characteristic(K.n), "consistent": consistent,
            "warnings": notes}))
    sys.stderr.write(f"Euler check: sum (-1)^index = {chi}, chi(S^{K.n}) = "
                     f"{euler_characteristic(K.n)} -> {'consistent' if consistent else 'MISMATCH'}\n")
    return EXIT_OK


def cmd_analyze(cfg):
    K = load_K(cfg)
    pts, notes = _critical_points(cfg, K)
    ids = ("t:1", "t:2") if K.n == 5 else ("t:4", "t:5", "t:3")
    reports = [theorem_report(K, K.n, t, pts, a2_samples=cfg.samples, seed=cfg.seed)
               for t in ids]
    bundle = {"schema": SCHEMA, "command": "analyze", "n": K.n,
              "critical_points": [p.to_dict() for p in pts],
              "reports": [r.to_dict() for r in reports], "warnings": notes}
    try:
        bundle["records"] = [r.to_dict() for r in enumerate_cpi(K, K.n, pts)]
    except BoundaryDegenerateError as exc:
        bundle["records"] = None
        bundle["records_error"] = str(exc)
    if K.n == 6:
        first = [i for i, p in enumerate(pts) if p.first_class]
        bundle["condition_H"] = [dict(pair=[i, j], **condition_H(K, pts, i, j).to_dict())
                                 for k, i in enumerate(first) for j in first[k + 1:]]
        try:
            bundle["euler_trace"] = euler_characteristic_trace(K, 6, pts).to_dict()
        except TiedLevelsError as exc:
            bundle["euler_trace"] = {"error": str(exc)}
    exists = any(r.conclusion == "solution-exists" for r in reports)
    bundle["aggregate"] = "solution-exists" if exists else "inconclusive"
    if cfg.format == "csv":
        rows = [[r.theorem, r.index_sum if r.index_sum is not None else "",
                 r.forbidden_value if r.forbidden_value is not None else "", r.conclusion]
                for r in reports]
        emit(cfg, "analyze.csv", csv_rows(["theorem", "index_sum", "forbidden_value",
                                           "conclusion"], rows))
    else:
        emit(cfg, "analyze.json", dumps17(bundle))
    return EXIT_OK


# ---------------------------------------------------------------------------
# flow


def cmd_flow(cfg):
    K = load_K(cfg)
    pts, _ = _critical_points(cfg, K)
    crit = CriticalData.of(pts)
    params = cfg.flow_params()
    eta = default_eta(K, pts)
    try:
        records = enumerate_cpi(K, K.n, pts)
    except BoundaryDegenerateError:
        records = []
    ids = {tuple(sorted(r.tau)): k for k, r in enumerate(records)}
    if cfg.p > len(pts):
        raise UsageError("--p exceeds the number of critical points")
    rng = np.random.default_rng(cfg.seed)
    lam_range = (1.5 * params.lambda_min, 10.0 * params.lambda_min)
    runs, hist = [], {}
    for k in range(cfg.samples):
        targets = rng.choice(len(pts), size=cfg.p, replace=False)
        st = seed_state(K, crit, targets, eta, lam_range, rng)
        if not in_tube(st, params.lambda_min, params.eps_max)[0]:
            raise RegimeError(f"sample {k} starts outside the expansion tube")
        tr = integrate_flow(st, K, cfg.driver, crit, eta, params)
        name = f"trace_{k:04d}.csv"
        if cfg.out:
            atomic_write(os.path.join(cfg.out, name), tr.to_csv())
        rec = ids.get(tr.tau) if tr.tau is not None else None
        key = tr.outcome if tr.tau is None else f"blowup{list(tr.tau)}"
        hist[key] = hist.get(key, 0) + 1
        runs.append({"sample": k, "targets": [int(t) for t in targets], "trace": name,
                     "outcome": tr.outcome, "tau": tr.tau, "record_id": rec,
                     "matched": tr.matched, "steps": tr.steps, "tail_region": tr.tail_region,
                     "descent_violations": tr.diagnostics["descent_violations"]})
    summary = {"schema": SCHEMA, "command": "flow", "n": K.n, "p": cfg.p, "driver": cfg.driver,
               "seed": cfg.seed, "eta": eta, "params": params.to_dict(),
               "records": [dict(id=k, **r.to_dict()) for k, r in enumerate(records)],
               "histogram": dict(sorted(hist.items())), "runs": runs}
    emit(cfg, "flow_summary.json", dumps17(summary))
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "crit": cmd_crit, "analyze": cmd_analyze, "flow": cmd_flow}


def main(argv=None):
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"paneitz-lab: {exc}\n")
        return EXIT_USAGE
    except MorseViolationError as exc:
        loc = getattr(exc, "point", None)
        where = "" if loc is None else f" at {[fmt_float(float(v)) for v in loc]}"
        sys.stderr.write(f"paneitz-lab: Morse hypothesis violated{where}: {exc}\n")
        return EXIT_HYPOTHESIS
    except (RegimeError, BoundaryDegenerateError) as exc:
        sys.stderr.write(f"paneitz-lab: {exc}\n")
        return EXIT_REGIME if isinstance(exc, RegimeError) else EXIT_HYPOTHESIS
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
