"""Command-line front end.

Subcommands:
  passage   crossing transform Phi(x) over an x grid
  stop      optimal threshold, verification report, and value-curve data
  simulate  Monte Carlo estimates with goodness-of-fit statistics
  validate  built-in identity suite with per-check residuals

Models are described by a JSON config file (matrices do not fit in
flags); scalar flags override config fields.  CSV output uses a single
'#'-prefixed header line, 17-significant-digit values, LF endings, and
is written atomically (temp file, then rename).

Exit codes: 0 success, 1 failed validate check, 2 invalid input,
3 numerical failure, 4 unverified stopping solution.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ArphaseError, ValidationError
from .gains import GainFunction
from .innovations import Innovation, NegativePart
from .montecarlo import (
    default_max_steps,
    ks_critical_value,
    ks_statistic,
    simulate_paths,
)
from .passage import (
    ResidueSystem,
    closed_form_exp,
    closed_form_exp_general,
    derivative_identity_check,
    overshoot_expectation,
    solve_phi,
)
from .passage import PassageProblem
from .phasetype import cdf_vector, validate as ph_validate
from .qseries import q_pochhammer_inf
from .quadrature import innovation_expectation
from .stopping import (
    psi_of,
    solve_threshold_exp_identity,
    solve_threshold_general,
    verify_solution,
)
from .transforms import AR1Model, TransformEngine

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_UNVERIFIED = 4


def _require_keys(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")


def _parse_t_block(block) -> NegativePart:
    if block is None:
        return NegativePart.zero()
    _require_keys(block, {"variant", "d", "rate", "shape"}, "model.t")
    variant = block.get("variant", "zero")
    if variant == "zero":
        return NegativePart.zero()
    if variant == "point_mass":
        return NegativePart.point_mass(float(block["d"]))
    if variant == "exponential":
        return NegativePart.exponential(float(block["rate"]))
    if variant == "gamma_int":
        return NegativePart.gamma_int(int(block["shape"]), float(block["rate"]))
    raise ValidationError(f"unknown T variant {variant!r}")


def _parse_gain(block) -> GainFunction:
    if block is None:
        return GainFunction.identity()
    _require_keys(block, {"variant", "n", "strike"}, "gain")
    variant = block.get("variant", "identity")
    if variant == "identity":
        return GainFunction.identity()
    if variant == "power":
        return GainFunction.power(int(block["n"]))
    if variant == "call":
        return GainFunction.call(float(block["strike"]))
    raise ValidationError("config gain variant must be identity, power, or call")


@dataclass
class RunConfig:
    """Parsed experiment description; see the README for the schema."""

    model: AR1Model | None = None
    b: float | None = None
    x_grid: list = field(default_factory=list)
    b_lo: float | None = None
    b_hi: float | None = None
    gain: GainFunction = field(default_factory=GainFunction.identity)
    n_paths: int = 100_000
    seed: int = 0
    max_steps: int | None = None
    workers: int = 1
    out_format: str = "csv"
    out_path: str | None = None
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        _require_keys(
            raw,
            {"model", "problem", "gain", "mc", "output", "tolerances"},
            "config",
        )
        cfg = cls()
        if "model" in raw:
            block = raw["model"]
            _require_keys(block, {"lambda", "rho", "Q", "alpha", "t"}, "model")
            dist = ph_validate(block["Q"], block["alpha"])
            inn = Innovation(dist, _parse_t_block(block.get("t")))
            cfg.model = AR1Model(float(block["lambda"]), float(block["rho"]), inn)
        if "problem" in raw:
            block = raw["problem"]
            _require_keys(block, {"b", "x", "x_grid", "b_lo", "b_hi"}, "problem")
            cfg.b = float(block["b"]) if "b" in block else None
            if "x" in block and "x_grid" in block:
                raise ValidationError("give either problem.x or problem.x_grid")
            if "x" in block:
                cfg.x_grid = [float(block["x"])]
            elif "x_grid" in block:
                grid = [float(v) for v in block["x_grid"]]
                if not all(math.isfinite(v) for v in grid):
                    raise ValidationError("x_grid values must be finite")
                if any(a >= c for a, c in zip(grid, grid[1:])):
                    raise ValidationError("x_grid must be strictly ascending")
                cfg.x_grid = grid
            cfg.b_lo = float(block["b_lo"]) if "b_lo" in block else None
            cfg.b_hi = float(block["b_hi"]) if "b_hi" in block else None
        cfg.gain = _parse_gain(raw.get("gain"))
        if "mc" in raw:
            block = raw["mc"]
            _require_keys(block, {"n_paths", "seed", "max_steps", "workers"}, "mc")
            cfg.n_paths = int(block.get("n_paths", cfg.n_paths))
            cfg.seed = int(block.get("seed", cfg.seed))
            if "max_steps" in block:
                cfg.max_steps = int(block["max_steps"])
            cfg.workers = int(block.get("workers", cfg.workers))
        if "output" in raw:
            block = raw["output"]
            _require_keys(block, {"format", "path"}, "output")
            cfg.out_format = block.get("format", "csv")
            if cfg.out_format not in ("csv", "json"):
                raise ValidationError("output.format must be csv or json")
            cfg.out_path = block.get("path")
        if "tolerances" in raw:
            cfg.tolerances = {k: float(v) for k, v in raw["tolerances"].items()}
        return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a JSON object")
    return RunConfig.from_dict(raw)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render_table(columns, rows, fmt: str) -> str:
    """Serialize a table as '#'-headed CSV or a JSON object."""
    if fmt == "json":
        payload = {
            "columns": list(columns),
            "rows": [[r[c] for c in columns] for r in rows],
        }
        return json.dumps(payload, indent=2, default=_fmt) + "\n"
    lines = ["# " + ",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in columns))
    return "\n".join(lines) + "\n"


def write_output(text: str, path: str | None) -> None:
    """Write to stdout, or atomically to path (no partial files)."""
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".arphase-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _need(cfg: RunConfig, what: str):
    value = getattr(cfg, what)
    if value in (None, []):
        raise ValidationError(f"config is missing {what!r} for this command")
    return value


def cmd_passage(cfg: RunConfig) -> int:
    model = _need(cfg, "model")
    b = _need(cfg, "b")
    grid = _need(cfg, "x_grid")
    engine = TransformEngine(model)
    system = ResidueSystem(engine, b)
    columns = ["x"] + [f"phi_{i + 1}" for i in range(model.m)] + [
        "laplace_tau",
        "error_bound",
    ]
    rows = []
    for x in grid:
        ct = solve_phi(PassageProblem(engine, b, x), system)
        row = {"x": x, "laplace_tau": ct.total(), "error_bound": ct.error_bound}
        for i in range(model.m):
            row[f"phi_{i + 1}"] = float(ct.phi_vec[i])
        rows.append(row)
    write_output(render_table(columns, rows, cfg.out_format), cfg.out_path)
    return EXIT_OK


def _is_exp_identity(model: AR1Model, gain: GainFunction) -> bool:
    return (
        model.m == 1
        and model.inn.t_part.variant == "zero"
        and gain.variant == "identity"
    )


def cmd_stop(cfg: RunConfig, b_override: float | None = None) -> int:
    model = _need(cfg, "model")
    gain = cfg.gain
    engine = TransformEngine(model)

    if b_override is not None:
        # Candidate threshold family: no root solve, no verification.
        b = float(b_override)
        system = ResidueSystem(engine, b)

        def value_at(x):
            x = float(x)
            if x >= b:
                return float(gain(x))
            return psi_of(x, b, engine, gain, system)

        b_star, fit_residual, verified = b, float("nan"), False
        report = None
    else:
        if _is_exp_identity(model, gain):
            mu = -float(np.diag(model.inn.s_part.Q)[0])
            sol = solve_threshold_exp_identity(mu, model.rho, model.lam)
        else:
            b_lo = _need(cfg, "b_lo")
            b_hi = _need(cfg, "b_hi")
            sol = solve_threshold_general(engine, gain, b_lo, b_hi)
        report = verify_solution(sol, engine, gain)
        b_star, fit_residual = sol.b_star, sol.fit_residual
        value_at = sol.value_at
        verified = report.passed

    grid = cfg.x_grid or list(np.linspace(0.0, b_star + 1.0, 101))
    columns = ["x", "value", "gain"]
    rows = [
        {"x": float(x), "value": float(value_at(x)), "gain": float(gain(x))}
        for x in grid
    ]

    print(f"b_star = {_fmt(b_star)}")
    print(f"fit_residual = {_fmt(fit_residual)}")
    if report is not None:
        print(f"dominance_margin = {_fmt(report.dominance_margin)}")
        print(f"supermartingale_margin = {_fmt(report.supermartingale_margin)}")
    print(f"verified = {verified}")
    write_output(render_table(columns, rows, cfg.out_format), cfg.out_path)
    if b_override is None and not verified:
        print("warning: verification conditions failed; solution is unverified",
              file=sys.stderr)
        return EXIT_UNVERIFIED
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    model = _need(cfg, "model")
    b = _need(cfg, "b")
    grid = _need(cfg, "x_grid")
    if len(grid) != 1:
        raise ValidationError("simulate needs a single problem.x")
    x = grid[0]
    if not x < b:
        raise ValidationError(f"start x={x} must lie strictly below b={b}")

    tau, x_tau, overshoot, phase, censored = simulate_paths(
        model, x, b, cfg.n_paths, cfg.seed, cfg.max_steps, cfg.workers
    )
    disc = np.where(censored, 0.0, model.rho ** tau.astype(float))
    dist = model.inn.s_part
    n = cfg.n_paths

    columns = ["quantity", "phase", "value", "stderr"]
    rows = []
    for i in range(1, model.m + 1):
        vals = np.where(phase == i, disc, 0.0)
        rows.append({
            "quantity": "phi",
            "phase": i,
            "value": float(vals.mean()),
            "stderr": float(vals.std(ddof=1) / math.sqrt(n)),
        })
    for i in range(1, model.m + 1):
        mask = (phase == i) & ~censored
        samples = overshoot[mask]
        e_i = np.zeros(model.m)
        e_i[i - 1] = 1.0
        ks = (
            ks_statistic(samples, lambda s: cdf_vector(dist, s, init=e_i))
            if samples.size
            else float("nan")
        )
        rows.append({
            "quantity": "overshoot_ks",
            "phase": i,
            "value": ks,
            "stderr": ks_critical_value(max(int(samples.size), 1)),
        })
    payoff = np.where(censored, 0.0, disc * np.asarray(cfg.gain(x_tau)))
    rows.append({
        "quantity": "joint",
        "phase": 0,
        "value": float(payoff.mean()),
        "stderr": float(payoff.std(ddof=1) / math.sqrt(n)),
    })
    rows.append({
        "quantity": "censored_fraction",
        "phase": 0,
        "value": float(censored.mean()),
        "stderr": 0.0,
    })
    write_output(render_table(columns, rows, cfg.out_format), cfg.out_path)
    return EXIT_OK


def _example_m1():
    dist = ph_validate([[-1.0]], [1.0])
    inn = Innovation(dist, NegativePart.zero())
    return TransformEngine(AR1Model(0.5, 0.5, inn))


def _example_m2():
    dist = ph_validate([[-1.0, 0.0], [0.0, -3.0]], [0.4, 0.6])
    inn = Innovation(dist, NegativePart.zero())
    return TransformEngine(AR1Model(0.5, 0.5, inn))


def _check_laplace_id() -> float:
    """phi(u) = phi(lam u) + psi(u) at 50 points, in exponential form."""
    eng = _example_m2()
    lam = eng.model.lam
    worst = 0.0
    for u in np.linspace(0.01, 0.9, 50):
        lhs = eng.exp_phi(u)
        rhs = eng.exp_phi(lam * u) * eng.exp_psi(u)
        worst = max(worst, abs(lhs / rhs - 1.0))
    return worst


def _check_qbinomial() -> float:
    """sum_n z^n / (q;q)_n = 1 / (z;q)_inf at 20 (z, q) pairs."""
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(20):
        z = float(rng.uniform(-0.8, 0.8))
        q = float(rng.uniform(0.1, 0.8))
        total, term, poch = 0.0, 1.0, 1.0
        for k in range(1, 10_000):
            total += term / poch
            term *= z
            poch *= 1.0 - q ** k
            if abs(term / poch) < 1e-18 * max(1.0, abs(total)):
                break
        worst = max(worst, abs(total - 1.0 / q_pochhammer_inf(z, q)))
    return worst


def _check_harm1() -> float:
    """rho E(e^{delta(lam x+Z)} 1{lam x+Z >= b}) = alpha_delta e^{-lam x Q} q."""
    eng = _example_m2()
    model = eng.model
    lam, rho = model.lam, model.rho
    x, b, delta = 0.3, 1.0, 0.1
    lhs = rho * innovation_expectation(
        model.inn,
        lambda z: np.exp(delta * (lam * x + z)) * (lam * x + z >= b),
        breakpoints_z=[b - lam * x],
        tol=1e-10,
    )
    ad = eng.alpha_delta(delta, b)
    sd = model.inn.s_part.spectral
    rhs = sum(
        np.exp(lam * x * sd.mu[j]) * (ad @ sd.projectors[j] @ model.inn.s_part.q)
        for j in range(model.m)
    )
    return abs(lhs - complex(rhs).real)


def _check_harm2() -> float:
    """rho E(f(lam x+Z)) = f(x) - e^{lam x Q_1 - phi(lam Q_1)} at x = 0.3."""
    eng = _example_m1()
    model = eng.model
    lam, rho, x = model.lam, model.rho, 0.3
    lhs = rho * innovation_expectation(
        model.inn,
        lambda z: np.asarray(
            [eng.f_gamma(lam * x + zi)[0, 0].real for zi in np.atleast_1d(z)]
        ),
        tol=1e-9,
    )
    arg = lam * eng.mu[0]
    rhs = eng.f_gamma(x)[0, 0] - np.exp(x * arg) / eng.exp_phi(arg)
    return abs(lhs - rhs.real)


def _check_harm3() -> float:
    """Discrete-harmonic balance of h_{gamma,delta} at gamma = 0.5."""
    eng = _example_m2()
    model = eng.model
    lam, rho = model.lam, model.rho
    gamma, delta, x, b = 0.5, 0.1, 0.2, 1.0
    eng.check_gamma(gamma)

    def h_scalar(y):
        return eng.h_func(float(y), delta, b, gamma).real

    lhs = rho * innovation_expectation(
        model.inn,
        lambda z: np.asarray([h_scalar(lam * x + zi) for zi in np.atleast_1d(z)]),
        breakpoints_z=[b - lam * x],
        tol=1e-9,
    ) - h_scalar(x)
    ad = eng.alpha_delta(delta, b)
    sd = model.inn.s_part.spectral
    rhs = sum(
        (ad @ sd.projectors[j] @ model.inn.s_part.q)
        * (np.exp(lam * x * sd.mu[j]) - np.exp(gamma * lam * x * sd.mu[j]))
        for j in range(model.m)
    )
    return abs(lhs - complex(rhs).real)


def _check_m1_equiv() -> float:
    """Residue solver vs both single-phase closed forms."""
    eng = _example_m1()
    worst = 0.0
    for x, b in ((0.0, 1.0), (0.3, 1.0), (0.5, 2.0)):
        via_system = solve_phi(PassageProblem(eng, b, x)).total()
        general = closed_form_exp_general(x, b, eng)
        qform = closed_form_exp(x, b, 1.0, eng.model.rho, eng.model.lam)
        worst = max(worst, abs(via_system - general), abs(general - qform))
    return worst


def _check_derivative() -> float:
    """Threshold-derivative identity for the exponential closed form."""
    worst = 0.0
    for x, b in ((0.0, 1.0), (0.2, 1.5)):
        worst = max(worst, derivative_identity_check(x, b, 1.0, 0.5, 0.5))
    return worst


IDENTITY_CHECKS = {
    "laplace_id": (_check_laplace_id, 1e-10),
    "qbinomial": (_check_qbinomial, 1e-10),
    "harm1": (_check_harm1, 1e-6),
    "harm2": (_check_harm2, 1e-6),
    "harm3": (_check_harm3, 1e-6),
    "m1_equiv": (_check_m1_equiv, 1e-10),
    "derivative": (_check_derivative, 1e-5),
}


def cmd_validate(cfg: RunConfig, only: str | None = None) -> int:
    names = list(IDENTITY_CHECKS)
    if only is not None:
        if only not in IDENTITY_CHECKS:
            raise ValidationError(
                f"unknown check {only!r}; available: {', '.join(names)}"
            )
        names = [only]
    failures = []
    for name in names:
        func, tol = IDENTITY_CHECKS[name]
        tol = cfg.tolerances.get(name, tol)
        residual = func()
        status = "PASS" if residual <= tol else "FAIL"
        print(f"{name}: residual={residual:.3e} tol={tol:.1e} {status}")
        if residual > tol:
            failures.append(name)
    if failures:
        print(f"failed checks: {', '.join(failures)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arphase",
        description="Threshold times and overshoot of AR(1) processes "
        "with phase-type innovations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("passage", "crossing transform Phi(x) over an x grid"),
        ("stop", "optimal threshold and value curve"),
        ("simulate", "Monte Carlo estimates and fit statistics"),
        ("validate", "run the built-in identity suite"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", metavar="PATH", default=None)
        p.add_argument("--out", metavar="PATH", default=None)
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        if name == "simulate":
            p.add_argument("--workers", type=int, default=None)
        if name == "stop":
            p.add_argument(
                "--b-override",
                type=float,
                default=None,
                help="emit the candidate curve for this threshold "
                "instead of solving for the optimum",
            )
        if name == "validate":
            p.add_argument("--only", metavar="NAME", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.format is not None:
            cfg.out_format = args.format
        if args.out is not None:
            cfg.out_path = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.paths is not None:
            cfg.n_paths = args.paths
        if getattr(args, "workers", None) is not None:
            cfg.workers = args.workers

        if args.command == "passage":
            return cmd_passage(cfg)
        if args.command == "stop":
            return cmd_stop(cfg, b_override=args.b_override)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_validate(cfg, only=args.only)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArphaseError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc!r}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
