"""Command-line front end.

    difftopo run --problem mbb --nx 48 --ny 24 --volfrac 0.3 --iters 100 --out r/
    difftopo compare --problems mbb,bridge --volfracs 0.3,0.5 --out cmp/
    difftopo gradcheck --scale 1

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import NonFiniteError
from .drivers import NeuralHyper, OptimizationError, run_neural, run_simp
from .generator import GeneratorError
from .io import ensure_dir, write_csv, write_pgm
from .optim import OCParams
from .problems import OBJECTIVES, PROBLEMS, ProblemError, make_problem
from .sparse import FactorizationError, SolveError

log = logging.getLogger("difftopo")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
NUMERICAL_ERRORS = (FactorizationError, SolveError, OptimizationError, NonFiniteError,
                    FloatingPointError)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "mbb"
    nx: int = 48
    ny: int = 24
    volfrac: float = 0.3
    penalty: float = 3.0
    iters: int = 100
    method: str = "neural"
    seed: int = 0
    lr: float = 0.01
    move: float = 0.2
    eta: float = 0.5
    rmin: float = 1.5
    w: float = 0.01
    target: Optional[float] = None
    out: str = "out"
    timing: bool = True
    figures: bool = True

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise UsageError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.method not in ("neural", "simp"):
            raise UsageError(f"method must be neural or simp, got {self.method!r}")
        if self.nx < 1 or self.ny < 1:
            raise UsageError("nx and ny must be positive")
        if self.method == "neural" and (self.nx % 4 or self.ny % 4):
            raise UsageError("the neural method needs nx and ny divisible by 4")
        if not 0 < self.volfrac < 1:
            raise UsageError(f"volfrac must lie in (0, 1), got {self.volfrac}")
        if self.penalty < 1:
            raise UsageError("penalty must be >= 1")
        if self.iters < 1:
            raise UsageError("iters must be >= 1")
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if not 0 < self.move <= 1 or not 0 < self.eta <= 1:
            raise UsageError("move and eta must lie in (0, 1]")
        if self.rmin < 1:
            raise UsageError("rmin must be >= 1")
        if self.w < 0:
            raise UsageError("w must be non-negative")
        if self.method == "simp" and self.problem == "inverter":
            raise UsageError("the SIMP baseline handles mbb, cantilever and bridge only")
        if self.target is not None and self.problem != "inverter":
            raise UsageError("--target only applies to the inverter")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONVERT = {"int": int, "float": float, "str": str, "Optional[float]": float}


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _convert(key: str, raw: str):
    t = _FIELD_TYPES[key]
    if t == "bool":
        return _bool(raw)
    if t == "Optional[float]" and raw.strip().lower() in ("", "none"):
        return None
    return _CONVERT[t](raw.strip())


def read_config(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        try:
            out[key] = _convert(key, val)
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: bad value for {key}: {exc}") from None
    return out


class _Parser(argparse.ArgumentParser):
    """Usage errors raise instead of exiting with argparse's code 2."""

    def error(self, message):
        raise UsageError(message)


def _add_run_args(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="FILE", help="key = value file; flags override it")
    p.add_argument("--problem", choices=PROBLEMS, default=S)
    p.add_argument("--nx", type=int, default=S)
    p.add_argument("--ny", type=int, default=S)
    p.add_argument("--volfrac", type=float, default=S)
    p.add_argument("--penalty", type=float, default=S)
    p.add_argument("--iters", type=int, default=S)
    p.add_argument("--method", choices=("neural", "simp"), default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--lr", type=float, default=S, help="Adam step size")
    p.add_argument("--move", type=float, default=S, help="OC move limit")
    p.add_argument("--eta", type=float, default=S, help="OC damping exponent")
    p.add_argument("--rmin", type=float, default=S, help="sensitivity filter radius")
    p.add_argument("--w", type=float, default=S, help="inverter stiffness weight")
    p.add_argument("--target", type=float, default=S, help="inverter target displacement")
    p.add_argument("--out", default=S)
    p.add_argument("--no-timing", dest="timing", action="store_false", default=S,
                   help="write 0 in the seconds column (byte-reproducible output)")
    p.add_argument("--no-figures", dest="figures", action="store_false", default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="difftopo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    _add_run_args(sub.add_parser("run", help="optimize one problem"))

    c = sub.add_parser("compare", help="neural vs SIMP over problems and volume fractions")
    c.add_argument("--problems", default="mbb,cantilever,bridge")
    c.add_argument("--volfracs", default="0.3,0.4,0.5")
    c.add_argument("--nx", type=int, default=48)
    c.add_argument("--ny", type=int, default=24)
    c.add_argument("--penalty", type=float, default=3.0)
    c.add_argument("--iters", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="compare")
    c.add_argument("--no-figures", dest="figures", action="store_false")

    g = sub.add_parser("gradcheck", help="finite-difference check of every pullback")
    g.add_argument("--scale", type=int, default=1, help="multiplies the instance counts")
    g.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv=None) -> tuple[str, object]:
    """Return ``(command, config)``; ``run`` yields a validated RunConfig."""
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError("missing command (run, compare or gradcheck)")
    if ns.command != "run":
        return ns.command, ns
    given = vars(ns).copy()
    settings = read_config(given.pop("config")) if given.get("config") else {}
    given.pop("config", None)
    for k in ("command", "verbose"):
        given.pop(k)
    settings.update(given)
    return "run", RunConfig(**settings).validate()


def execute_run(cfg: RunConfig) -> dict:
    pb = make_problem(cfg.problem, cfg.nx, cfg.ny, cfg.volfrac, cfg.penalty, w=cfg.w,
                      target=cfg.target)
    if cfg.method == "neural":
        hist = run_neural(pb, cfg.iters, cfg.seed, NeuralHyper(lr=cfg.lr))
    else:
        hist = run_simp(pb, cfg.iters, OCParams(cfg.move, cfg.eta), cfg.rmin)
    out = ensure_dir(cfg.out)
    write_pgm(hist.density, out / "density.pgm")
    write_csv(hist, out / "history.csv", timing=cfg.timing)
    if cfg.figures:
        from .plotting import plot_convergence, plot_density
        plot_density(hist.density, out / "density.png", f"{cfg.problem} {cfg.method}")
        plot_convergence(hist, out / "convergence.png", logy=pb.objective != "inverter")
    return {"history": hist, "problem": pb}


def _report_run(cfg: RunConfig, hist) -> None:
    print(f"{cfg.problem} {cfg.nx}x{cfg.ny} {cfg.method}: {len(hist)} iterations")
    for k, v in hist.final.items():
        print(f"  {k:<20}{v:.9g}")
    if cfg.timing:
        print(f"  {'mean s/iter':<20}{hist.seconds.mean():.4g}")
    print(f"  written to {cfg.out}")


def execute_compare(ns) -> list[dict]:
    try:
        problems = [s.strip() for s in ns.problems.split(",") if s.strip()]
        vfs = [float(s) for s in ns.volfracs.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --volfracs: {exc}") from None
    for name in problems:
        if name not in PROBLEMS or name == "inverter":
            raise UsageError(f"compare handles mbb, cantilever, bridge; got {name!r}")
    for v in vfs:
        if not 0 < v < 1:
            raise UsageError(f"volfrac must lie in (0, 1), got {v}")
    if ns.nx % 4 or ns.ny % 4 or ns.nx < 4 or ns.ny < 4:
        raise UsageError("nx and ny must be positive multiples of 4")
    if ns.iters < 1:
        raise UsageError("iters must be >= 1")
    out = ensure_dir(ns.out)
    rows, grid = [], []
    for name in problems:
        for v in vfs:
            pb = make_problem(name, ns.nx, ns.ny, v, ns.penalty)
            hn = run_neural(pb, ns.iters, ns.seed)
            hs = run_simp(pb, ns.iters)
            dn, ds = hn.final["displacement"], hs.final["displacement"]
            rows.append({"problem": name, "volfrac": v, "neural": dn, "simp": ds,
                         "ratio": dn / ds})
            grid.append((f"{name} {v:g}", {"neural": (hn.density, dn), "simp": (hs.density, ds)}))
            log.info("%s %.2f  neural %.6g  simp %.6g", name, v, dn, ds)
    with open(out / "compare.csv", "w") as fh:
        fh.write("problem,volfrac,neural,simp,ratio\n")
        for r in rows:
            fh.write(f"{r['problem']},{r['volfrac']:g},{r['neural']:.12g},"
                     f"{r['simp']:.12g},{r['ratio']:.9g}\n")
    if ns.figures:
        from .plotting import plot_comparison
        plot_comparison(grid, out / "compare.png")
    return rows


def execute_gradcheck(ns) -> int:
    from .gradcheck import format_report, run_suite
    if ns.scale < 1:
        raise UsageError("--scale must be >= 1")
    try:
        results = run_suite(ns.scale, ns.seed)
    except NonFiniteError as exc:
        print(f"gradcheck: non-finite value: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(format_report(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        command, cfg = parse_args(argv)
    except UsageError as exc:
        print(f"difftopo: error: {exc}", file=sys.stderr)
        print(build_parser().format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    args = sys.argv[1:] if argv is None else list(argv)
    verbose = "-v" in args or "--verbose" in args
    logging.basicConfig(level=logging.INFO if verbose or command == "compare" else logging.WARNING,
                        format="%(message)s")
    try:
        if command == "run":
            res = execute_run(cfg)
            _report_run(cfg, res["history"])
        elif command == "compare":
            for r in execute_compare(cfg):
                print(f"{r['problem']:<11}{r['volfrac']:<6g}neural {r['neural']:<12.6g}"
                      f"simp {r['simp']:<12.6g}ratio {r['ratio']:.3f}")
        else:
            return execute_gradcheck(cfg)
    except UsageError as exc:
        print(f"difftopo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProblemError, GeneratorError) as exc:
        print(f"difftopo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"difftopo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"difftopo: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
