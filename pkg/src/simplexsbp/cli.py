import argparse
import logging
import sys
import time
from math import inf, isfinite
from pathlib import Path

from print9 import print9
from pydantic import BaseModel, Field, ValidationError

from simplexsbp import __version__
from simplexsbp.advection import (
    AdvectionConfig,
    build_semidiscretization,
    cfl_search,
    convergence_rate,
    energy_history,
    rate_window,
    simulate,
    spectrum,
    spectrum_summary,
)
from simplexsbp.config import (
    DEFAULT_FINAL_TIME,
    DEFAULT_SIGMA,
    DEFAULT_THREADS,
    GOLDEN_DIR,
    KNOWN_SCHEMES,
    OUTPUT_DIR,
    OUTPUT_TEMPLATES,
    SUPPORTED_DEGREES,
    SUPPORTED_DIMENSIONS,
    TOLERANCES,
)
from simplexsbp.cubature import get_rule, golden_path, save_rule, solve_cubature, verify_cubature
from simplexsbp.errors import SimplexSbpError, UnsupportedDegree
from simplexsbp.metadata import Metadata
from simplexsbp.operators import build_element_operators, save_operators, verify_sbp
from simplexsbp.utils import Utility

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
ENERGY_TOLERANCE = 1e-8


class RunManifest(BaseModel):
    subcommand: str
    argv: list[str]
    parameters: dict[str, object] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    exit_code: int = EXIT_OK
    tool_version: str = __version__
    wall_clock: float = 0.0
    metadata: Metadata = Field(default_factory=Metadata)


def parse_sizes(text: str) -> list[int]:
    """'12', '4,8,16', '4:32:x2' (also '×2' or '*2') or '4:32:+4'."""
    try:
        if ":" not in text:
            sizes = [int(part) for part in text.split(",")]
        else:
            parts = text.split(":")
            start, stop = int(parts[0]), int(parts[1])
            step = parts[2] if len(parts) > 2 else "+1"
            sizes = []
            if step[0] in "x×*":
                factor = int(step[1:])
                if factor < 2:
                    raise ValueError
                N = start
                while N <= stop:
                    sizes.append(N)
                    N *= factor
            elif step[0] == "+":
                sizes = list(range(start, stop + 1, int(step[1:])))
            else:
                raise ValueError
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"invalid size range: {text!r}")
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError(f"sizes must be >= 2. Value: {text!r}")
    return sizes


def _cases(args: argparse.Namespace) -> list[tuple[int, int]]:
    if getattr(args, "all", False):
        return [(p, d) for d in SUPPORTED_DIMENSIONS for p in SUPPORTED_DEGREES]
    if args.p is None:
        raise UnsupportedDegree(0, args.dim, SUPPORTED_DEGREES)
    return [(args.p, args.dim)]


def _check_degree(p: int, d: int = 2) -> None:
    if p not in SUPPORTED_DEGREES:
        raise UnsupportedDegree(p, d, SUPPORTED_DEGREES)
    if d not in SUPPORTED_DIMENSIONS:
        raise UnsupportedDegree(p, d, SUPPORTED_DEGREES)


def _output(args: argparse.Namespace, template: str, **fields: object) -> Path:
    return Path(args.out) / Utility.format(OUTPUT_TEMPLATES[template], fields)


def _report(ok: bool, message: str) -> None:
    print9(message, color="green" if ok else "red")


def cmd_cubature(args: argparse.Namespace, manifest: RunManifest) -> int:
    code = EXIT_OK
    for p, d in _cases(args):
        _check_degree(p, d)
        rule = solve_cubature(p, d) if args.write else get_rule(p, d)
        residual = verify_cubature(rule, 2 * p - 1)
        ok = residual <= TOLERANCES["cubature"] and rule.weights.min() > 0
        code = code if ok else EXIT_FAILURE
        manifest.outputs.append(str(save_rule(rule, _output(args, "cubature", dimension=d, degree=p))))
        if args.write:
            manifest.outputs.append(str(save_rule(rule, golden_path(p, d, GOLDEN_DIR))))
        _report(ok, f"d={d} p={p}: {rule.size} nodes, branch {rule.branch}, "
                    f"min weight {rule.weights.min():.3e}, residual {residual:.2e}")
    return code


def cmd_build_ops(args: argparse.Namespace, manifest: RunManifest) -> int:
    for p, d in _cases(args):
        _check_degree(p, d)
        ops = build_element_operators(p, d)
        path = save_operators(ops, _output(args, "operators", dimension=d, degree=p))
        manifest.outputs.append(str(path))
        _report(True, f"d={d} p={p}: {ops.size} nodes -> {path}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, manifest: RunManifest) -> int:
    code = EXIT_OK
    for p, d in _cases(args):
        _check_degree(p, d)
        report = verify_sbp(build_element_operators(p, d))
        failures = report.failures()
        path = Utility.write_json(_output(args, "verify", dimension=d, degree=p), report.model_dump())
        manifest.outputs.append(str(path))
        if failures:
            code = EXIT_FAILURE
            _report(False, f"d={d} p={p}: FAILED " + ", ".join(f"{k}={v:.2e}" for k, v in failures.items()))
        else:
            _report(True, f"d={d} p={p}: passed (accuracy {max(report.accuracy):.1e}, tau {report.tau})")
    return code


def _advection_overrides(args: argparse.Namespace) -> dict[str, object]:
    return {"sigma": args.sigma, "final_time": args.final_time, "threads": args.threads}


def cmd_converge(args: argparse.Namespace, manifest: RunManifest) -> int:
    _check_degree(args.p)
    results = []
    for N in args.n:
        config = AdvectionConfig(scheme=args.scheme, degree=args.p, N=N, cfl=args.cfl, **_advection_overrides(args))
        result, field = simulate(config)
        results.append(result)
        print(f"N={N:4d}  error={result.error:.4e}  cpu={result.cpu_time:.2f}s")
        if args.fields:
            path = Utility.write_csv(
                _output(args, "fields", scheme=args.scheme, degree=args.p, N=N),
                ["x", "y", "u", "exact", "error"],
                field.rows(),
            )
            manifest.outputs.append(str(path))

    path = Utility.write_csv(
        _output(args, "convergence", scheme=args.scheme, degree=args.p),
        ["scheme", "p", "N", "h", "normalized_error", "cpu_time"],
        [[r.scheme, r.degree, r.N, r.h, r.error, r.cpu_time] for r in results],
    )
    manifest.outputs.append(str(path))
    if len(results) < 2:
        return EXIT_OK

    slope = convergence_rate([r.h for r in results], [r.error for r in results])
    window = rate_window(args.scheme, args.p)
    if args.min_rate is not None or args.max_rate is not None:
        low, high = window or (-inf, inf)
        window = (low if args.min_rate is None else args.min_rate, high if args.max_rate is None else args.max_rate)
    manifest.parameters["slope"] = slope
    manifest.parameters["rate_window"] = [v if isfinite(v) else None for v in window] if window else None
    ok = window is None or window[0] <= slope <= window[1]
    expected = f", expected [{window[0]:.2f}, {window[1]:.2f}]" if window else ""
    _report(ok, f"{KNOWN_SCHEMES[args.scheme]['label']} p={args.p}: fitted slope {slope:.3f}{expected}")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_spectrum(args: argparse.Namespace, manifest: RunManifest) -> int:
    _check_degree(args.p)
    code = EXIT_OK
    for N in args.n:
        semi = build_semidiscretization(args.scheme, args.p, N)
        eigenvalues = spectrum(semi.ops)
        summary = spectrum_summary(eigenvalues)
        path = Utility.write_csv(
            _output(args, "spectrum", scheme=args.scheme, degree=args.p, N=N),
            ["re", "im"],
            [[float(z.real), float(z.imag)] for z in eigenvalues],
        )
        manifest.outputs.append(str(path))
        ok = args.scheme == "cse" or summary["relative_real"] <= TOLERANCES["spectrum"]
        code = code if ok else EXIT_FAILURE
        _report(ok, f"{args.scheme} p={args.p} N={N}: max Re {summary['max_real']:.3e}, "
                    f"radius {summary['spectral_radius']:.3e}")
    return code


def cmd_energy(args: argparse.Namespace, manifest: RunManifest) -> int:
    _check_degree(args.p)
    code = EXIT_OK
    for N in args.n:
        config = AdvectionConfig(scheme=args.scheme, degree=args.p, N=N, cfl=args.cfl, **_advection_overrides(args))
        history = energy_history(config)
        path = Utility.write_csv(
            _output(args, "energy", scheme=args.scheme, degree=args.p, N=N),
            ["t", "delta_E"],
            [list(row) for row in history],
        )
        manifest.outputs.append(str(path))
        worst = max(delta for _, delta in history)
        ok = args.scheme == "cse" or worst <= ENERGY_TOLERANCE
        code = code if ok else EXIT_FAILURE
        _report(ok, f"{args.scheme} p={args.p} N={N}: final dE {history[-1][1]:.3e}, max dE {worst:.3e}")
    return code


def cmd_cfl(args: argparse.Namespace, manifest: RunManifest) -> int:
    rows = []
    for p in args.p:
        _check_degree(p)
        result = cfl_search(args.scheme, p, args.n[0], **_advection_overrides(args))
        published = KNOWN_SCHEMES[args.scheme]["cfl_max"][p]
        rows.append([args.scheme, p, result.cfl_max, published, result.flagged])
        _report(not result.flagged, f"{args.scheme} p={p}: CFL_max {result.cfl_max:.3f} (published {published:.3f})")
    path = Utility.write_csv(
        _output(args, "cfl", scheme=args.scheme),
        ["scheme", "p", "cfl_max", "published", "flagged"],
        rows,
    )
    manifest.outputs.append(str(path))
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, manifest: RunManifest) -> int:
    previous = RunManifest(**Utility.read_json(args.manifest))
    if previous.subcommand == "replay":
        raise SimplexSbpError("A replay manifest cannot be replayed.")
    manifest.parameters["replayed"] = str(args.manifest)
    return main(previous.argv)


COMMANDS = {
    "cubature": cmd_cubature,
    "build-ops": cmd_build_ops,
    "verify": cmd_verify,
    "converge": cmd_converge,
    "spectrum": cmd_spectrum,
    "energy": cmd_energy,
    "cfl": cmd_cfl,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simplexsbp", description="Diagonal-norm SBP operators on simplices.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--out", default=str(OUTPUT_DIR), help="output directory")

    for name in ("cubature", "build-ops", "verify"):
        sub = subparsers.add_parser(name)
        sub.add_argument("--p", type=int)
        sub.add_argument("--dim", type=int, default=2)
        sub.add_argument("--all", action="store_true", help="p=1..4 for d=2 and d=3")
        if name == "cubature":
            sub.add_argument("--write", action="store_true", help="solve afresh and freeze into the golden directory")
        common(sub)

    defaults = {"converge": ("dsbp", "4:32:x2", None, DEFAULT_FINAL_TIME),
                "spectrum": ("csbp", "12", None, DEFAULT_FINAL_TIME),
                "energy": ("csbp", "12", 0.01, 2.0),
                "cfl": ("csbp", "32", None, DEFAULT_FINAL_TIME)}
    for name, (scheme, sizes, cfl, final_time) in defaults.items():
        sub = subparsers.add_parser(name)
        # spectra need the assembled operators
        schemes = ["csbp", "cse"] if name == "spectrum" else list(KNOWN_SCHEMES)
        sub.add_argument("--scheme", choices=schemes, default=scheme)
        if name == "cfl":
            sub.add_argument("--p", type=int, nargs="+", default=list(SUPPORTED_DEGREES))
        else:
            sub.add_argument("--p", type=int, required=True)
        sub.add_argument("--n", type=parse_sizes, default=parse_sizes(sizes))
        sub.add_argument("--cfl", type=float, default=cfl)
        sub.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
        sub.add_argument("--final-time", type=float, default=final_time)
        sub.add_argument("--threads", type=int, default=DEFAULT_THREADS)
        if name == "converge":
            sub.add_argument("--fields", action="store_true", help="write the final error field of every run")
            sub.add_argument("--min-rate", type=float, help="override the lower end of the accepted slope")
            sub.add_argument("--max-rate", type=float, help="override the upper end of the accepted slope")
        common(sub)

    sub = subparsers.add_parser("replay")
    sub.add_argument("manifest", type=Path)
    common(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    manifest = RunManifest(
        subcommand=args.command,
        argv=argv,
        parameters={k: v for k, v in vars(args).items() if k not in ("command",)},
    )
    started = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, manifest)
    except (UnsupportedDegree, ValidationError) as exc:
        _report(False, str(exc))
        return EXIT_USAGE
    except SimplexSbpError as exc:
        _report(False, f"{type(exc).__name__}: {exc}")
        code = EXIT_FAILURE

    manifest.exit_code = code
    manifest.wall_clock = time.perf_counter() - started
    path = _output(args, "manifest", subcommand=args.command)
    Utility.write_json(path, manifest.model_dump(mode="json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
