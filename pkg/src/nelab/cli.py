"""Command-line front end: ``nelab {gen,energy,minimize,converge,holonomy,check}``."""
from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import _parallel
from .body import (MorphismStats, classify_convergence, read_bodyconf, read_bodymesh,
                   write_bodyconf, write_bodymesh)
from .constructions import (DislocationParams, Regime, cone_mesh, dipole_pairs, dislocation_block,
                            dislocation_lattice, euclidean_triangulation, flat_disc, flat_square,
                            edge_loop, holonomy, lattice_params, spherical_cap)
from .energy import EnergySettings, total_energy
from .errors import ConfigError, DomainError, FormatError
from .solve import (SequenceResult, SequenceRow, SolveOptions, gamma_experiment,
                    initial_configuration, minimize, triangulation_experiment)

log = logging.getLogger("nelab")

CSV_HEADER = ("n", "min_energy", "grad_norm", "sup_dis", "mean_dis", "mean_dis_inv", "bilip",
              "vol_ratio_dev", "global_dis", "minimizer_lp_dist")

METRICS = {"spherical-cap": spherical_cap}


# -- results CSV -------------------------------------------------------------------

def _g(x: float) -> str:
    return "%.17g" % x


def format_results(result: SequenceResult) -> str:
    lines = [",".join(CSV_HEADER)]
    for r in result.rows:
        vals = [str(int(r.n)), _g(r.min_energy), _g(r.grad_norm), *map(_g, r.stats.as_tuple()),
                _g(r.minimizer_lp_dist)]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def emit_results(result: SequenceResult, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(format_results(result))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def parse_results(text: str) -> SequenceResult:
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split(",")) != CSV_HEADER:
        raise FormatError("results header mismatch")
    out = SequenceResult()
    for k, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(CSV_HEADER):
            raise FormatError(f"line {k}: expected {len(CSV_HEADER)} fields")
        try:
            n, vals = int(parts[0]), [float(x) for x in parts[1:]]
        except ValueError as exc:
            raise FormatError(f"line {k}: {exc}") from None
        out.rows.append(SequenceRow(n, vals[0], vals[1], MorphismStats(*vals[2:8]), vals[8]))
    return out


def read_results(path) -> SequenceResult:
    return parse_results(Path(path).read_text())


# -- experiment config ---------------------------------------------------------------

SCHEMA = {
    "generator": {"kind", "mode", "theta0", "epsilon", "refinement", "metric", "n_ref"},
    "energy": {"p", "dis_floor"},
    "solver": {"max_iters", "grad_tol", "armijo_c", "backtrack", "seed", "precondition", "cold_start"},
    "experiment": {"n_list"},
    "output": {"csv", "figure"},
}


@dataclass
class ExperimentConfig:
    kind: str = "lattice"
    mode: Regime = Regime.UNIFORM
    theta0: float = 0.3
    epsilon: float = 0.5
    refinement: int = 1
    metric: str = "spherical-cap"
    n_ref: int = 64
    energy: EnergySettings = field(default_factory=EnergySettings)
    solver: SolveOptions = field(default_factory=SolveOptions)
    cold_start: bool = False
    n_list: tuple[int, ...] = (2, 4, 8, 16)
    csv: Path | None = None
    figure: Path | None = None

    def generator(self):
        if self.kind != "lattice":
            raise ConfigError("generator is only defined for kind = lattice")
        return lambda n: dislocation_lattice(n, self.mode, self.theta0, self.epsilon, self.refinement)

    def run(self) -> SequenceResult:
        if self.kind == "lattice":
            return gamma_experiment(self.generator(), self.n_list, self.energy, self.solver, self.cold_start)
        return triangulation_experiment(METRICS[self.metric], self.n_list, self.n_ref, self.energy, self.solver)


def _conv(section: str, key: str, raw: str, fn):
    try:
        return fn(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def parse_config(text: str, base: Path | None = None) -> ExperimentConfig:
    """Parse and fully validate an INI experiment description."""
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        extra = set(cp[sec]) - SCHEMA[sec]
        if extra:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(extra))}")

    def get(sec, key, fn, default):
        if cp.has_option(sec, key):
            return _conv(sec, key, cp[sec][key], fn)
        return default

    cfg = ExperimentConfig()
    cfg.kind = get("generator", "kind", str.strip, cfg.kind)
    if cfg.kind not in ("lattice", "triangulation"):
        raise ConfigError(f"[generator] kind: unknown generator {cfg.kind!r}")
    cfg.mode = get("generator", "mode", lambda s: Regime(s.strip()), cfg.mode)
    cfg.theta0 = get("generator", "theta0", float, cfg.theta0)
    cfg.epsilon = get("generator", "epsilon", float, cfg.epsilon)
    cfg.refinement = get("generator", "refinement", int, cfg.refinement)
    cfg.metric = get("generator", "metric", str.strip, cfg.metric)
    cfg.n_ref = get("generator", "n_ref", int, cfg.n_ref)
    cfg.n_list = get("experiment", "n_list", lambda s: tuple(int(x) for x in s.replace(",", " ").split()),
                     cfg.n_list)
    cfg.cold_start = get("solver", "cold_start", _bool, False)
    try:
        cfg.energy = EnergySettings(p=get("energy", "p", float, 2.0),
                                    dis_floor=get("energy", "dis_floor", float, 1e-12))
        d = SolveOptions()
        cfg.solver = SolveOptions(
            max_iters=get("solver", "max_iters", int, d.max_iters),
            grad_tol=get("solver", "grad_tol", float, d.grad_tol),
            armijo_c=get("solver", "armijo_c", float, d.armijo_c),
            backtrack=get("solver", "backtrack", float, d.backtrack),
            seed=get("solver", "seed", int, d.seed),
            precondition=get("solver", "precondition", _bool, d.precondition),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    base = base or Path(".")
    if cp.has_option("output", "csv"):
        cfg.csv = base / cp["output"]["csv"].strip()
    if cp.has_option("output", "figure"):
        cfg.figure = base / cp["output"]["figure"].strip()

    # range validation before any computation
    if not cfg.n_list or any(n < 1 for n in cfg.n_list) or len(set(cfg.n_list)) != len(cfg.n_list):
        raise ConfigError("[experiment] n_list must hold distinct positive integers")
    if cfg.energy.p < 2.0:
        raise ConfigError("[energy] p must be >= 2 for minimization")
    if cfg.kind == "lattice":
        if not (0 < cfg.theta0 <= math.pi / 4):
            raise ConfigError("[generator] theta0 must lie in (0, pi/4]")
        if not (0 < cfg.epsilon < 1):
            raise ConfigError("[generator] epsilon must lie in (0, 1)")
        if cfg.refinement < 1:
            raise ConfigError("[generator] refinement must be >= 1")
        for n in cfg.n_list:
            try:
                lattice_params(n, cfg.mode, cfg.theta0, cfg.epsilon)
            except DomainError as exc:
                raise ConfigError(f"[generator] n = {n}: {exc}") from None
    else:
        if cfg.metric not in METRICS:
            raise ConfigError(f"[generator] metric: unknown metric {cfg.metric!r}")
        for n in cfg.n_list:
            k = cfg.n_ref // n if n and cfg.n_ref % n == 0 else 0
            if n < 2 or k < 1 or k & (k - 1):
                raise ConfigError("[experiment] each n must be >= 2 and divide n_ref by a power of two")
    return cfg


def read_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)


# -- subcommands ---------------------------------------------------------------------

def _cmd_gen(a) -> int:
    k = a.kind
    if k == "flat-square":
        mesh = flat_square(a.n, a.side)
    elif k == "flat-disc":
        mesh = flat_disc(a.r_max, a.resolution)
    elif k == "cone":
        mesh = cone_mesh(a.alpha, a.r_max, a.resolution)
    elif k == "block":
        mesh = dislocation_block(DislocationParams(a.theta, a.d, a.block_size), a.refinement)
    elif k in ("lattice", "lattice-limit"):
        pair = dislocation_lattice(a.n, a.mode, a.theta0, a.epsilon, a.refinement)
        mesh = pair[k == "lattice-limit"]
    else:
        mesh = euclidean_triangulation(METRICS[a.metric], a.n)
    write_bodymesh(mesh, a.out)
    print(f"wrote {a.out}: {mesh.vertex_count} vertices, {mesh.triangle_count} triangles")
    if a.loop_out:
        if k != "block":
            raise ConfigError("--loop-out is only available with --kind block")
        loop = edge_loop(mesh, *dipole_pairs(mesh)[0])
        Path(a.loop_out).write_text("".join(f"{t}\n" for t in loop))
        print(f"wrote {a.loop_out}: {len(loop)} triangles")
    return 0


def _settings(a) -> EnergySettings:
    return EnergySettings(p=a.p, dis_floor=a.dis_floor)


def _cmd_energy(a) -> int:
    mesh = read_bodymesh(a.mesh)
    rep = total_energy(mesh, read_bodyconf(a.conf), _settings(a))
    print(f"total={rep.total:.17g} grad_norm={rep.grad_norm:.17g}")
    return 0


def _cmd_minimize(a) -> int:
    mesh = read_bodymesh(a.mesh)
    opts = SolveOptions(max_iters=a.max_iters, grad_tol=a.grad_tol, seed=a.seed,
                        precondition=not a.plain_gradient)
    u0 = read_bodyconf(a.init) if a.init else initial_configuration(mesh, a.seed)
    res = minimize(mesh, u0, _settings(a), opts)
    write_bodyconf(res.configuration, a.out)
    print(f"energy={res.report.total:.17g} grad_norm={res.report.grad_norm:.17g} "
          f"iterations={res.iterations} stop={res.reason}")
    return 0


def _cmd_converge(a) -> int:
    cfg = read_config(a.config)
    if a.out:
        cfg.csv = Path(a.out)
    if a.figure:
        cfg.figure = Path(a.figure)
    if cfg.csv is None:
        raise ConfigError("no output path: set [output] csv or pass --out")
    if cfg.figure is None and not a.no_figure:
        cfg.figure = cfg.csv.with_suffix(".png")
    if a.no_figure:
        cfg.figure = None
    result = cfg.run()
    emit_results(result, cfg.csv)
    print(f"wrote {cfg.csv} ({len(result.rows)} rows); "
          f"classification {classify_convergence([r.stats for r in result.rows]).value}")
    if cfg.figure is not None:
        from .report import plot_sequence
        plot_sequence(result, cfg.figure, title=f"{cfg.kind} {cfg.mode.value if cfg.kind == 'lattice' else cfg.metric}")
        print(f"wrote {cfg.figure}")
    return 0


def read_loop(path) -> list[int]:
    out = []
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        try:
            out.append(int(s))
        except ValueError:
            raise FormatError(f"loop file line {k}: not a triangle index") from None
    return out


def _cmd_holonomy(a) -> int:
    mesh = read_bodymesh(a.mesh)
    loop = read_loop(a.loop)
    if any(t < 0 or t >= mesh.triangle_count for t in loop):
        raise FormatError("loop references a triangle outside the mesh")
    h = holonomy(mesh, loop)
    print(f"rotation_angle={h.rotation_angle:.17g} translation={h.translation[0]:.17g},{h.translation[1]:.17g} "
          f"|translation|={h.translation_norm:.17g}")
    return 0


def _cmd_check(a) -> int:
    from .checks import check_names, run_checks
    if a.list:
        print("\n".join(check_names(experiments=True)))
        return 0
    try:
        results = run_checks(a.only or None, a.experiments)
        failed = 0
        for r in results:
            failed += not r.passed
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.2f}s): {r.detail}", flush=True)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    print(f"{failed} failed")
    return 1 if failed else 0


# -- entry point -----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: usage error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nelab", description="Non-Euclidean elasticity on intrinsic triangle meshes.")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: all CPUs)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def energy_flags(p):
        p.add_argument("--p", type=float, default=2.0)
        p.add_argument("--dis-floor", type=float, default=1e-12)

    g = sub.add_parser("gen", help="generate a bodymesh file")
    g.add_argument("--kind", required=True,
                   choices=["flat-square", "flat-disc", "cone", "block", "lattice", "lattice-limit", "triangulation"])
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--side", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=0.8)
    g.add_argument("--r-max", type=float, default=1.0)
    g.add_argument("--resolution", type=int, default=16)
    g.add_argument("--theta", type=float, default=0.3)
    g.add_argument("--d", type=float, default=0.05)
    g.add_argument("--block-size", type=float, default=1.0)
    g.add_argument("--refinement", type=int, default=1)
    g.add_argument("--mode", default=Regime.UNIFORM.value, choices=[r.value for r in Regime])
    g.add_argument("--theta0", type=float, default=0.3)
    g.add_argument("--epsilon", type=float, default=0.5)
    g.add_argument("--metric", choices=sorted(METRICS), default="spherical-cap")
    g.add_argument("--out", required=True)
    g.add_argument("--loop-out", help="block only: also write the triangle loop around the dipole")
    g.set_defaults(func=_cmd_gen)

    e = sub.add_parser("energy", help="evaluate the energy of a configuration")
    e.add_argument("--mesh", required=True)
    e.add_argument("--conf", required=True)
    energy_flags(e)
    e.set_defaults(func=_cmd_energy)

    m = sub.add_parser("minimize", help="minimize the energy on a mesh")
    m.add_argument("--mesh", required=True)
    m.add_argument("--init", help="starting bodyconf (default: seeded Tutte layout)")
    m.add_argument("--out", required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--max-iters", type=int, default=5000)
    m.add_argument("--grad-tol", type=float, default=1e-8)
    m.add_argument("--plain-gradient", action="store_true", help="disable the Laplacian preconditioner")
    energy_flags(m)
    m.set_defaults(func=_cmd_minimize)

    c = sub.add_parser("converge", help="run a convergence experiment and write the results CSV")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="CSV path (overrides [output] csv)")
    c.add_argument("--figure", help="figure path (default: CSV path with .png)")
    c.add_argument("--no-figure", action="store_true")
    c.set_defaults(func=_cmd_converge)

    h = sub.add_parser("holonomy", help="holonomy of a closed triangle strip")
    h.add_argument("--mesh", required=True)
    h.add_argument("--loop", required=True, help="file with one triangle index per line")
    h.set_defaults(func=_cmd_holonomy)

    k = sub.add_parser("check", help="run the invariant and property suite")
    k.add_argument("--experiments", action="store_true", help="include the sequence experiments")
    k.add_argument("--only", nargs="+", metavar="NAME")
    k.add_argument("--list", action="store_true")
    k.set_defaults(func=_cmd_check)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2), format="%(name)s: %(message)s")
    try:
        if a.threads is not None and a.threads < 1:
            raise ConfigError("--threads must be positive")
        _parallel.set_threads(a.threads)
        return a.func(a)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # parameter-range violations raised by settings types
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
