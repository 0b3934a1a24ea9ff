"""Command line interface: ``analyze``, ``simulate``, ``sweep`` and ``kernels``.

Exit codes: 0 synchronizes/stable, 1 does not, 2 marginal; 64 bad config or
arguments, 65 coupling without the all-ones eigenvector, 70 numerical
failure, 74 I/O failure.  Machine output goes to stdout or ``--out``;
messages go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import Config, ConfigError, DelayNode, load_config, parse_config, set_path
from .delay import KernelSet, assemble_monodromy, build_kernels
from .lti import PreconditionError
from .netsim import sync_error_series

EX_USAGE = 64
EX_DATAERR = 65
EX_SOFTWARE = 70
EX_IOERR = 74


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EX_IOERR) from exc


# -- analyze -----------------------------------------------------------------


def cmd_analyze(cfg: Config, stream=None) -> int:
    report = analysis.analyze(cfg)
    stream = stream or sys.stdout
    json.dump(report.to_json_dict(), stream)
    stream.write("\n")
    return report.verdict.exit_code


# -- simulate ----------------------------------------------------------------


def trace_rows(trace):
    n, q = trace.outputs.shape[1:]
    header = ["t", "sync_error", "state_norm"]
    for j in range(n):
        for k in range(q):
            header += [f"y_{j}_{k}_re", f"y_{j}_{k}_im"]
    rows = []
    for i, t in enumerate(trace.times):
        y = trace.outputs[i].reshape(-1)
        parts = np.empty(2 * y.size)
        parts[0::2] = y.real
        parts[1::2] = y.imag
        rows.append([t, trace.sync_error[i], trace.state_norms[i], *parts])
    return header, rows


def cmd_simulate(cfg: Config, out, seed: int | None = None, diagonal: bool = False) -> int:
    if cfg.simulation is None:
        raise CliError("simulate needs a 'simulation' section in the config", EX_USAGE)
    trace = analysis.simulate_config(cfg, seed, diagonal)
    header, rows = trace_rows(trace)
    _write_rows(out, header, rows)
    fit = sync_error_series(trace) if trace.outputs.shape[1] > 1 else None
    msg = f"wrote {len(rows)} samples to {out}; final sync_error={trace.sync_error[-1]:.3e}"
    if fit is not None:
        msg += f", fitted rate={fit.rate:.4g} (R^2={fit.r2:.4f})"
    print(msg, file=sys.stderr)
    return 0


# -- sweep -------------------------------------------------------------------


SWEEP_HEADER = ["param", "verdict", "criterion_value", "fitted_rate", "sim_verdict", "boundary"]


def _evaluate_point(raw: dict, path: str, value: float, simulate: bool, seed: int | None):
    cfg = parse_config(set_path(raw, path, value))
    report = analysis.analyze(cfg)
    rate, sim_code = math.nan, math.nan
    if simulate:
        trace = analysis.simulate_config(cfg, seed)
        rate = analysis.fitted_rate(cfg, trace)
        sim_code = 0 if rate < -cfg.analysis.margin_rate else 1
    return [value, report.verdict.exit_code, analysis.criterion_value(cfg, report), rate, sim_code]


def _bisect(lo_row, hi_row, column: int, evaluate, rel_tol: float = 1e-3):
    lo, hi = lo_row, hi_row
    while abs(hi[0] - lo[0]) > rel_tol * max(abs(lo[0]), abs(hi[0]), 1e-12):
        mid = evaluate(0.5 * (lo[0] + hi[0]))
        if mid[column] == lo[column]:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo[0] + hi[0])


def sweep(raw: dict, path: str, start: float, stop: float, steps: int, bisect: bool = False,
          seed: int | None = None):
    """Rows ``param, verdict, criterion_value, fitted_rate, sim_verdict, boundary``.

    ``boundary`` is 0 for grid points, 1 for the bisected criterion flip and 2
    for the bisected simulation flip.
    """
    if steps < 2:
        raise CliError("--steps must be >= 2", EX_USAGE)
    base = parse_config(raw)
    simulate = base.simulation is not None
    values = np.linspace(start, stop, steps)
    rows = [_evaluate_point(raw, path, float(v), simulate, seed) + [0] for v in values]
    extra = []
    if bisect:
        crit = lambda v: _evaluate_point(raw, path, v, False, seed)  # noqa: E731
        full = lambda v: _evaluate_point(raw, path, v, True, seed)  # noqa: E731
        for column, flag, evaluate in ((1, 1, crit), (4, 2, full)):
            if column == 4 and not simulate:
                continue
            for a, b in zip(rows, rows[1:]):
                if a[column] != b[column]:
                    x = _bisect(a, b, column, evaluate)
                    extra.append(_evaluate_point(raw, path, x, simulate, seed) + [flag])
                    break
    rows = sorted(rows + extra, key=lambda r: (r[0], r[5]))
    return rows


def cmd_sweep(raw: dict, path: str, start: float, stop: float, steps: int, out, bisect: bool,
              seed: int | None = None) -> int:
    rows = sweep(raw, path, start, stop, steps, bisect, seed)
    if out is None:
        sys.stdout.write(",".join(SWEEP_HEADER) + "\n")
        for r in rows:
            sys.stdout.write(",".join(fmt(v) for v in r) + "\n")
    else:
        _write_rows(out, SWEEP_HEADER, rows)
    for r in rows:
        if r[5]:
            kind = "criterion" if r[5] == 1 else "simulation"
            print(f"{kind} flip at {path} = {r[0]:.6g}", file=sys.stderr)
    return 0


# -- kernels -----------------------------------------------------------------


def _entry_names(prefix: str, rows: int, cols: int) -> list[str]:
    names = []
    for r in range(rows):
        for c in range(cols):
            names += [f"{prefix}_{r}_{c}_re", f"{prefix}_{r}_{c}_im"]
    return names


def _flat(mat: np.ndarray) -> list[float]:
    z = mat.reshape(-1)
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out.tolist()


def write_kernels(kernels: KernelSet, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out_dir}: {exc}", EX_IOERR) from exc
    n, h, tm = kernels.n, kernels.h, kernels.t_max
    d = kernels.p.shape[1]
    pc = kernels.g_left.shape[3]
    t = tm + h * np.arange(n + 1)
    s_short = h * np.arange(n + 1)
    s_long = h * np.arange(2 * n + 1)
    p_path, f_path, g_path = out_dir / "p.csv", out_dir / "f.csv", out_dir / "g.csv"
    _write_rows(p_path, ["t"] + _entry_names("p", d, d),
                ([t[i], *_flat(kernels.p[i])] for i in range(n + 1)))
    _write_rows(f_path, ["t", "s"] + _entry_names("f", d, d),
                ([t[i], s_short[l], *_flat(kernels.f[i, l])] for i in range(n + 1) for l in range(n + 1)))
    _write_rows(g_path, ["t", "s"] + _entry_names("gl", d, pc) + _entry_names("gr", d, pc),
                ([t[i], s_long[l], *_flat(kernels.g_left[i, l]), *_flat(kernels.g_right[i, l])]
                 for i in range(n + 1) for l in range(2 * n + 1)))
    return [p_path, f_path, g_path]


def _read(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _unflat(cols: np.ndarray, rows: int, c: int) -> np.ndarray:
    z = cols[:, 0::2] + 1j * cols[:, 1::2]
    return z.reshape(-1, rows, c)


def read_kernels(out_dir) -> KernelSet:
    out_dir = Path(out_dir)
    p_head, p = _read(out_dir / "p.csv")
    _, f = _read(out_dir / "f.csv")
    g_head, g = _read(out_dir / "g.csv")
    n = p.shape[0] - 1
    d = int(round(math.sqrt((len(p_head) - 1) / 2)))
    n_gl = sum(1 for h in g_head if h.startswith("gl_"))
    pc = n_gl // (2 * d)
    t_max = float(p[0, 0])
    pk = _unflat(p[:, 1:], d, d)
    fk = _unflat(f[:, 2:], d, d).reshape(n + 1, n + 1, d, d)
    gl = _unflat(g[:, 2:2 + n_gl], d, pc).reshape(n + 1, 2 * n + 1, d, pc)
    gr = _unflat(g[:, 2 + n_gl:], d, pc).reshape(n + 1, 2 * n + 1, d, pc)
    return KernelSet(t_max, n, pk, fk, gl, gr)


def cmd_kernels(cfg: Config, out_dir) -> int:
    if not isinstance(cfg.system, DelayNode):
        raise CliError("kernels needs a delay system", EX_USAGE)
    kernels = build_kernels(cfg.system.spec, cfg.system.grid)
    paths = write_kernels(kernels, out_dir)
    radius = assemble_monodromy(kernels).spectral_radius
    print(f"wrote {', '.join(str(p) for p in paths)}; spectral radius of P = {radius:.10g}", file=sys.stderr)
    return 0


# -- entry point ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netsync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        return p

    common(sub.add_parser("analyze", help="spectral stability/synchronization verdict as JSON"))
    sim = common(sub.add_parser("simulate", help="simulate the network and write a CSV trace"))
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None, help="overrides simulation.seed")
    sim.add_argument("--diagonal-init", action="store_true", help="identical initial state at every node")
    sw = common(sub.add_parser("sweep", help="sweep one scalar config entry"))
    sw.add_argument("--param", required=True, help="dotted path, e.g. system.r0 or system.a_mats.1.0.0")
    sw.add_argument("--from", dest="start", type=float, required=True)
    sw.add_argument("--to", dest="stop", type=float, required=True)
    sw.add_argument("--steps", type=int, default=11)
    sw.add_argument("--bisect", action="store_true", help="refine verdict flips to relative 1e-3")
    sw.add_argument("--out", default=None)
    sw.add_argument("--seed", type=int, default=None)
    kn = common(sub.add_parser("kernels", help="dump the delay kernels p, f, g as CSV"))
    kn.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("netsync: --seed must be unsigned", file=sys.stderr)
        return EX_USAGE
    try:
        try:
            cfg, raw = load_config(args.config)
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EX_USAGE) from exc
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.seed, args.diagonal_init)
        if args.command == "sweep":
            return cmd_sweep(raw, args.param, args.start, args.stop, args.steps, args.out, args.bisect, args.seed)
        return cmd_kernels(cfg, args.out)
    except CliError as exc:
        print(f"netsync: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"netsync: bad config: {exc}", file=sys.stderr)
        return EX_USAGE
    except PreconditionError as exc:
        print(f"netsync: {exc}", file=sys.stderr)
        return EX_DATAERR
    except (ArithmeticError, np.linalg.LinAlgError, ValueError, TypeError) as exc:
        print(f"netsync: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
