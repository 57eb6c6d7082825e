"""Scan orchestration, persistence and the ``btzone`` command line.

Dataset files are UTF-8 CSV: ``# key=value`` header lines, then rows
``x,log_S,width,error_exponent`` with full-precision decimals.  Rows are
appended one ``write`` per row, so an interrupted scan leaves a valid prefix
that ``--resume`` extends; at the end of a scan the rows are put back in grid
order (a retried node is appended last).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import gmpy2
from gmpy2 import mpfr

from . import asymptotics as asy
from .maps import KINDS, MapFamily, leading_width, log_leading_width, main_from_scaling
from .numerics import PrecisionContext, format_decimal, log10_abs, parse_decimal
from .splitting import (SplittingConfig, SplittingProblem, default_delta, find_primary_homoclinic,
                        width_complex, width_real, width_tangency)

log = logging.getLogger("btzone")

METHODS = ("real", "complex", "both", "tangency")
EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2


@dataclass(frozen=True)
class ScanConfig:
    family: str
    gamma: str = "0"
    c: str = "1e-4"
    d: str = "1e-2"
    nodes: int = 8
    method: str = "tangency"
    delta_policy: str = "half"  # half | third | <decimal value>
    digits_target: int = 20
    digits: int | None = None  # overrides the schedule when set
    guard: int = 30
    out: str = "runs/scan"
    workers: int = 1
    seed: int = 0
    stable_fraction: float = 0.125

    def __post_init__(self):
        if self.family not in KINDS:
            raise ValueError(f"family must be one of {KINDS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0 < float(self.c) < float(self.d):
            raise ValueError("need 0 < c < d")
        if self.nodes < 4:
            raise ValueError("need at least 4 nodes")

    @property
    def map_family(self) -> MapFamily:
        return MapFamily(self.family, "0" if self.family == "henon" else self.gamma)

    def fingerprint(self) -> str:
        keep = {k: v for k, v in asdict(self).items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()[:16]


def _x_bounds(fam: MapFamily, c, d):
    p = mpfr(1) / 2 if fam.kind == "bogdanov" else mpfr(1) / 4
    return mpfr(c) ** p, mpfr(d) ** p


def _main_from_distance(fam: MapFamily, dist):
    """Main parameter from the scanned distance to the BT point (|1 - at| for henon)."""
    return 1 - dist if fam.kind == "henon" else dist


def working_digits(cfg: ScanConfig) -> int:
    """D = ceil(|log10 K|) + target + 50 at the smallest node (plus the strip gain for complex)."""
    if cfg.digits is not None:
        return int(cfg.digits)
    fam = cfg.map_family
    with gmpy2.context(gmpy2.get_context(), precision=200):
        main = _main_from_distance(fam, mpfr(cfg.c))
        lk = float(log_leading_width(fam, main)) / math.log(10)
    return int(math.ceil(abs(lk))) + cfg.digits_target + 50


def node_grid(cfg: ScanConfig):
    """Equally spaced x nodes, as canonical decimal strings."""
    D = working_digits(cfg)
    ctx = PrecisionContext(D, cfg.guard)
    fam = cfg.map_family
    with ctx.local():
        a, b = _x_bounds(fam, parse_decimal(cfg.c, ctx), parse_decimal(cfg.d, ctx))
        n = cfg.nodes
        return [format_decimal(a + (b - a) * i / (n - 1), D) for i in range(n)]


def _delta(problem: SplittingProblem, policy: str):
    rho = problem.strip_halfwidth
    if policy == "half":
        return rho / 2
    if policy == "third":
        return rho / 3
    return mpfr(policy)


def compute_node(cfg: ScanConfig, x_text: str) -> dict:
    """Everything for one node; returns a plain dict of decimal strings."""
    t0 = time.perf_counter()
    D = working_digits(cfg)
    ctx = PrecisionContext(D, cfg.guard)
    fam = cfg.map_family
    with ctx.local():
        x = parse_decimal(x_text, ctx)
        main = main_from_scaling(fam, x)
        problem = SplittingProblem(fam, main, ctx, SplittingConfig(stable_fraction=cfg.stable_fraction))
        frame = find_primary_homoclinic(problem)
        rec = {"x": x_text, "main": format_decimal(main, D)}
        if cfg.method in ("real", "both"):
            est = width_real(problem, frame)
        elif cfg.method == "tangency":
            est = width_tangency(problem, frame)
        else:
            est = width_complex(problem, _delta(problem, cfg.delta_policy))
        K = leading_width(fam, main)
        rec.update(width=format_decimal(est.value, D), log_s=format_decimal(gmpy2.log(est.value / K), D),
                   error_exponent=f"{est.error_exponent:.2f}")
        if cfg.method == "both":
            Zr = est.value
            delta = _delta(problem, cfg.delta_policy)
            ec = width_complex(problem, delta, scale_hint=abs(est.extra["Rm1"]))
            Zc = ec.value
            Cm1 = abs(ec.extra["Cm1"])
            rec.update(
                width_complex=format_decimal(Zc, D),
                log10_zr=f"{log10_abs(Zr):.6f}",
                log10_diff=f"{log10_abs(Zr - Zc):.6f}",
                log10_e2pid=f"{log10_abs(ec.extra['exp2pidelta']):.6f}",
                log10_cm1=f"{log10_abs(Cm1):.6f}",
                log10_rm1=f"{log10_abs(est.extra['Rm1']):.6f}",
                rel_diff=format_decimal(abs(Zr - Zc) / Zr, 12),
                bound=format_decimal(10 * Cm1 * ec.extra["exp2pidelta"], 12),
                delta=format_decimal(delta, 12),
            )
        rec["seconds"] = f"{time.perf_counter() - t0:.2f}"
        return rec


def _safe_node(args):
    cfg, x = args
    try:
        return compute_node(cfg, x)
    except Exception as exc:  # recorded, the scan continues
        return {"x": x, "error": f"{type(exc).__name__}: {exc}"}


# -- dataset files ---------------------------------------------------------------------------

DATA_COLUMNS = ("x", "log_S", "width", "error_exponent")
COMPARE_COLUMNS = ("main", "log10_zr", "log10_diff", "log10_e2pid", "log10_cm1", "log10_rm1",
                   "rel_diff", "bound", "delta")


def dataset_header(cfg: ScanConfig) -> dict:
    return {
        "family": cfg.family,
        "gamma": cfg.gamma if cfg.family != "henon" else "0",
        "digits": str(working_digits(cfg)),
        "guard": str(cfg.guard),
        "method": "real" if cfg.method == "both" else cfg.method,
        "range": f"{cfg.c}:{cfg.d}",
        "nodes": str(cfg.nodes),
        "created": cfg.fingerprint(),
    }


def _read_lines(path: Path):
    text = path.read_text(encoding="utf-8")
    if text and not text.endswith("\n"):  # torn final row from an interrupted write
        text = text[: text.rfind("\n") + 1]
        path.write_text(text, encoding="utf-8")
    return text.splitlines()


def read_dataset(path) -> asy.WidthDataset:
    path = Path(path)
    meta = {}
    rows = []
    for line in _read_lines(path):
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip() and not line.startswith("x,"):
            rows.append(line.split(","))
    digits = int(meta.get("digits", "100"))
    ctx = PrecisionContext(digits, int(meta.get("guard", "30")))
    fam = MapFamily(meta["family"], meta.get("gamma", "0"))
    with ctx.local():
        nodes = [asy.WidthNode(parse_decimal(r[0], ctx), parse_decimal(r[1], ctx),
                               parse_decimal(r[2], ctx), float(r[3])) for r in rows]
    nodes.sort(key=lambda n: n.x)
    c, _, d = meta.get("range", ":").partition(":")
    return asy.WidthDataset(fam, nodes, digits, meta.get("method", ""), c, d, meta)


def _existing_x(path: Path):
    if not path.exists():
        return []
    return [ln.split(",")[0] for ln in _read_lines(path) if ln and not ln.startswith(("#", "x,"))]


def _append(path: Path, line: str):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


@dataclass
class RunReport:
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    skipped: int = 0

    @property
    def status(self) -> int:
        if not self.failures:
            return EXIT_OK
        return EXIT_PARTIAL


def scan_widths(cfg: ScanConfig, resume: bool = True, limit: int | None = None) -> RunReport:
    """Compute the dataset for ``cfg`` under ``cfg.out``.

    ``limit`` stops after that many new nodes (used to simulate an interrupted run).
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data = out / "dataset.csv"
    cmp_path = out / "comparison.csv"
    fail_path = out / "failures.csv"
    grid = node_grid(cfg)
    if data.exists() and not resume:
        raise FileExistsError(f"{data} exists; pass --resume to extend it")
    done = set(_existing_x(data))
    if not data.exists():
        hdr = "".join(f"# {k}={v}\n" for k, v in dataset_header(cfg).items())
        data.write_text(hdr + ",".join(DATA_COLUMNS) + "\n", encoding="utf-8")
        if cfg.method == "both":
            cmp_path.write_text("x," + ",".join(COMPARE_COLUMNS) + "\n", encoding="utf-8")
    todo = [x for x in grid if x not in done]
    if limit is not None:
        todo = todo[:limit]
    report = RunReport(skipped=len(grid) - len(todo))
    jobs = [(cfg, x) for x in todo]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = pool.map(_safe_node, jobs)
            _consume(results, cfg, data, cmp_path, fail_path, report, len(grid))
    else:
        _consume(map(_safe_node, jobs), cfg, data, cmp_path, fail_path, report, len(grid))
    _canonical_order(data, grid)
    if cfg.method == "both":
        _canonical_order(cmp_path, grid)
    return report


def _canonical_order(path: Path, grid):
    """Rewrite rows in grid order (a retried node lands at the end); atomic replace."""
    lines = _read_lines(path)
    head = [ln for ln in lines if ln.startswith("#") or ln.startswith("x,")]
    rank = {x: i for i, x in enumerate(grid)}
    rows = [ln for ln in lines if ln and ln not in head]
    ordered = sorted(rows, key=lambda ln: rank.get(ln.split(",")[0], len(rank)))
    if ordered == rows:
        return
    tmp = path.with_suffix(".tmp")
    tmp.write_text("\n".join(head + ordered) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _consume(results, cfg, data, cmp_path, fail_path, report, total):
    for rec in results:
        if "error" in rec:
            report.failures.append(rec)
            log.warning("node %s failed: %s", rec["x"], rec["error"])
            if not fail_path.exists():
                fail_path.write_text("x,reason\n", encoding="utf-8")
            row = f"{rec['x']},{rec['error'].replace(',', ';')}"
            if row not in _read_lines(fail_path):  # a resumed run retries, but logs once
                _append(fail_path, row)
            if len(report.failures) > 0.25 * total:
                raise RuntimeError(f"more than 25% of the {total} nodes failed")
            continue
        report.records.append(rec)
        log.info("node x=%.10g  log S=%.15g  (%ss)", float(rec["x"]), float(rec["log_s"]), rec["seconds"])
        _append(data, f"{rec['x']},{rec['log_s']},{rec['width']},{rec['error_exponent']}")
        if cfg.method == "both":
            _append(cmp_path, rec["x"] + "," + ",".join(rec[c] for c in COMPARE_COLUMNS))


def read_comparison(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, ln.split(","))) for ln in lines[1:] if ln]


# -- coefficients files --------------------------------------------------------------------

def write_coefficients(coeffs: asy.ExpansionCoefficients, path, digits: int) -> None:
    lines = ["index,label,name,value"]
    for i, label, value in coeffs.records():
        lines.append(f"{i},{label},{coeffs.sequence.stream_name(i)},{format_decimal(value, digits)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_coefficients(path, family: MapFamily, digits: int, basis: str | None = None):
    ctx = PrecisionContext(digits)
    seq = asy.AsymptoticSequence.for_family(family)
    if basis:
        seq = replace(seq, kind=basis)
    with ctx.local():
        vals = [parse_decimal(ln.split(",")[-1], ctx)
                for ln in Path(path).read_text(encoding="utf-8").splitlines()[1:] if ln]
    return asy.ExpansionCoefficients(seq, vals)


def coefficient_table(coeffs: asy.ExpansionCoefficients, shown: int = 20, digits: int = 12) -> str:
    rows = [f"{'coef.':<8}{'scale':<22}value"]
    for i, label, value in coeffs.records()[:shown]:
        rows.append(f"{coeffs.sequence.stream_name(i):<8}{label:<22}{format_decimal(value, digits)}")
    return "\n".join(rows)


def fit_dataset(ds: asy.WidthDataset, basis: str | None = None, size: int | None = None,
                log_of: str = "main"):
    seq = replace(asy.AsymptoticSequence.for_family(ds.family), log_of=log_of)
    if basis:
        seq = replace(seq, kind=basis)
    ctx = PrecisionContext(ds.digits, int(ds.meta.get("guard", 30)))
    with ctx.local():
        return asy.fit(ds, seq, size, with_condition=True)


def inner_outer_split(ds: asy.WidthDataset, inner_fraction=0.5):
    """Inner = the nodes closest to the BT point; outer = the rest."""
    n_in = max(4, int(round(len(ds.nodes) * inner_fraction)))
    return ds.subset(range(n_in)), ds.subset(range(n_in, len(ds.nodes)))


def default_holdout_terms(kind: str, n_inner: int) -> int:
    """Truncation used by the extrapolability check, fixed before looking at residuals.

    At most half of the fitted coefficients are kept: the upper half is
    contaminated by the truncation of the fit itself.  On the Dulac basis the
    cut is G^(3k+3), i.e. 3k+4 terms, so the first omitted function is the
    log-free power x^(2k+3).
    """
    half = max(1, n_inner // 2)
    if kind == "dulac":
        k = max(0, (half - 4) // 3)
        return min(3 * k + 4, n_inner)
    return half


def validate_extrapolability(ds: asy.WidthDataset, terms: int | None = None,
                             basis: str | None = None):
    """Fit the inner half, truncate, and measure the residual slope on the outer half."""
    inner, outer = inner_outer_split(ds)
    seq = asy.AsymptoticSequence.for_family(ds.family)
    if basis:
        seq = replace(seq, kind=basis)
    ctx = PrecisionContext(ds.digits, int(ds.meta.get("guard", 30)))
    with ctx.local():
        coeffs = asy.fit(inner, seq)
        if terms is None:
            terms = default_holdout_terms(coeffs.sequence.kind, len(inner.nodes))
        return asy.extrapolability_test(coeffs, outer, terms)


def validate_stability(ds: asy.WidthDataset, Ns=(20, 40, 60), trials=3, seed=0, index=None):
    ctx = PrecisionContext(ds.digits, int(ds.meta.get("guard", 30)))
    with ctx.local():
        ref = asy.fit(ds)
        idx = len(ref.alphas) // 2 if index is None else index
        res = [asy.stability_test(ds, N, trials, seed, reference=ref) for N in Ns]
        return idx, [(N, r.digits(idx)) for N, r in zip(Ns, res)]


# -- CLI -----------------------------------------------------------------------------------

def _load_kv(path):
    out = {}
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        ln = ln.split("#", 1)[0].strip()
        if ln:
            k, _, v = ln.partition("=")
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def config_from_args(ns) -> ScanConfig:
    vals = _load_kv(ns.config) if ns.config else {}
    for f in fields(ScanConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            vals[f.name] = v
    if getattr(ns, "range", None):
        vals["c"], _, vals["d"] = ns.range.partition(":")
    vals.pop("range", None)
    typed = {}
    for f in fields(ScanConfig):
        if f.name in vals:
            v = vals[f.name]
            if f.name in ("nodes", "digits_target", "guard", "workers", "seed", "digits"):
                v = int(v)
            elif f.name == "stable_fraction":
                v = float(v)
            typed[f.name] = v
    return ScanConfig(**typed)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="btzone", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("scan", help="compute a width dataset")
    s.add_argument("--config", help="key=value file; flags override it")
    s.add_argument("--family", choices=KINDS)
    s.add_argument("--gamma")
    s.add_argument("--range", help="c:d, distance of the main parameter to the BT point")
    s.add_argument("--nodes", type=int)
    s.add_argument("--method", choices=METHODS)
    s.add_argument("--delta-policy", dest="delta_policy")
    s.add_argument("--digits-target", dest="digits_target", type=int)
    s.add_argument("--digits", type=int, help="fixed working digits (overrides the schedule)")
    s.add_argument("--out")
    s.add_argument("--resume", action="store_true")
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int)

    f = sub.add_parser("fit", help="interpolate a dataset on an asymptotic basis")
    f.add_argument("dataset")
    f.add_argument("--basis", choices=asy.BASES)
    f.add_argument("--ell", type=int, help="use 3*ell/2 + 1 nodes")
    f.add_argument("--log-of", dest="log_of", choices=("main", "x"), default="main",
                   help="logarithm in the Dulac terms")
    f.add_argument("--out", help="coefficients file (default: next to the dataset)")

    v = sub.add_parser("validate", help="run a validation protocol")
    v.add_argument("dataset")
    v.add_argument("--protocol", choices=("extrapolability", "stability", "constant"), required=True)
    v.add_argument("--terms", type=int, help="truncation for extrapolability (default: fixed rule)")
    v.add_argument("--basis", choices=asy.BASES)
    v.add_argument("--N", dest="Ns", default="20,40,60")
    v.add_argument("--trials", type=int, default=3)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--reference", help="splitting constant for the constant check")
    v.add_argument("--out", help="plot-data file")

    r = sub.add_parser("report", help="coefficient table and comparison data")
    r.add_argument("dir")
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return _dispatch(ns)
    except (ValueError, FileExistsError, FileNotFoundError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


def _dispatch(ns) -> int:
    if ns.cmd == "scan":
        cfg = config_from_args(ns)
        rep = scan_widths(cfg, resume=ns.resume)
        print(f"{len(rep.records)} nodes computed, {rep.skipped} skipped, {len(rep.failures)} failed "
              f"-> {Path(cfg.out) / 'dataset.csv'}")
        return rep.status
    if ns.cmd == "fit":
        ds = read_dataset(ns.dataset)
        size = None if ns.ell is None else 3 * ns.ell // 2 + 1
        if size is not None and size > len(ds.nodes):
            raise ValueError(f"3*ell/2+1 = {size} exceeds the {len(ds.nodes)} nodes")
        coeffs = fit_dataset(ds, ns.basis, size, ns.log_of)
        out = Path(ns.out) if ns.out else Path(ns.dataset).with_name("coefficients.csv")
        write_coefficients(coeffs, out, ds.digits)
        print(coefficient_table(coeffs))
        print(f"condition ~ 1e{math.log10(coeffs.condition):.0f}; written to {out}")
        return EXIT_OK
    if ns.cmd == "validate":
        ds = read_dataset(ns.dataset)
        if ns.protocol == "extrapolability":
            res = validate_extrapolability(ds, ns.terms, ns.basis)
            print(f"terms {res.terms}  slope {res.slope:.4f}  expected {res.expected:.4f}  "
                  f"relative error {res.relative_error:.3%}")
            if ns.out:
                Path(ns.out).write_text("log_main,log_residual\n" + "".join(
                    f"{a:.10g},{b:.10g}\n" for a, b in res.points), encoding="utf-8")
            return EXIT_OK
        if ns.protocol == "stability":
            Ns = [int(n) for n in ns.Ns.split(",")]
            idx, digs = validate_stability(ds, Ns, ns.trials, ns.seed)
            for N, dg in digs:
                print(f"N={N}  coefficient {idx}: {dg:.2f} matched digits")
            if ns.out:
                Path(ns.out).write_text("N,digits\n" + "".join(f"{N},{dg:.4f}\n" for N, dg in digs),
                                        encoding="utf-8")
            return EXIT_OK
        if not ns.reference:
            raise ValueError("--reference is required for the constant check")
        coeffs = fit_dataset(ds, ns.basis)
        ctx = PrecisionContext(ds.digits)
        with ctx.local():
            print(f"matched digits: {asy.splitting_constant_check(coeffs, parse_decimal(ns.reference, ctx)):.2f}")
        return EXIT_OK
    if ns.cmd == "report":
        d = Path(ns.dir)
        ds_path = d / "dataset.csv"
        ds = read_dataset(ds_path)
        coeffs = fit_dataset(ds)
        write_coefficients(coeffs, d / "coefficients.csv", ds.digits)
        print(coefficient_table(coeffs))
        if (d / "comparison.csv").exists():
            rows = read_comparison(d / "comparison.csv")
            print("\nmain, log10 Zr, log10|Zr-Zc|, log10 e^{2 pi delta}")
            for r in rows:
                print(f"{r['main'][:12]}, {r['log10_zr']}, {r['log10_diff']}, {r['log10_e2pid']}")
        return EXIT_OK
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
