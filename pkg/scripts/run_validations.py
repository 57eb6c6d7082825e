"""Fit every cached dataset and write plot-ready validation data to results/.

    python scripts/run_validations.py [--out results]

Writes per dataset: coefficients.csv, extrapolability.csv (log main, log
residual), and for the stability run stability.csv (N, matched digits).
A summary is printed.
"""
import argparse
import math
import sys
from pathlib import Path

import numpy as np

from btzone import pipeline as pl

ROOT = Path(__file__).resolve().parents[1]
BASIS = {"henon": "polynomial", "bogdanov": "dulac", "quadratic": "dulac", "stability": "dulac"}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default=str(ROOT / "results"))
    ns = p.parse_args(argv)
    out = Path(ns.out)
    for name, basis in BASIS.items():
        ds = pl.read_dataset(ROOT / "data" / name / "dataset.csv")
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        coeffs = pl.fit_dataset(ds, basis)
        pl.write_coefficients(coeffs, d / "coefficients.csv", ds.digits)
        print(f"== {name}: {len(ds.nodes)} nodes, D = {ds.digits}, condition ~ 1e{math.log10(coeffs.condition):.0f}")
        print(pl.coefficient_table(coeffs, shown=6))
        if basis == "dulac":
            alt = pl.fit_dataset(ds, basis, log_of="x")
            name1 = "B_1" if ds.family.kind == "bogdanov" else "N_1"
            print(f"{name1} with log x in the basis: {float(alt[name1]):.10f}")
        res = pl.validate_extrapolability(ds, basis=basis)
        (d / "extrapolability.csv").write_text(
            "log_main,log_residual\n" + "".join(f"{a:.10g},{b:.10g}\n" for a, b in res.points),
            encoding="utf-8")
        print(f"extrapolability: {res.terms} terms, slope {res.slope:.4f}, expected {res.expected:.4f} "
              f"({res.relative_error:.2%})")
        if name == "stability":
            idx, digs = pl.validate_stability(ds, (20, 40, 60))
            (d / "stability.csv").write_text(
                "N,digits\n" + "".join(f"{N},{g:.4f}\n" for N, g in digs), encoding="utf-8")
            corr = np.corrcoef([n for n, _ in digs], [g for _, g in digs])[0, 1]
            print(f"stability: coefficient {idx}, digits {[round(g, 2) for _, g in digs]}, corr {corr:.4f}")
    for name in ("compare_henon", "compare_bogdanov"):
        rows = pl.read_comparison(ROOT / "data" / name / "comparison.csv")
        print(f"== {name}: main, log10 Zr, log10|Zr-Zc|, log10 |C_-1| e^(2 pi delta)")
        for r in rows:
            pred = float(r["log10_cm1"]) + float(r["log10_e2pid"])
            print(f"{float(r['main']):.8g}, {r['log10_zr']}, {r['log10_diff']}, {pred:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
