"""Regenerate the cached width datasets under data/.

    python scripts/make_datasets.py                 # all, resuming partial files
    python scripts/make_datasets.py henon --force   # recompute one from scratch
"""
import argparse
import logging
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

from btzone.pipeline import ScanConfig, scan_widths

ROOT = Path(__file__).resolve().parents[1]

DATASETS = {
    # splitting constant of the Henon family, polynomial basis
    "henon": ScanConfig("henon", "0", "1e-4", "1e-2", 24, "tangency", digits_target=14),
    # Bogdanov constant and B_1 at gamma~ = 3
    "bogdanov": ScanConfig("bogdanov", "3", "0.005", "0.02", 24, "tangency"),
    # N_1 at gamma = -3
    "quadratic": ScanConfig("quadratic", "-3", "1e-6", "1e-4", 32, "tangency"),
    # real versus complex estimator
    "compare_henon": ScanConfig("henon", "0", "1e-4", "1e-2", 4, "both", digits_target=14),
    "compare_bogdanov": ScanConfig("bogdanov", "3", "0.01", "0.02", 4, "both"),
    # perturbation study at fixed D = 80
    "stability": ScanConfig("bogdanov", "3", "0.02", "0.06", 24, "tangency", digits=80),
}


def config_for(name: str) -> ScanConfig:
    return replace(DATASETS[name], out=str(ROOT / "data" / name))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", choices=[[]] + sorted(DATASETS), default=[])
    p.add_argument("--force", action="store_true", help="delete existing files first")
    p.add_argument("--workers", type=int, default=1)
    ns = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    status = 0
    for name in ns.names or sorted(DATASETS):
        cfg = replace(config_for(name), workers=ns.workers)
        if ns.force and Path(cfg.out).exists():
            shutil.rmtree(cfg.out)
        t0 = time.time()
        rep = scan_widths(cfg, resume=True)
        print(f"{name}: {len(rep.records)} new, {rep.skipped} cached, {len(rep.failures)} failed "
              f"({time.time() - t0:.0f}s)")
        status = max(status, rep.status)
    return status


if __name__ == "__main__":
    sys.exit(main())
