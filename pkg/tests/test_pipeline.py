from dataclasses import replace
from pathlib import Path

import gmpy2
import pytest
from gmpy2 import mpfr

from btzone import pipeline as pl
from btzone.numerics import PrecisionContext

SMOKE = pl.ScanConfig(family="henon", c="1e-2", d="4e-2", nodes=4, method="real", digits=40)


@pytest.fixture(scope="module")
def full_scan(tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    cfg = replace(SMOKE, out=str(out))
    rep = pl.scan_widths(cfg)
    return cfg, rep, (out / "dataset.csv").read_bytes()


@pytest.mark.parametrize("kw", [
    {"family": "lorenz"}, {"method": "exact"}, {"c": "1e-2", "d": "1e-3"}, {"nodes": 3},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        replace(SMOKE, **kw)


def test_fingerprint_ignores_output_and_workers():
    a = SMOKE.fingerprint()
    assert replace(SMOKE, out="elsewhere", workers=3).fingerprint() == a
    assert replace(SMOKE, seed=1).fingerprint() != a


def test_working_digits_schedule():
    cfg = replace(SMOKE, digits=None)
    d20 = pl.working_digits(cfg)
    assert pl.working_digits(replace(cfg, digits_target=40)) == d20 + 20
    assert pl.working_digits(replace(cfg, c="1e-3")) > d20
    assert pl.working_digits(SMOKE) == 40


def test_node_grid_endpoints():
    grid = pl.node_grid(SMOKE)
    assert len(grid) == 4 and len(set(grid)) == 4
    ctx = PrecisionContext(40)
    with ctx.local():
        lo = mpfr("1e-2") ** (mpfr(1) / 4)
        hi = mpfr("4e-2") ** (mpfr(1) / 4)
        assert abs(mpfr(grid[0]) - lo) < mpfr(10) ** -38
        assert abs(mpfr(grid[-1]) - hi) < mpfr(10) ** -38
    assert pl.node_grid(SMOKE) == grid


def test_smoke_scan(full_scan):
    cfg, rep, _ = full_scan
    assert rep.status == pl.EXIT_OK and len(rep.records) == 4 and rep.skipped == 0
    ds = pl.read_dataset(Path(cfg.out) / "dataset.csv")
    assert ds.family.kind == "henon" and ds.digits == 40 and ds.method == "real"
    assert len(ds.nodes) == 4
    assert all(n.width > 0 for n in ds.nodes)
    # the normalised width tends to a constant: log S varies slowly across the range
    spread = max(n.log_s for n in ds.nodes) - min(n.log_s for n in ds.nodes)
    assert spread < 1


def test_scan_is_deterministic(full_scan, tmp_path):
    cfg, _, first = full_scan
    pl.scan_widths(replace(cfg, out=str(tmp_path)))
    assert (tmp_path / "dataset.csv").read_bytes() == first


def test_resume_after_interruption(full_scan, tmp_path):
    cfg, _, first = full_scan
    c2 = replace(cfg, out=str(tmp_path))
    part = pl.scan_widths(c2, limit=2)
    assert len(part.records) == 2
    rest = pl.scan_widths(c2, resume=True)
    assert rest.skipped == 2 and len(rest.records) == 2
    assert (tmp_path / "dataset.csv").read_bytes() == first
    again = pl.scan_widths(c2, resume=True)
    assert again.skipped == 4 and not again.records
    assert (tmp_path / "dataset.csv").read_bytes() == first


def test_torn_row_is_discarded(full_scan, tmp_path):
    cfg, _, first = full_scan
    c2 = replace(cfg, out=str(tmp_path))
    pl.scan_widths(c2, limit=3)
    data = tmp_path / "dataset.csv"
    with open(data, "a", encoding="utf-8") as fh:
        fh.write("0.3162277660,-1.2")  # no newline: a write cut short
    assert len(pl.read_dataset(data).nodes) == 3
    pl.scan_widths(c2, resume=True)
    assert data.read_bytes() == first


def test_refuses_to_overwrite(full_scan):
    cfg, _, _ = full_scan
    with pytest.raises(FileExistsError):
        pl.scan_widths(cfg, resume=False)


def test_failures_are_recorded(monkeypatch, tmp_path):
    grid = pl.node_grid(SMOKE)
    real = pl.compute_node

    def flaky(cfg, x):
        if x == grid[1]:
            raise ArithmeticError("boom")
        return real(cfg, x)

    monkeypatch.setattr(pl, "compute_node", flaky)
    rep = pl.scan_widths(replace(SMOKE, out=str(tmp_path), nodes=4))
    assert rep.status == pl.EXIT_PARTIAL and len(rep.records) == 3
    text = (tmp_path / "failures.csv").read_text()
    assert "ArithmeticError: boom" in text


def test_too_many_failures_abort(monkeypatch, tmp_path):
    def broken(cfg, x):
        raise ArithmeticError("always")

    monkeypatch.setattr(pl, "compute_node", broken)
    with pytest.raises(RuntimeError):
        pl.scan_widths(replace(SMOKE, out=str(tmp_path)))


def test_coefficients_round_trip(full_scan, tmp_path):
    cfg, _, _ = full_scan
    ds = pl.read_dataset(Path(cfg.out) / "dataset.csv")
    coeffs = pl.fit_dataset(ds)
    path = tmp_path / "coefficients.csv"
    pl.write_coefficients(coeffs, path, ds.digits)
    back = pl.read_coefficients(path, ds.family, ds.digits)
    with PrecisionContext(40).local():
        for a, b in zip(coeffs.alphas, back.alphas):
            assert abs(a - b) <= abs(a) * mpfr(10) ** -39
    assert "At_0" in pl.coefficient_table(coeffs)


def test_inner_outer_split(full_scan):
    cfg, _, _ = full_scan
    ds = pl.read_dataset(Path(cfg.out) / "dataset.csv")
    inner, outer = pl.inner_outer_split(ds)
    assert len(inner.nodes) == 4 and not outer.nodes
    assert pl.inner_outer_split(ds, 0.25)[0].nodes == ds.nodes[:4]


@pytest.mark.parametrize("kind,n,terms", [
    ("dulac", 12, 4), ("dulac", 16, 7), ("dulac", 40, 19), ("polynomial", 12, 6), ("dulac", 4, 4),
])
def test_default_holdout_terms(kind, n, terms):
    assert pl.default_holdout_terms(kind, n) == terms


def test_config_file_and_flags(tmp_path):
    conf = tmp_path / "scan.conf"
    conf.write_text("family = bogdanov  # comment\ngamma=3\nnodes=6\ndigits-target=25\n")
    ns = pl.build_parser().parse_args(["scan", "--config", str(conf), "--nodes", "5",
                                       "--range", "0.01:0.02"])
    cfg = pl.config_from_args(ns)
    assert (cfg.family, cfg.gamma, cfg.nodes, cfg.digits_target) == ("bogdanov", "3", 5, 25)
    assert (cfg.c, cfg.d) == ("0.01", "0.02")


def test_cli_round_trip(tmp_path, capsys):
    out = tmp_path / "run"
    rc = pl.main(["scan", "--family", "henon", "--range", "1e-2:4e-2", "--nodes", "4",
                  "--method", "real", "--digits", "40", "--out", str(out)])
    assert rc == pl.EXIT_OK
    assert pl.main(["fit", str(out / "dataset.csv")]) == pl.EXIT_OK
    assert (out / "coefficients.csv").exists()
    assert pl.main(["validate", str(out / "dataset.csv"), "--protocol", "stability",
                    "--N", "10,20", "--out", str(tmp_path / "stab.csv")]) == pl.EXIT_OK
    assert (tmp_path / "stab.csv").read_text().startswith("N,digits")
    assert pl.main(["report", str(out)]) == pl.EXIT_OK
    text = capsys.readouterr().out
    assert "4 nodes computed" in text and "matched digits" in text


def test_cli_errors(tmp_path, capsys):
    assert pl.main(["fit", str(tmp_path / "missing.csv")]) == pl.EXIT_FATAL
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        pl.main(["scan", "--family", "lorenz"])


def test_retried_node_restores_grid_order(full_scan, monkeypatch, tmp_path):
    cfg, _, first = full_scan
    grid = pl.node_grid(cfg)
    real = pl.compute_node
    c2 = replace(cfg, out=str(tmp_path))

    def flaky(cfg, x):
        if x == grid[0]:
            raise ArithmeticError("transient")
        return real(cfg, x)

    monkeypatch.setattr(pl, "compute_node", flaky)
    pl.scan_widths(c2)
    monkeypatch.setattr(pl, "compute_node", real)
    pl.scan_widths(c2, resume=True)
    pl.scan_widths(c2, resume=True)
    assert (tmp_path / "dataset.csv").read_bytes() == first
    assert (tmp_path / "failures.csv").read_text().count("transient") == 1
