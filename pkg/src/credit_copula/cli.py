"""Command-line front end.

Subcommands: ``simulate homogeneous|hetero-sigma``, ``sweep``, ``empirical``
and ``validate-data``. Settings resolve as built-in defaults < ``--preset``
< ``--config`` file < explicit flags. Exit status: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import hashlib
import io
import json
import logging
import math
import os
import shutil
import sys
import time
from pathlib import Path

from . import __version__
from .experiments import (
    SWEEP_K_LIST,
    ConfigError,
    ExperimentConfig,
    run_empirical_study,
    run_heterogeneous_sigma_study,
    run_homogeneous_study,
    run_loss_corr_sweep,
)
from .market_data import MarketDataError, load_price_csv, read_price_csv, panel_from_prices
from .rng import INFINITY

log = logging.getLogger("credit_copula")

DATA_DIR_ENV = "CREDIT_COPULA_DATA_DIR"
REFERENCE_SPAN = (dt.date(1993, 1, 1), dt.date(2014, 4, 30))

_EXTRA_FIELDS = ("market_a", "market_b", "pairing", "k_list")

MODE_DEFAULTS = {
    "homogeneous": dict(mode="homogeneous"),
    "heterogeneous_sigma": dict(mode="heterogeneous_sigma", mu=-3e-3, sigma=(0.0, 0.25), c_a=0.3),
    "sweep": dict(mode="homogeneous", mu=-3e-3, sigma=0.02, K=list(SWEEP_K_LIST),
                  c_a=[round(0.1 * i, 1) for i in range(11)], n_pairs=100),
    "empirical": dict(mode="empirical", leverage=(0.6, 0.9), pairing="cross"),
}

PRESETS = {
    "fig2-top": ("homogeneous", dict(c_a=0.0, tail_n=INFINITY, mu=1e-3, sigma=0.03)),
    "fig2-bottom": ("homogeneous", dict(c_a=0.0, tail_n=5, mu=1e-3, sigma=0.03)),
    "fig3-top": ("homogeneous", dict(c_a=0.3, mu=1e-3, sigma=0.02)),
    "fig3-middle": ("homogeneous", dict(c_a=0.3, mu=3e-4, sigma=0.02)),
    "fig3-bottom": ("homogeneous", dict(c_a=0.3, mu=-3e-3, sigma=0.02)),
    "fig4": ("homogeneous", dict(c_a=0.3, mu=1e-3, sigma=0.02)),
    "fig5-top-left": ("sweep", dict(mu=2e-3, tail_n=INFINITY)),
    "fig5-top-right": ("sweep", dict(mu=2e-3, tail_n=5)),
    "fig5-bottom-left": ("sweep", dict(mu=-3e-3, tail_n=INFINITY)),
    "fig5-bottom-right": ("sweep", dict(mu=-3e-3, tail_n=5)),
    "fig6": ("heterogeneous_sigma", dict(c_a=0.3, mu=-3e-3, sigma=(0.0, 0.25), leverage=0.75)),
    "fig7": ("empirical", dict(K=50, n_iterations=20_000, n_sims=10_000)),
    "table1": ("empirical", dict(K=50, n_iterations=20_000, n_sims=10_000)),
    "fig9": ("empirical", dict(K=50, k_list=[5, 10, 14, 20, 30, 40, 50, 60, 80, 100])),
}


class UsageError(Exception):
    pass


# -- value parsing -------------------------------------------------------------

def _float_list(text: str) -> list:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _int_list(text: str) -> list:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _tail(text) -> float:
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "infty"):
        return INFINITY
    return int(s)


def _scalar_or_bounds(text):
    vals = _float_list(text)
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 2:
        return tuple(vals)
    raise ValueError(f"expected a number or 'low,high', got {text!r}")


def _scalar_or_list(conv):
    def parse(text):
        vals = [conv(x) for x in str(text).split(",") if x.strip()]
        if not vals:
            raise ValueError("empty value")
        return vals[0] if len(vals) == 1 else vals
    return parse


FIELD_PARSERS = {
    "mode": str,
    "c_a": _scalar_or_list(float),
    "mu": float,
    "sigma": _scalar_or_bounds,
    "leverage": _scalar_or_bounds,
    "K": _scalar_or_list(int),
    "tail_n": _tail,
    "n_pairs": int,
    "n_sims": int,
    "n_iterations": int,
    "b": int,
    "master_seed": int,
    "horizon_T": float,
    "pdf_bins": int,
    "market_a": str,
    "market_b": str,
    "pairing": str,
    "k_list": _int_list,
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; an ``[experiment]`` header is optional."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    body = text if text.lstrip().startswith("[") else "[experiment]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(body)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    lines = text.splitlines()

    def where(key):
        for n, line in enumerate(lines, 1):
            if line.split("=", 1)[0].split(":", 1)[0].strip() == key:
                return n
        return 0

    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            name = "K" if key.lower() == "k" else key
            if name not in FIELD_PARSERS:
                raise UsageError(f"{path}:{where(key)}: unknown field {key!r}")
            try:
                out[name] = FIELD_PARSERS[name](raw)
            except ValueError as exc:
                raise UsageError(f"{path}:{where(key)}: field {key!r}: {exc}") from None
    return out


# -- argument parser ---------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--preset", help="named parameter set, e.g. fig3-top")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--mu", type=float, help="drift per day")
    p.add_argument("--sigma", type=_scalar_or_bounds, help="volatility, or 'low,high' bounds")
    p.add_argument("--leverage", type=_scalar_or_bounds, help="F/V0, or 'low,high' bounds")
    p.add_argument("--tail-n", type=_tail, dest="tail_n", help="tail parameter N or 'inf'")
    p.add_argument("--n-pairs", type=int, dest="n_pairs")
    p.add_argument("--n-sims", type=int, dest="n_sims")
    p.add_argument("--b", type=int, help="copula bins per axis")
    p.add_argument("--pdf-bins", type=int, dest="pdf_bins")
    p.add_argument("--horizon-t", type=float, dest="horizon_T")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="credit-copula", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="copula study on a synthetic market")
    sim_sub = sim.add_subparsers(dest="study", required=True)
    for name in ("homogeneous", "hetero-sigma"):
        p = sim_sub.add_parser(name)
        _common(p)
        p.add_argument("--ca", type=float, dest="c_a", help="asset correlation")
        p.add_argument("--k", type=int, dest="K", help="portfolio size")

    sw = sub.add_parser("sweep", help="loss correlation vs asset correlation and size")
    _common(sw)
    sw.add_argument("--ca-grid", type=_float_list, dest="c_a")
    sw.add_argument("--k-list", type=_int_list, dest="K")

    emp = sub.add_parser("empirical", help="time-averaged study on price data")
    _common(emp)
    emp.add_argument("--market-a", dest="market_a")
    emp.add_argument("--market-b", dest="market_b")
    emp.add_argument("--pairing", choices=("cross", "same-a", "same-b"))
    emp.add_argument("--k", type=int, dest="K")
    emp.add_argument("--k-list", type=_int_list, dest="k_list")
    emp.add_argument("--n-iterations", type=int, dest="n_iterations")
    emp.add_argument("--data-dir", help=f"base directory for market files (env {DATA_DIR_ENV})")

    val = sub.add_parser("validate-data", help="check a price CSV")
    val.add_argument("path")
    val.add_argument("--min-observations", type=int, default=None)
    return parser


def _kind(args) -> str:
    if args.command == "simulate":
        return "homogeneous" if args.study == "homogeneous" else "heterogeneous_sigma"
    return args.command


def resolve_settings(args) -> dict:
    kind = _kind(args)
    settings = dict(MODE_DEFAULTS[kind])
    if args.preset:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        preset_kind, values = PRESETS[args.preset]
        if preset_kind != kind:
            raise UsageError(f"preset {args.preset!r} belongs to {preset_kind!r}, not {kind!r}")
        settings.update(values)
    if args.config:
        settings.update(read_config_file(args.config))
    for name in FIELD_PARSERS:
        val = getattr(args, name, None)
        if val is not None:
            settings[name] = val
    return settings


def make_config(settings: dict) -> ExperimentConfig:
    fields = {k: v for k, v in settings.items() if k not in _EXTRA_FIELDS}
    if isinstance(fields.get("sigma"), list):
        fields["sigma"] = tuple(fields["sigma"])
    if isinstance(fields.get("leverage"), list):
        fields["leverage"] = tuple(fields["leverage"])
    return ExperimentConfig(**fields).validate()


# -- output --------------------------------------------------------------------

def _json_safe(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, (list, tuple)):
        return [_json_safe(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    return obj


class ArtifactWriter:
    """Stages files, then renames them into place only when the run succeeds."""

    def __init__(self, out_dir: Path):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.staging = self.out / f".staging-{os.getpid()}"
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir()
        self.files = {}

    def text(self, name: str, content: str) -> None:
        data = content.encode()
        (self.staging / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, doc) -> None:
        self.text(name, json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")

    def commit(self) -> None:
        for name in self.files:
            os.replace(self.staging / name, self.out / name)
        shutil.rmtree(self.staging, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.staging, ignore_errors=True)
        self.files = {}

    def manifest(self, doc: dict) -> None:
        tmp = self.out / ".manifest.json.tmp"
        tmp.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.out / "manifest.json")


def _pdf_csv(pdf) -> str:
    buf = io.StringIO()
    buf.write(f"# point_mass_at_zero={pdf.point_mass!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_left", "bin_right", "density"])
    for lo, hi, d in zip(pdf.edges[:-1], pdf.edges[1:], pdf.density):
        w.writerow([repr(float(lo)), repr(float(hi)), repr(float(d))])
    return buf.getvalue()


def _curve_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "c_a", "corr", "stderr", "n_pairs_used"])
    for curve in curves:
        for p in curve.points:
            w.writerow([curve.K, repr(p.c_a), "" if p.corr is None else repr(p.corr),
                        "" if p.stderr is None else repr(p.stderr), p.n_used])
    return buf.getvalue()


def _write_study(writer: ArtifactWriter, result, echo: dict, extra: dict | None = None) -> None:
    writer.json("copula.json", result.averaged_copula.to_dict())
    if result.gaussian_ref is not None:
        writer.json("gaussian_copula.json", result.gaussian_ref.to_dict())
        writer.json("deviation.json", result.deviation.to_dict())
    writer.text("loss_pdf.csv", _pdf_csv(result.loss_pdf[0]))
    writer.text("loss_pdf_2.csv", _pdf_csv(result.loss_pdf[1]))
    summary = result.summary()
    summary.update(extra or {})
    summary["config"] = echo
    summary["seed"] = echo["master_seed"]
    writer.json("summary.json", summary)


def _market_path(name, args, settings):
    if not name:
        return None
    path = Path(name)
    base = getattr(args, "data_dir", None) or os.environ.get(DATA_DIR_ENV)
    if not path.is_absolute() and base:
        path = Path(base) / path
    if not path.is_file():
        raise UsageError(f"market data file not found: {path}")
    return path


def run_experiment(args) -> int:
    kind = _kind(args)
    try:
        settings = resolve_settings(args)
        cfg = make_config(settings)
        if kind == "empirical":
            path_a = _market_path(settings.get("market_a"), args, settings)
            path_b = _market_path(settings.get("market_b"), args, settings)
            if path_a is None:
                raise UsageError("empirical mode needs --market-a (and --market-b for cross pairing)")
            if settings.get("pairing", "cross") in ("cross", "same-b") and path_b is None:
                raise UsageError(f"pairing {settings.get('pairing')!r} needs --market-b")
    except (UsageError, ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    echo = dict(cfg.to_dict())
    for name in _EXTRA_FIELDS:
        if name in settings:
            echo[name] = settings[name]
    writer = ArtifactWriter(Path(args.out))
    manifest = {"command": kind, "config": echo, "seed": cfg.master_seed,
                "workers": args.workers, "version": __version__}
    t0 = time.perf_counter()
    try:
        if kind == "homogeneous":
            result = run_homogeneous_study(cfg, workers=args.workers)
            _write_study(writer, result, echo)
            units = result.n_units
        elif kind == "heterogeneous_sigma":
            result = run_heterogeneous_sigma_study(cfg, workers=args.workers)
            _write_study(writer, result, echo)
            units = result.n_units
        elif kind == "sweep":
            curves = run_loss_corr_sweep(cfg, workers=args.workers)
            writer.text("losscorr_curve.csv", _curve_csv(curves))
            for curve in curves:
                writer.text(f"losscorr_curve_K{curve.K}.csv", _curve_csv([curve]))
            writer.json("summary.json", {"config": echo, "seed": cfg.master_seed,
                                         "curves": len(curves)})
            units = sum(len(c.points) for c in curves) * cfg.n_pairs
        else:
            panel_a = load_price_csv(path_a)
            panel_b = load_price_csv(path_b) if path_b else None
            out = run_empirical_study(cfg, panel_a, panel_b, settings.get("pairing", "cross"),
                                      k_list=settings.get("k_list"), workers=args.workers)
            _write_study(writer, out.study, echo, {
                "pairing": settings.get("pairing", "cross"),
                "tickers": [len(panel_a.tickers), 0 if panel_b is None else len(panel_b.tickers)],
            })
            if out.size_curve:
                writer.text("losscorr_curve.csv", _curve_csv(out.size_curve))
            units = out.study.n_units
        writer.commit()
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest
        writer.abort()
        manifest.update(status="error", error=f"{type(exc).__name__}: {exc}", files={},
                        wall_clock_s=time.perf_counter() - t0)
        writer.manifest(manifest)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.debug("run failed", exc_info=True)
        return 1
    manifest.update(status="ok", files=writer.files, work_units=units,
                    wall_clock_s=time.perf_counter() - t0)
    writer.manifest(manifest)
    print(f"wrote {len(writer.files)} files to {args.out}")
    return 0


def validate_data(args) -> int:
    path = Path(args.path)
    try:
        dates, tickers, prices = read_price_csv(path)
        kwargs = {} if args.min_observations is None else {"min_observations": args.min_observations}
        panel = panel_from_prices(dates, tickers, prices, **kwargs)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return 1
    except MarketDataError as exc:
        print(f"{type(exc).__name__}: {exc}")
        return 1
    print(f"file: {path}")
    print(f"price rows: {len(dates)}  tickers in header: {len(tickers)}")
    print(f"returns: {len(panel)} days x {len(panel.tickers)} tickers")
    print(f"dropped rows: {panel.dropped_rows}")
    excluded = ", ".join(panel.excluded_tickers) if panel.excluded_tickers else "none"
    print(f"excluded tickers ({len(panel.excluded_tickers)}): {excluded}")
    if dates:
        lo, hi = dates[0], dates[-1]
        ref_lo, ref_hi = REFERENCE_SPAN
        overlap = max(0, (min(hi, ref_hi) - max(lo, ref_lo)).days)
        cover = overlap / (ref_hi - ref_lo).days
        print(f"date range: {lo} .. {hi}")
        print(f"coverage of {ref_lo:%Y-%m}..{ref_hi:%Y-%m}: {100 * cover:.1f}%")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate-data":
        return validate_data(args)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    return run_experiment(args)


if __name__ == "__main__":
    sys.exit(main())
