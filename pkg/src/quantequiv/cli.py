"""Command-line front end: emits CSV/JSON tables and runs the validation suites.

Every table starts with ``#``-prefixed metadata lines (tool version, seed,
grid parameters), then a header row.  dB values carry four decimals and
linear values ten significant digits, so identical flags give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .equiv_model import (
    OperatingPoint,
    QuadratureGrid,
    SIGNAL_HALF_WIDTH_SIGMAS,
    direct_moments,
    energy_V,
    energy_V_numeric,
    monte_carlo_stats,
    transfer_F,
    transfer_F_numeric,
)
from .errors import NoSolutionError
from .metrics import (
    SF_GRID_DB,
    THRESHOLD_RANGE_DB,
    THRESHOLD_TOL_DB,
    ScaledPoint,
    adc_output_metrics,
    db,
    min_nf,
    nf_curve,
    optimal_sf,
    small_signal_nf,
    snr_threshold,
    to_operating_point,
    undb,
)
from .mimo_sim import ArrayConfig, OfdmGeometry, ber_sim, empirical_nf, nld_coherence_probe
from .quantizer import MAX_BITS, make_quantizer

SUBCOMMANDS = ("curves", "threshold-table", "simulate-ber", "validate")
TRANSFER_SIGMA_N = (0.1, 0.5, 1.0, 2.0)
TRANSFER_POINTS = 81

DEFAULT_TRIALS = {"curves": 0, "threshold-table": 0, "simulate-ber": 20_000, "validate": 1_000_000}
DEFAULT_SNR_DB = {"curves": "-10:70:1", "threshold-table": "-30:60:1",
                  "simulate-ber": "6:36:2", "validate": "-10:10:10"}


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.start, self.stop, self.step)):
            raise ValueError("sweep bounds must be finite")
        if self.step <= 0:
            raise ValueError(f"sweep step must be > 0, got {self.step}")
        if self.stop < self.start:
            raise ValueError("sweep is empty: stop < start")

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:step, got {text!r}")
        return cls(*(float(p) for p in parts))

    def values(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 10) for i in range(n)]

    def __str__(self):
        return f"{self.start:g}:{self.stop:g}:{self.step:g}"


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    bits: tuple[int, ...] = (1, 2, 3, 4, 5)
    antennas: tuple[int, ...] = (1, 10, 100, 1000, 10000)
    snr_db: Sweep = Sweep(-30.0, 60.0, 1.0)
    nf_limit_db: float = 3.0
    trials: int = 0
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    min_errors: int = 100
    mutate_gain: float = 1.0

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if not self.bits or not self.antennas:
            raise ValueError("bits and antenna lists must be nonempty")
        if any(not 1 <= b <= MAX_BITS for b in self.bits):
            raise ValueError(f"bits must be in 1..{MAX_BITS}")
        if any(m < 1 for m in self.antennas):
            raise ValueError("antenna counts must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.trials < 0 or self.seed < 0:
            raise ValueError("trials and seed must be >= 0")


# ---------------------------------------------------------------------------
# tables


@dataclass
class Table:
    columns: list[str]
    kinds: dict[str, str]   # column -> "db" | "lin" | "int" | "str"
    rows: list[dict]
    metadata: dict[str, str]


def _fmt(value, kind):
    if value is None:
        return ""
    if kind == "str":
        return str(value)
    if kind == "int":
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if kind == "db":
        s = f"{v:.4f}"
        return "0.0000" if s == "-0.0000" else s
    return f"{v:.9e}"


def _json_value(text, kind):
    if text == "":
        return None
    if kind in ("str",) or text in ("nan", "inf", "-inf"):
        return text
    if kind == "int":
        return int(text)
    return float(text)


def render(table: Table, fmt: str) -> str:
    cells = [[_fmt(r.get(c), table.kinds[c]) for c in table.columns] for r in table.rows]
    if fmt == "json":
        doc = {
            "metadata": table.metadata,
            "columns": table.columns,
            "rows": [{c: _json_value(v, table.kinds[c]) for c, v in zip(table.columns, row)}
                     for row in cells],
        }
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"
    buf = io.StringIO()
    for k, v in table.metadata.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    w.writerows(cells)
    return buf.getvalue()


def write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write output file {path!r}: {exc.strerror}",
                      path) from exc


def _metadata(cfg: RunConfig, **extra) -> dict[str, str]:
    meta = {
        "tool": f"quantequiv {__version__}",
        "subcommand": cfg.subcommand,
        "seed": str(cfg.seed),
        "bits": ",".join(map(str, cfg.bits)),
        "antennas": ",".join(map(str, cfg.antennas)),
        "snr_db": str(cfg.snr_db),
        "sf_grid_db": f"{SF_GRID_DB[0]:g}:{SF_GRID_DB[-1]:g}:0.1",
        "signal_grid": f"half_width={SIGNAL_HALF_WIDTH_SIGMAS:g}*hypot(sigma_s,sigma_n) "
                       "step=0.01*min(sigma_s,sigma_n) floored at 1e-4*half_width "
                       "when sigma_n<=sigma_s",
    }
    meta.update({k: str(v) for k, v in extra.items()})
    return meta


def cmd_curves(cfg: RunConfig) -> Table:
    """Transfer-function samples, single-ADC SNR/SDR/SINAD and array NF/SINAD."""
    cols = ["table", "bits", "m", "sigma_n", "s_i", "F", "snr_in_db", "sf_opt_db",
            "snr_out_db", "sdr_out_db", "sinad_out_db", "nf_db", "sinad_cum_out_db"]
    kinds = {"table": "str", "bits": "int", "m": "int", "sigma_n": "lin", "s_i": "lin",
             "F": "lin"}
    kinds.update({c: "db" for c in cols[6:]})
    rows = []
    sweep = cfg.snr_db.values()
    for b in cfg.bits:
        spec = make_quantizer(b)
        s = np.linspace(-(spec.R + 2), spec.R + 2, TRANSFER_POINTS)
        for sn in TRANSFER_SIGMA_N:
            for si, F in zip(s, transfer_F(spec, sn, s)):
                rows.append({"table": "transfer", "bits": b, "sigma_n": sn, "s_i": si, "F": F})
    for b in cfg.bits:
        spec = make_quantizer(b)
        for x in sweep:
            snr = float(undb(x))
            sf = optimal_sf(spec, snr, "maximize-SINAD")
            om = adc_output_metrics(spec, to_operating_point(spec, ScaledPoint(sf, snr)))
            rows.append({"table": "adc", "bits": b, "m": 1, "snr_in_db": x,
                         "sf_opt_db": db(sf), "snr_out_db": db(om.snr_out),
                         "sdr_out_db": db(om.sdr_out), "sinad_out_db": db(om.sinad_out)})
    for b in cfg.bits:
        spec = make_quantizer(b)
        for m in cfg.antennas:
            for p in nf_curve(spec, m, sweep):
                rows.append({"table": "array", "bits": b, "m": m, "snr_in_db": p.snr_cum_in_db,
                             "sf_opt_db": p.sf_opt_db, "nf_db": p.nf_db,
                             "sinad_cum_out_db": p.sinad_cum_out_db})
    meta = _metadata(cfg, transfer_sigma_n=",".join(f"{v:g}" for v in TRANSFER_SIGMA_N),
                     transfer_points=TRANSFER_POINTS,
                     tables="transfer: F(sigma_n, s_i); adc: single ADC at SINAD-optimal SF; "
                            "array: worst-case NF at NF-optimal SF, snr_in_db is cumulative")
    return Table(cols, kinds, rows, meta)


def cmd_threshold_table(cfg: RunConfig) -> Table:
    cols = ["bits", "m", "nf_limit_db", "threshold_db", "sf_opt_db", "status", "floor_nf_db"]
    kinds = {"bits": "int", "m": "int", "nf_limit_db": "db", "threshold_db": "db",
             "sf_opt_db": "db", "status": "str", "floor_nf_db": "db"}
    rows = []
    for b in cfg.bits:
        spec = make_quantizer(b)
        for m in cfg.antennas:
            row = {"bits": b, "m": m, "nf_limit_db": cfg.nf_limit_db}
            try:
                thr = snr_threshold(spec, m, cfg.nf_limit_db)
            except NoSolutionError as exc:
                row.update(status="no-solution", floor_nf_db=exc.best_nf_db)
            else:
                if math.isinf(thr):
                    row.update(status="above-range", threshold_db=thr)
                else:
                    row.update(status="ok", threshold_db=thr,
                               sf_opt_db=db(min_nf(spec, float(undb(thr)), m)[1]))
            rows.append(row)
    meta = _metadata(cfg, nf_limit_db=cfg.nf_limit_db,
                     threshold_range_db=f"{THRESHOLD_RANGE_DB[0]:g}:{THRESHOLD_RANGE_DB[1]:g}",
                     threshold_tol_db=THRESHOLD_TOL_DB)
    del meta["snr_db"]  # the threshold search has its own range
    return Table(cols, kinds, rows, meta)


def cmd_simulate_ber(cfg: RunConfig) -> Table:
    cols = ["channel", "bits", "m", "snr_cum_in_db", "sf_db", "trials", "bits_sent",
            "bit_errors", "ber", "ber_lo", "ber_hi", "evm_nf_db", "ber_nf_db", "seed"]
    kinds = {c: "int" for c in ("bits", "m", "trials", "bits_sent", "bit_errors", "seed")}
    kinds.update(channel="str", snr_cum_in_db="db", sf_db="db", ber="lin", ber_lo="lin",
                 ber_hi="lin", evm_nf_db="db", ber_nf_db="db")
    trials = cfg.trials or DEFAULT_TRIALS["simulate-ber"]
    ofdm = OfdmGeometry()
    rows = []
    sweep = cfg.snr_db.values()
    for channel in ("worst", "average"):
        for b in cfg.bits:
            for m in cfg.antennas:
                for p in ber_sim(make_quantizer(b), m, sweep, channel=channel, ofdm=ofdm,
                                 max_trials=trials, min_errors=cfg.min_errors, seed=cfg.seed):
                    rows.append({c: getattr(p, c) for c in cols})
    meta = _metadata(cfg, max_trials=trials, min_errors=cfg.min_errors,
                     ofdm=f"n_fft={ofdm.n_fft} used={ofdm.used_subcarriers} qam=64 gray",
                     confidence="95% Wilson interval on ber")
    return Table(cols, kinds, rows, meta)


# ---------------------------------------------------------------------------
# validation suites


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    observed: float
    tolerance: float
    passed: bool


def _check(suite, name, observed, tolerance):
    return Check(suite, name, float(observed), float(tolerance),
                 bool(math.isfinite(observed) and abs(observed) <= tolerance))


def suite_small_signal(cfg: RunConfig) -> list[Check]:
    spec = make_quantizer(1)
    out = [_check("small-signal", "1-bit NF limit / (pi/2) - 1",
                  small_signal_nf(spec) / (math.pi / 2) - 1, 1e-9)]
    for m in (1, 100, 10000):
        nf = db(min_nf(spec, float(undb(-30.0)), m)[0])
        out.append(_check("small-signal", f"1-bit NF at -30 dB, m={m}, minus 1.96 dB",
                          nf - 1.96, 0.05))
    return out


def suite_quadrature(cfg: RunConfig) -> list[Check]:
    worst = 0.0
    for b in cfg.bits:
        spec = make_quantizer(b)
        for sn in (0.05, 1.0, 5.0):
            for s in np.linspace(-5 * (1 + sn), 5 * (1 + sn), 11):
                worst = max(worst,
                            abs(transfer_F(spec, sn, s) - transfer_F_numeric(spec, sn, s)),
                            abs(energy_V(spec, sn, s) - energy_V_numeric(spec, sn, s)))
    return [_check("quadrature", "max |closed form - quadrature| for F and V", worst, 1e-6)]


def suite_identity(cfg: RunConfig) -> list[Check]:
    worst = 0.0
    for b in cfg.bits:
        spec = make_quantizer(b)
        for sn in (0.1, 1.0, 4.0):
            for ss in (0.1, 1.0, 4.0):
                point = OperatingPoint(sn, ss)
                g = direct_moments(spec, point).gain * cfg.mutate_gain
                worst = max(worst, direct_moments(spec, point, gain=g).identity_residual)
    return [_check("identity", "max relative error of g^2 sigma_s^2 + nld + noise = E[s_O^2]",
                   worst, 1e-8)]


def suite_whiteness(cfg: RunConfig) -> list[Check]:
    n = cfg.trials or DEFAULT_TRIALS["validate"]
    out = []
    for i, (b, sn, ss) in enumerate([(1, 0.5, 1.0), (2, 0.5, 0.5), (3, 1.0, 2.0)]):
        mc = monte_carlo_stats(make_quantizer(b), OperatingPoint(sn, ss), n, seed=cfg.seed + i)
        tol = mc.calibrated_tolerances()
        for name, v in mc.correlations().items():
            out.append(_check("whiteness", f"bits={b} sigma_n={sn:g} sigma_s={ss:g} {name}",
                              v, tol[name]))
    return out


def suite_coherence(cfg: RunConfig) -> list[Check]:
    out = []
    for alpha in (0.0, math.pi / 2):
        conf = ArrayConfig.single_user(make_quantizer(2), 16, 20.0, aoa=alpha)
        prof = nld_coherence_probe(conf, 4000, seed=cfg.seed)
        dev = np.abs(prof.corr.real - 1.0) - np.maximum(3 * prof.corr_se, 1e-9)
        out.append(_check("coherence", f"alpha={alpha:.4f} corr = 1 (excess over 3 SE)",
                          max(float(dev.max()), 0.0), 0.0))
    return out


def suite_array_nf(cfg: RunConfig) -> list[Check]:
    spec = make_quantizer(2)
    conf = ArrayConfig.single_user(spec, 100, 0.0)
    rep = empirical_nf(conf, 5000, seed=cfg.seed)
    model = db(min_nf(spec, 1.0, 100)[0])
    return [_check("array-nf", "bits=2 m=100 0 dB: empirical - analytic NF (dB)",
                   rep.worst_nf_db - model, 0.2)]


SUITES: dict[str, Callable[[RunConfig], list[Check]]] = {
    "small-signal": suite_small_signal,
    "quadrature": suite_quadrature,
    "identity": suite_identity,
    "whiteness": suite_whiteness,
    "coherence": suite_coherence,
    "array-nf": suite_array_nf,
}


def cmd_validate(cfg: RunConfig) -> tuple[Table, bool]:
    checks = [c for fn in SUITES.values() for c in fn(cfg)]
    cols = ["suite", "check", "observed", "tolerance", "result"]
    kinds = {"suite": "str", "check": "str", "observed": "lin", "tolerance": "lin",
             "result": "str"}
    rows = [{"suite": c.suite, "check": c.name, "observed": c.observed,
             "tolerance": c.tolerance, "result": "PASS" if c.passed else "FAIL"}
            for c in checks]
    meta = _metadata(cfg, mc_samples=cfg.trials or DEFAULT_TRIALS["validate"],
                     mutate_gain=f"{cfg.mutate_gain:g}")
    return Table(cols, kinds, rows, meta), all(c.passed for c in checks)


# ---------------------------------------------------------------------------
# entry point


def _int_list(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return vals


def _sweep(text):
    try:
        return Sweep.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantequiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--bits", type=_int_list, default=(1, 2, 3, 4, 5))
        p.add_argument("--antennas", type=_int_list, default=(1, 10, 100, 1000, 10000))
        p.add_argument("--snr-db", type=_sweep, default=_sweep(DEFAULT_SNR_DB[name]),
                       help="start:stop:step in dB, stop inclusive")
        p.add_argument("--nf-limit-db", type=float, default=3.0)
        p.add_argument("--trials", type=int, default=0,
                       help="Monte-Carlo size (0 = subcommand default)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "simulate-ber":
            p.add_argument("--min-errors", type=int, default=100)
        if name == "validate":
            p.add_argument("--mutate-gain", type=float, default=1.0,
                           help="scale the gain used by the identity suite (self-test)")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        subcommand=ns.subcommand, bits=ns.bits, antennas=ns.antennas, snr_db=ns.snr_db,
        nf_limit_db=ns.nf_limit_db, trials=ns.trials, seed=ns.seed, out=ns.out,
        format=ns.format, min_errors=getattr(ns, "min_errors", 100),
        mutate_gain=getattr(ns, "mutate_gain", 1.0),
    )


def run(cfg: RunConfig) -> int:
    if cfg.subcommand == "validate":
        table, ok = cmd_validate(cfg)
        for r in table.rows:
            print(f"{r['result']}  [{r['suite']}] {r['check']}: observed "
                  f"{r['observed']:.3e}, tolerance {r['tolerance']:.3e}", file=sys.stderr)
        print("validation " + ("passed" if ok else "FAILED"), file=sys.stderr)
        write_output(render(table, cfg.format), cfg.out)
        return 0 if ok else 1
    table = {"curves": cmd_curves, "threshold-table": cmd_threshold_table,
             "simulate-ber": cmd_simulate_ber}[cfg.subcommand](cfg)
    write_output(render(table, cfg.format), cfg.out)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        return run(cfg)
    except OSError as exc:
        print(f"quantequiv: error: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
