"""Command-line experiments: noise pdf, per-user rates, allocation and sum-rate sweeps.

Every command writes CSV data, a gnuplot stub and ``config_echo.txt`` (the
fully resolved configuration, loadable with ``--config``) into the output
directory.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import allocation as alloc
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DivergenceError, NomaVlcError
from .noise import histogram, l1_distance, pdf_high_nu, pdf_oracle, pdf_series, sample_phi
from .rates import (expected_rate_user, expected_rates, mc_expected_rates, mc_rate_entropy, rate_quadrature,
                    rates_static)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_STATIC = dict(mode="static")
_MOBILE = dict(mode="mobility")

PRESETS = {
    "noise-pdf": dict(),
    "noise-pdf-gaussian": dict(beta=0.0),
    "noise-pdf-divergent": dict(beta=3.0),
    "static-rates-50": dict(_STATIC, half_angle_deg=50.0),
    "static-rates-60": dict(_STATIC, half_angle_deg=60.0),
    "mobility-rates-3-50": dict(_MOBILE, h_min=1.0, h_max=3.0, half_angle_deg=50.0),
    "mobility-rates-5-50": dict(_MOBILE, h_min=1.0, h_max=5.0, half_angle_deg=50.0),
    "mobility-rates-3-60": dict(_MOBILE, h_min=1.0, h_max=3.0, half_angle_deg=60.0),
    "mobility-rates-5-60": dict(_MOBILE, h_min=1.0, h_max=5.0, half_angle_deg=60.0),
    "static-sweep": dict(_STATIC, half_angle_deg=50.0, allocation="proposed"),
    "mobility-sweep": dict(_MOBILE, h_min=1.0, h_max=3.0, half_angle_deg=50.0, allocation="proposed"),
}

# verb each preset is meant for (informational, printed by --help)
PRESET_VERBS = {
    "noise-pdf": "noise-pdf", "noise-pdf-gaussian": "noise-pdf", "noise-pdf-divergent": "noise-pdf",
    "static-rates-50": "rate-static", "static-rates-60": "rate-static",
    "mobility-rates-3-50": "rate-mobility", "mobility-rates-5-50": "rate-mobility",
    "mobility-rates-3-60": "rate-mobility", "mobility-rates-5-60": "rate-mobility",
    "static-sweep": "sweep", "mobility-sweep": "sweep",
}


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows, comments=()):
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            if isinstance(row, str):
                fh.write(f"# {row}\n")
            else:
                fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _write_gnuplot(path: Path, csv_name: str, columns, x_col=1, title=""):
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        f"set title '{title}'",
    ]
    plots = [f"'{csv_name}' using {x_col}:{i} with lines" for i in columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    path.write_text("\n".join(lines) + "\n")


def point_seeds(root: int, points: int, per_point: int = 1) -> np.ndarray:
    """Independent 64-bit seeds for each (point, slot), derived only from the root seed."""
    children = np.random.SeedSequence(root).spawn(points)
    return np.array([c.generate_state(per_point, np.uint64) for c in children], dtype=np.uint64)


def _map(cfg: ExperimentConfig, fn, items):
    if cfg.jobs == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(fn, items))


def _qos(cfg: ExperimentConfig, snr_db: float) -> alloc.QosSpec:
    return alloc.QosSpec(cfg.qos, cfg.total_power(snr_db), cfg.epsilon, cfg.max_iterations)


# --------------------------------------------------------------------------
# commands

def cmd_noise_pdf(cfg: ExperimentConfig, out: Path) -> int:
    noise = cfg.noise
    if noise.beta >= noise.alpha:
        raise DivergenceError(
            f"Hermite series for the noise pdf diverges when beta >= alpha (beta={noise.beta}, alpha={noise.alpha})")
    seed = int(np.random.SeedSequence(cfg.seed).generate_state(1, np.uint64)[0])
    samples = sample_phi(noise, cfg.pdf_samples, seed)
    emp = histogram(samples, cfg.bins)
    keep = (emp.centers >= cfg.phi_min) & (emp.centers <= cfg.phi_max)
    phi = emp.centers[keep]
    series = pdf_series(noise, phi)
    high = pdf_high_nu(noise, phi)
    oracle = pdf_oracle(noise, phi)
    rows = zip(phi, emp.densities[keep], series, high, oracle)
    _write_csv(out / "pdf_comparison.csv", ["phi", "empirical", "series_m10", "high_nu", "oracle"], rows,
               [f"samples={cfg.pdf_samples}", f"truncation_m={noise.truncation_m}"])
    emp.to_csv(out / "pdf_histogram.csv")
    _write_gnuplot(out / "pdf_comparison.gp", "pdf_comparison.csv", [2, 3, 4, 5], title="noise pdf")
    l1 = {
        "series": l1_distance(emp, lambda x: pdf_series(noise, x)),
        "high_nu": l1_distance(emp, lambda x: pdf_high_nu(noise, x)),
        "oracle": l1_distance(emp, lambda x: pdf_oracle(noise, x)),
    }
    for k, v in l1.items():
        print(f"L1(empirical, {k}) = {v:.6f}")
    return EXIT_OK


def _static_powers(cfg, h, snr_db):
    qos = _qos(cfg, snr_db)
    noise = cfg.noise
    if cfg.allocation == "grpa":
        return alloc.grpa(h, qos.total_power).powers, "n/a"
    res = (alloc.allocate_static(h, qos, noise) if cfg.allocation == "proposed"
           else alloc.allocate_sh_baseline(h, qos, noise))
    return res.powers.powers, res.status


def _mobility_powers(cfg, model, g, snr_db):
    qos = _qos(cfg, snr_db)
    if cfg.allocation == "grpa":
        return alloc.grpa(g, qos.total_power).powers, "n/a"
    res = alloc.allocate_mobility(model, cfg.users, qos, cfg.noise, baseline=cfg.allocation == "sh_baseline")
    return res.powers.powers, res.status


def _status_code(statuses) -> int:
    return EXIT_NUMERIC if any(s in ("max_iterations", "qos_violated") for s in statuses) else EXIT_OK


def _rate_rows(snrs, per_point, statuses):
    rows = []
    for snr, block, status in zip(snrs, per_point, statuses):
        if status not in ("n/a", "converged"):
            rows.append(f"flag snr_db={float(snr)!r} allocation_status={status}")
        rows.extend(block)
    return rows


def cmd_rate_static(cfg: ExperimentConfig, out: Path) -> int:
    noise = cfg.noise
    h = cfg.static_gains()
    snrs = cfg.snr_grid()
    seeds = point_seeds(cfg.seed, snrs.size, cfg.users)

    def point(i):
        snr = snrs[i]
        p, status = _static_powers(cfg, h, snr)
        analytic = rates_static(p, h, noise)
        block = []
        for u in range(1, cfg.users + 1):
            if p[u - 1] == 0.0:
                block.append((snr, float(u), 0.0, 0.0, 0.0))
                continue
            quad = rate_quadrature(u, p, h, noise) if cfg.quadrature_rates else float("nan")
            mc = mc_rate_entropy(u, p, h, noise, cfg.rate_samples, int(seeds[i, u - 1]))
            block.append((snr, float(u), analytic[u - 1], quad, mc))
        return block, status

    results = _map(cfg, point, range(snrs.size))
    blocks, statuses = zip(*results)
    rows = [r if isinstance(r, str) else (_fmt(r[0]), str(int(r[1])), *r[2:])
            for r in _rate_rows(snrs, blocks, statuses)]
    _write_csv(out / "rate_static.csv", ["snr_db", "user", "rate_analytic", "rate_quadrature", "rate_mc"], rows,
               [f"allocation={cfg.allocation}", "gains=" + " ".join(f"{x:.10g}" for x in h)])
    _write_gnuplot(out / "rate_static.gp", "rate_static.csv", [3, 4, 5], title="per-user rate, static")
    return _status_code(statuses)


def cmd_rate_mobility(cfg: ExperimentConfig, out: Path) -> int:
    noise = cfg.noise
    model = cfg.mobility_model()
    g = alloc.effective_gains(model, cfg.users)
    snrs = cfg.snr_grid()
    seeds = point_seeds(cfg.seed, snrs.size)

    def point(i):
        snr = snrs[i]
        p, status = _mobility_powers(cfg, model, g, snr)
        diag = {}
        quad = expected_rates(p, noise, model)
        closed, literal = [], []
        for u in range(1, cfg.users + 1):
            closed.append(expected_rate_user(u, cfg.users, p, noise, model, "closed", diag))
            try:
                literal.append(expected_rate_user(u, cfg.users, p, noise, model, "literal", {}))
            except NomaVlcError:
                literal.append(float("nan"))
        mc = mc_expected_rates(p, noise, model, cfg.rate_samples, int(seeds[i, 0]))
        block = [(snr, float(u), closed[u - 1], quad[u - 1], mc[u - 1]) for u in range(1, cfg.users + 1)]
        dev = [abs(literal[k] - quad[k]) for k in range(cfg.users)]
        return block, status, (snr, diag.get("fallback", 0), dev)

    results = _map(cfg, point, range(snrs.size))
    blocks, statuses, diags = zip(*results)
    rows = [r if isinstance(r, str) else (_fmt(r[0]), str(int(r[1])), *r[2:])
            for r in _rate_rows(snrs, blocks, statuses)]
    _write_csv(out / "rate_mobility.csv", ["snr_db", "user", "rate_analytic", "rate_quadrature", "rate_mc"], rows,
               [f"allocation={cfg.allocation}", f"h_min={cfg.h_min!r}", f"h_max={cfg.h_max!r}",
                "effective_gains=" + " ".join(f"{x:.10g}" for x in g)])
    with open(out / "rate_mobility_diagnostics.txt", "w") as fh:
        fh.write("# closed-form fallbacks to quadrature and |literal - quadrature| per user\n")
        for snr, fb, dev in diags:
            fh.write(f"snr_db={float(snr)!r} closed_fallbacks={fb} literal_deviation="
                     + " ".join(f"{d:.6g}" for d in dev) + "\n")
    _write_gnuplot(out / "rate_mobility.gp", "rate_mobility.csv", [3, 4, 5], title="per-user rate, mobility")
    return _status_code(statuses)


def sweep_point(cfg: ExperimentConfig, snr: float):
    """(proposed, grpa, sh_baseline, awgn_reference) sum rates and allocator statuses."""
    noise = cfg.noise
    quiet = noise.with_beta(0.0)
    qos = _qos(cfg, snr)
    if cfg.mode == "static":
        h = cfg.static_gains()
        prop = alloc.allocate_static(h, qos, noise)
        sh = alloc.allocate_sh_baseline(h, qos, noise)
        g = alloc.grpa(h, qos.total_power)
        vals = (prop.sum_rate, float(np.sum(rates_static(g, h, noise))), sh.sum_rate,
                float(np.sum(rates_static(sh.powers, h, quiet))))
    else:
        model = cfg.mobility_model()
        prop = alloc.allocate_mobility(model, cfg.users, qos, noise)
        sh = alloc.allocate_mobility(model, cfg.users, qos, noise, baseline=True)
        g = alloc.grpa(alloc.effective_gains(model, cfg.users), qos.total_power)
        vals = (prop.sum_rate, float(np.sum(expected_rates(g, noise, model))),
                float(np.sum(expected_rates(sh.powers, noise, model))),
                float(np.sum(expected_rates(sh.powers, quiet, model))))
    return vals, prop, sh


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    snrs = cfg.snr_grid()
    results = _map(cfg, lambda s: sweep_point(cfg, s), snrs)
    rows, statuses = [], []
    for snr, (vals, prop, sh) in zip(snrs, results):
        statuses += [prop.status, sh.status]
        if prop.status != "converged" or sh.status != "converged":
            rows.append(f"flag snr_db={float(snr)!r} proposed={prop.status} sh_baseline={sh.status}")
        rows.append((snr, *vals))
    _write_csv(out / "sumrate_sweep.csv", ["snr_db", "proposed", "grpa", "sh_baseline", "awgn_reference"], rows,
               [f"mode={cfg.mode}", "rates in bpcu"])
    _write_gnuplot(out / "sumrate_sweep.gp", "sumrate_sweep.csv", [2, 3, 4, 5], title=f"sum rate, {cfg.mode}")
    return _status_code(statuses)


def cmd_allocate(cfg: ExperimentConfig, out: Path) -> int:
    vals, prop, sh = sweep_point(cfg, cfg.allocate_snr_db)
    prop.diagnostics["snr_db"] = cfg.allocate_snr_db
    prop.to_csv(out / "allocation.csv")
    _write_csv(out / "allocation_summary.csv", ["snr_db", "proposed", "grpa", "sh_baseline", "awgn_reference"],
               [(cfg.allocate_snr_db, *vals)], [f"mode={cfg.mode}"])
    print(f"status={prop.status} iterations={prop.iterations} sum_rate={prop.sum_rate:.6f} bpcu")
    if prop.status != "converged":
        print(f"# flagged: proposed allocation status {prop.status}", file=sys.stderr)
    return _status_code([prop.status, sh.status])


COMMANDS = {
    "noise-pdf": cmd_noise_pdf,
    "rate-static": cmd_rate_static,
    "rate-mobility": cmd_rate_mobility,
    "allocate": cmd_allocate,
    "sweep": cmd_sweep,
}


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nomavlc", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat 'section.key = value' file applied over the preset")
    ap.add_argument("--preset", choices=sorted(PRESETS),
                    help="; ".join(f"{k}: {v}" for k, v in PRESET_VERBS.items()))
    ap.add_argument("--seed", type=int, help="root seed (default from config)")
    ap.add_argument("--out", help="output directory (default output.dir)")
    ap.add_argument("--jobs", type=int, help="worker threads for sweep points")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.preset:
        cfg = cfg.with_overrides(**PRESETS[args.preset])
    if args.config:
        cfg = load_config(args.config, cfg)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output_dir"] = args.out
    if args.jobs is not None:
        over["jobs"] = args.jobs
    return cfg.with_overrides(**over) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config_echo.txt").write_text(cfg.to_text())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot prepare output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NomaVlcError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if code != EXIT_OK:
        print("one or more allocations failed to converge; see flagged rows", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
