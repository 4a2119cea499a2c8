"""Command-line surface: simulate, periodogram, fit, ess, compare, report.

Configuration is a flat ``key = value`` text file; vectors and row-major
matrices are written as bracketed comma lists, e.g.
``Sigma_eta = [0.02, 0.005, 0.005, 0.01]``. Blank lines and ``#``
comments are ignored. The ``--seed`` flag overrides the ``seed`` key.

Output files are comma-delimited UTF-8 with LF line endings; floats carry
17 significant digits so the draw files round-trip 64-bit values exactly.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .hmc import GaussianPrior, HmcConfig, ess, make_kalman_target, make_whittle_target, run_hmc
from .models import BsvParams, LgssParams, SvParams, get_model
from .rvga import (
    NotPositiveDefiniteError,
    RvgaAbort,
    RvgaConfig,
    VariationalState,
    draw_posterior,
    plan_frequencies,
    run_rvga_whittle,
)
from .sim import SimSpec, simulate
from .spectral import TimeSeries, compute_periodogram, find_cutoff, welch_smooth

__all__ = [
    "ConfigError",
    "DataError",
    "parse_config",
    "load_returns_csv",
    "log_return_transform",
    "run_fit",
    "main",
]

ENGINES = ("rvga-whittle", "hmc-whittle", "hmc-exact")


class ConfigError(Exception):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(Exception):
    """Unreadable or malformed input data (exit code 3)."""


# -- configuration --------------------------------------------------------


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        try:
            return [float(x) for x in inner.split(",")]
        except ValueError:
            raise ConfigError(f"non-numeric list entry in {raw!r}") from None
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config(path) -> dict:
    """Flat key = value file -> dict; lists parsed, scalars typed."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        cfg[key] = _parse_value(raw)
    return cfg


def _matrix(values, shape, key):
    arr = np.asarray(values, dtype=float)
    if arr.size != shape[0] * shape[1]:
        raise ConfigError(f"{key} needs {shape[0] * shape[1]} entries, got {arr.size}")
    return arr.reshape(shape)  # row-major


def _params_from_config(cfg, family):
    try:
        if family == "lgss":
            return LgssParams(cfg["phi"], cfg["sigma_eta"], cfg["sigma_eps"])
        if family == "sv1":
            return SvParams(cfg["phi"], cfg["sigma_eta"], cfg.get("kappa", 1.0))
        if family == "bsv":
            phi = np.asarray(cfg["Phi"], dtype=float)
            Phi = np.diag(phi) if phi.size == 2 else _matrix(cfg["Phi"], (2, 2), "Phi")
            return BsvParams(Phi=Phi, Sigma_eta=_matrix(cfg["Sigma_eta"], (2, 2), "Sigma_eta"))
    except KeyError as e:
        raise ConfigError(f"missing parameter key {e.args[0]!r} for family {family!r}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    raise ConfigError(f"unknown model family {family!r}")


def _prior_from_config(cfg, model):
    mean, cov = model.default_prior()
    if "prior_mean" in cfg:
        mean = np.asarray(cfg["prior_mean"], dtype=float)
    if "prior_cov_diag" in cfg:
        cov = np.diag(np.asarray(cfg["prior_cov_diag"], dtype=float))
    elif "prior_cov" in cfg:
        cov = _matrix(cfg["prior_cov"], (model.p, model.p), "prior_cov")
    if mean.shape != (model.p,) or cov.shape != (model.p, model.p):
        raise ConfigError(f"prior must have dimension {model.p} for family {model.family}")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ConfigError("prior covariance is not positive definite") from None
    return mean, cov


def _load_series(cfg, family, seed):
    if "data_path" in cfg:
        return load_returns_csv(cfg["data_path"], cfg.get("data_mode", "raw_series"))
    if "sim_T" not in cfg:
        raise ConfigError("config needs either data_path or sim_T")
    spec = SimSpec(
        family=family,
        params=_params_from_config(cfg, family),
        T=int(cfg["sim_T"]),
        seed=int(cfg.get("sim_seed", seed)),
    )
    return simulate(spec)


# -- data ingestion -------------------------------------------------------


def log_return_transform(values: np.ndarray) -> np.ndarray:
    """Per-column de-meaned log-returns: log(r_{t+1}/r_t) minus its mean."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if np.any(values <= 0):
        t, c = np.argwhere(values <= 0)[0]
        raise DataError(f"nonpositive rate at row {t + 1}, column {c + 1}")
    y = np.log(values[1:] / values[:-1])
    return y - y.mean(axis=0)


def load_returns_csv(path, mode: str = "raw_series") -> TimeSeries:
    """Read a 1- or 2-column numeric CSV, optionally as exchange rates."""
    if mode not in ("raw_series", "exchange_rates"):
        raise ConfigError(f"unknown data mode {mode!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    start = 0
    try:
        [float(c) for c in lines[0].split(",")]
    except ValueError:
        start = 1  # header row
    rows = []
    width = None
    for i, line in enumerate(lines[start:], start=start + 1):
        cells = line.split(",")
        if width is None:
            width = len(cells)
            if width not in (1, 2):
                raise DataError(f"{path}: expected 1 or 2 columns, found {width}")
        elif len(cells) != width:
            raise DataError(f"{path}: row {i} has {len(cells)} cells, expected {width}")
        row = []
        for j, cell in enumerate(cells):
            try:
                row.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell.strip()!r} at row {i}, column {j + 1}"
                ) from None
        rows.append(row)
    if len(rows) < 5:
        raise DataError(f"{path}: fewer than 5 data rows ({len(rows)})")
    values = np.asarray(rows)
    if mode == "exchange_rates":
        values = log_return_transform(values)
    return TimeSeries(values=values, label=path.name)


# -- output serialization -------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_draws(path: Path, transformed, natural, tnames, nnames) -> None:
    header = ["sample", *tnames, *nnames]
    rows = (
        [str(i)] + [_fmt(v) for v in transformed[i]] + [_fmt(v) for v in natural[i]]
        for i in range(transformed.shape[0])
    )
    _write_csv(path, header, rows)


def read_draws(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"draws file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise DataError(f"{path}: no draws")
    header = lines[0].split(",")
    try:
        data = np.asarray([[float(c) for c in ln.split(",")] for ln in lines[1:] if ln])
    except ValueError:
        raise DataError(f"{path}: non-numeric draw value") from None
    return header[1:], data[:, 1:]


def write_trajectory(path: Path, traj, p: int) -> None:
    header = (
        ["update_index", "kind"]
        + [f"mu_{j + 1}" for j in range(p)]
        + [f"sigma_diag_{j + 1}" for j in range(p)]
        + ["retries"]
    )
    rows = (
        [str(pt.index), pt.kind]
        + [_fmt(v) for v in pt.mu]
        + [_fmt(v) for v in pt.sigma_diag]
        + [str(pt.retries)]
        for pt in traj.points
    )
    _write_csv(path, header, rows)


def summarize(draws: np.ndarray, names) -> list[dict]:
    out = []
    for j, name in enumerate(names):
        col = draws[:, j]
        q = np.quantile(col, [0.025, 0.5, 0.975])
        out.append(
            {
                "name": name,
                "mean": float(col.mean()),
                "sd": float(col.std(ddof=1)),
                "q2.5": float(q[0]),
                "q50": float(q[1]),
                "q97.5": float(q[2]),
            }
        )
    return out


def write_summary(path: Path, rows: list[dict]) -> None:
    cols = ["parameter", "mean", "sd", "q2.5", "q50", "q97.5"]
    table = [cols] + [
        [r["name"]] + [format(r[c], ".6g") for c in cols[1:]] for r in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in table:
            fh.write(
                "  ".join(
                    cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                    for i, cell in enumerate(row)
                ).rstrip()
                + "\n"
            )


# -- engines --------------------------------------------------------------


def _rvga_config_from(cfg, seed, threads) -> RvgaConfig:
    block = cfg.get("block_size", 100)
    return RvgaConfig(
        S=int(cfg.get("S", 1000)),
        n_damp=int(cfg.get("n_damp", 5)),
        D=int(cfg.get("D", 100)),
        cutoff_ratio=float(cfg.get("cutoff_ratio", 0.5)),
        block_size=None if block is None else int(block),
        master_seed=seed,
        max_retries=int(cfg.get("max_retries", 8)),
        n_individual=None if cfg.get("n_individual") is None else int(cfg["n_individual"]),
        welch_segments=int(cfg.get("welch_segments", 8)),
        welch_overlap=float(cfg.get("welch_overlap", 0.5)),
        welch_window=str(cfg.get("welch_window", "hann")),
        threads=threads,
        control_variate=bool(cfg.get("control_variate", True)),
    )


def _hmc_config_from(cfg, seed) -> HmcConfig:
    return HmcConfig(
        epsilon=float(cfg.get("epsilon", 0.1)),
        L=int(cfg.get("L", 20)),
        J=int(cfg.get("J", 10000)),
        burnin=int(cfg.get("burnin", 1000)),
        n_chains=int(cfg.get("n_chains", 2)),
        seed=seed,
        adapt_epsilon=bool(cfg.get("adapt_epsilon", True)),
    )


def run_fit(cfg: dict, out: Path, seed: int, threads: int) -> dict:
    """Dispatch one fit and write draws/summary/timing (and trajectory)."""
    engine = cfg.get("engine", "rvga-whittle")
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    family = cfg.get("family")
    if family is None:
        raise ConfigError("config needs a 'family' key")
    if engine == "hmc-exact" and family != "lgss":
        raise ConfigError("engine hmc-exact supports only family lgss")
    model = get_model(family)
    mean, cov = _prior_from_config(cfg, model)
    y = _load_series(cfg, family, seed)
    n_draws = int(cfg.get("n_posterior_draws", 10000))

    t0 = time.perf_counter()
    trajectory = None
    if engine == "rvga-whittle":
        rcfg = _rvga_config_from(cfg, seed, threads)
        state, trajectory = run_rvga_whittle(model, y, VariationalState(mean, cov), rcfg)
        transformed = draw_posterior(state, n_draws, seed)
    else:
        prior = GaussianPrior(mean, cov)
        hcfg = _hmc_config_from(cfg, seed)
        if engine == "hmc-whittle":
            P = compute_periodogram(model.prepare(y))
            target = make_whittle_target(model, P, prior)
        else:
            target = make_kalman_target(model.prepare(y), prior)
        chains = run_hmc(target, hcfg, prior)
        transformed = np.vstack([c.draws for c in chains])
    seconds = time.perf_counter() - t0

    natural = model.natural_draws(transformed)
    if not (np.all(np.isfinite(transformed)) and np.all(np.isfinite(natural))):
        raise FloatingPointError("posterior draws contain non-finite values")

    out.mkdir(parents=True, exist_ok=True)
    write_draws(out / "draws.csv", transformed, natural,
                model.transformed_names, model.natural_names)
    if trajectory is not None:
        write_trajectory(out / "trajectory.csv", trajectory, model.p)
    rows = summarize(natural, model.natural_names) + summarize(
        transformed, model.transformed_names
    )
    write_summary(out / "summary.txt", rows)
    with open(out / "timing.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("engine,seconds\n")
        fh.write(f"{engine},{seconds:.3f}\n")
    return {
        "engine": engine,
        "seconds": seconds,
        "transformed": transformed,
        "natural": natural,
        "trajectory": trajectory,
        "summary": rows,
    }


# -- subcommands ----------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    family = cfg.get("family")
    if family is None:
        raise ConfigError("config needs a 'family' key")
    spec = SimSpec(
        family=family,
        params=_params_from_config(cfg, family),
        T=int(cfg.get("sim_T", cfg.get("T", 0))),
        seed=int(cfg.get("sim_seed", seed)),
    )
    y = simulate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["t"] + [f"y_{j + 1}" for j in range(y.d)]
    rows = ([str(t + 1)] + [_fmt(v) for v in y.values[t]] for t in range(y.T))
    _write_csv(out / "series.csv", header, rows)
    print(f"wrote {out / 'series.csv'} ({y.T} rows, {y.d} column(s))")
    return 0


def _cmd_periodogram(args) -> int:
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    family = cfg.get("family", "lgss")
    model = get_model(family)
    y = _load_series(cfg, family, seed)
    z = model.prepare(y)
    P = compute_periodogram(z)
    sm = welch_smooth(
        z,
        int(cfg.get("welch_segments", 8)),
        float(cfg.get("welch_overlap", 0.5)),
        str(cfg.get("welch_window", "hann")),
    )
    cutoff = find_cutoff(sm, float(cfg.get("cutoff_ratio", 0.5)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if P.d == 1:
        header = ["k", "frequency", "power"]
        rows = (
            [str(k + 1), _fmt(P.frequencies[k]), _fmt(P.ordinates[k])]
            for k in range(P.K)
        )
    else:
        header = ["k", "frequency", "power_11", "power_22", "re_power_21", "im_power_21"]
        rows = (
            [
                str(k + 1),
                _fmt(P.frequencies[k]),
                _fmt(np.real(P.ordinates[k, 0, 0])),
                _fmt(np.real(P.ordinates[k, 1, 1])),
                _fmt(np.real(P.ordinates[k, 1, 0])),
                _fmt(np.imag(P.ordinates[k, 1, 0])),
            ]
            for k in range(P.K)
        )
    _write_csv(out / "periodogram.csv", header, rows)
    if args.figures:
        from . import report

        report.plot_periodogram(P, out / "periodogram.png", smoothed=sm, cutoff_index=cutoff)
    print(f"K={P.K} retained frequencies, power cutoff at index {cutoff}")
    return 0


def _cmd_fit(args) -> int:
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    result = run_fit(cfg, Path(args.out), seed, args.threads)
    if args.figures:
        from . import report

        model = get_model(cfg["family"])
        out = Path(args.out)
        report.plot_posteriors(result["natural"], model.natural_names, out / "posterior.png")
        if result["trajectory"] is not None:
            report.plot_trajectory(
                result["trajectory"].mu_matrix(),
                result["trajectory"].sigma_diag_matrix(),
                model.transformed_names,
                out / "trajectory.png",
            )
    print(f"{result['engine']}: {result['seconds']:.3f} s, "
          f"{result['transformed'].shape[0]} draws -> {args.out}")
    return 0


def _cmd_ess(args) -> int:
    names, data = read_draws(args.draws)
    values = ess(data)
    for name, v in zip(names, values):
        print(f"{name}\t{v:.1f}")
    return 0


def _cmd_compare(args) -> int:
    names_a, a = read_draws(args.draws_a)
    names_b, b = read_draws(args.draws_b)
    if names_a != names_b:
        raise DataError("draw files have different column sets")
    print("parameter\tmean_diff_sd\tsd_ratio")
    for j, name in enumerate(names_a):
        sa, sb = a[:, j].std(ddof=1), b[:, j].std(ddof=1)
        pooled = np.sqrt(0.5 * (sa**2 + sb**2))
        dm = (a[:, j].mean() - b[:, j].mean()) / pooled if pooled > 0 else 0.0
        ratio = sa / sb if sb > 0 else np.inf
        print(f"{name}\t{dm:+.3f}\t{ratio:.3f}")
    return 0


def _cmd_report(args) -> int:
    from . import report

    out = Path(args.out)
    made = []
    draws_path = out / "draws.csv"
    if draws_path.is_file():
        names, data = read_draws(draws_path)
        made.append(report.plot_posteriors(data, names, out / "posterior.png"))
    traj_path = out / "trajectory.csv"
    if traj_path.is_file():
        lines = traj_path.read_text(encoding="utf-8").splitlines()
        header = lines[0].split(",")
        p = sum(1 for h in header if h.startswith("mu_"))
        body = [ln.split(",") for ln in lines[1:] if ln]
        mu = np.asarray([[float(c) for c in row[2 : 2 + p]] for row in body])
        sd = np.asarray([[float(c) for c in row[2 + p : 2 + 2 * p]] for row in body])
        made.append(
            report.plot_trajectory(mu, sd, header[2 : 2 + p], out / "trajectory.png")
        )
    if not made:
        raise DataError(f"no draws.csv or trajectory.csv under {out}")
    for path in made:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whittlevb",
        description="Frequency-domain variational and MCMC inference for state space models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")

    p = sub.add_parser("simulate", help="generate a series from a model family")
    common(p)
    p = sub.add_parser("periodogram", help="periodogram, smoothing, cutoff")
    common(p)
    p.add_argument("--figures", action="store_true", help="render PNG figures")
    p = sub.add_parser("fit", help="run an inference engine")
    common(p)
    p.add_argument("--figures", action="store_true", help="render PNG figures")
    p = sub.add_parser("ess", help="effective sample sizes of a draws file")
    p.add_argument("draws", help="draws.csv from a fit")
    p = sub.add_parser("compare", help="mean/sd differences between two draw files")
    p.add_argument("draws_a")
    p.add_argument("draws_b")
    p = sub.add_parser("report", help="render figures from an output directory")
    p.add_argument("--out", required=True, help="directory holding fit outputs")
    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "periodogram": _cmd_periodogram,
    "fit": _cmd_fit,
    "ess": _cmd_ess,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (
        FloatingPointError,
        RvgaAbort,
        NotPositiveDefiniteError,
        np.linalg.LinAlgError,
    ) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
