"""Experiment configuration, sweep orchestration, and CSV emission.

Config files are flat INI: one [section] per model block, scalar values
only.  Every CSV written here starts with a comment line carrying the
config hash so outputs can be traced back to their inputs; identical
config + seed reproduce byte-identical files.
"""

from dataclasses import dataclass
import configparser
import hashlib
import os

import numpy as np

from .direct import DelayProblem, solve_x_eps
from .errors import ConfigError, DegenerateFit, FloorDominated
from .expansion import ExpansionSet
from .kernels import KernelDensity
from .polynomials import PolyFunction
from .renewal import RatePair, solve_rho0
from .volterra import CorrectorTable


def fit_slope(eps, err):
    """Ordinary least squares of log err against log eps.

    Returns (slope, intercept, residual) with residual the RMS misfit of
    the regression in log space.
    """
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(eps) < 3 or len(eps) != len(err):
        raise DegenerateFit("need at least three (eps, err) pairs")
    if np.any(err <= 0) or np.any(eps <= 0):
        raise DegenerateFit("errors and eps must be strictly positive")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), resid


@dataclass
class ExperimentConfig:
    path: str
    kernel: KernelDensity | None
    source: PolyFunction
    past: PolyFunction
    order: int
    eps_values: list
    h_over_eps: float
    T: float
    micro_step: float
    micro_t_max: float
    rates: RatePair | None
    rho_init: object
    a_step: float
    A_max: float
    renewal_T: float
    layer_t_max: float
    seed: int
    threads: int
    out_dir: str
    raw_text: str

    @property
    def config_hash(self):
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def _poly_from(section, cp):
    try:
        raw = cp.get(section, "coeffs")
    except (configparser.NoSectionError, configparser.NoOptionError):
        return PolyFunction.zero()
    return PolyFunction.from_coeffs([float(x) for x in raw.replace(",", " ").split()])


def _kernel_from(cp):
    if not cp.has_section("kernel"):
        return None
    fam = cp.get("kernel", "family")
    if fam == "exponential":
        return KernelDensity.exponential(cp.getfloat("kernel", "rate"))
    if fam == "gamma":
        return KernelDensity.gamma(cp.getfloat("kernel", "shape"),
                                   cp.getfloat("kernel", "rate"))
    if fam == "poly_tail":
        scale = cp.getfloat("kernel", "scale", fallback=None)
        return KernelDensity.poly_tail(cp.getfloat("kernel", "exponent"), scale)
    if fam == "tabulated":
        samples = [float(x) for x in cp.get("kernel", "samples").split()]
        rate = cp.getfloat("kernel", "tail_rate", fallback=None)
        rule = ("exponential", rate) if rate else None
        return KernelDensity.tabulated(samples, cp.getfloat("kernel", "step"),
                                       tail_rule=rule)
    raise ConfigError(f"unknown kernel family {fam!r}")


def _rates_from(cp):
    if not cp.has_section("rates"):
        return None
    fam = cp.get("rates", "family")
    braw = cp.get("rates", "beta").split()
    beta = float(braw[0]) if len(braw) == 1 else (float(braw[0]), float(braw[1]))
    if fam == "constant":
        return RatePair.constant(cp.getfloat("rates", "zeta"), beta)
    if fam == "power_tail":
        return RatePair.power_tail(cp.getfloat("rates", "p"), beta)
    raise ConfigError(f"unknown rate family {fam!r}")


def _rho_init_from(cp, rates):
    if not cp.has_section("renewal"):
        return None
    kind = cp.get("renewal", "rho_init", fallback="stationary")
    parts = kind.split()
    if parts[0] == "stationary":
        return lambda a: solve_rho0(rates, 0.0, np.asarray(a, dtype=float))
    if parts[0] == "poly_tail":
        # poly_tail <exponent> <mass>
        p, mass = float(parts[1]), float(parts[2])
        scale = mass * (p - 1.0)
        return lambda a: scale * (1.0 + np.asarray(a, dtype=float)) ** (-p)
    if parts[0] == "exp":
        # exp <rate> <mass>
        r0, mass = float(parts[1]), float(parts[2])
        return lambda a: mass * r0 * np.exp(-r0 * np.asarray(a, dtype=float))
    raise ConfigError(f"unknown rho_init value {kind!r}")


def load_config(path, seed=None, threads=None, out=None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            raw = fh.read()
        cp.read_string(raw, source=path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    try:
        kernel = _kernel_from(cp)
        rates = _rates_from(cp)
        order = cp.getint("expansion", "order", fallback=1)
        eps_raw = cp.get("sweep", "eps", fallback="")
        eps_values = [float(x) for x in eps_raw.replace(",", " ").split()]
        h_over = cp.getfloat("sweep", "h_over_eps", fallback=0.125)
        cfg = ExperimentConfig(
            path=path,
            kernel=kernel,
            source=_poly_from("source", cp),
            past=_poly_from("past", cp),
            order=order,
            eps_values=eps_values,
            h_over_eps=h_over,
            T=cp.getfloat("sweep", "T", fallback=1.0),
            micro_step=cp.getfloat("expansion", "micro_step", fallback=1e-3),
            micro_t_max=cp.getfloat("expansion", "micro_t_max", fallback=40.0),
            rates=rates,
            rho_init=_rho_init_from(cp, rates),
            a_step=cp.getfloat("renewal", "a_step", fallback=0.05),
            A_max=cp.getfloat("renewal", "A_max", fallback=0.0),
            renewal_T=cp.getfloat("renewal", "T", fallback=1.0),
            layer_t_max=cp.getfloat("renewal", "layer_t_max", fallback=50.0),
            seed=seed if seed is not None else cp.getint("run", "seed", fallback=1234),
            threads=threads if threads is not None
            else cp.getint("run", "threads", fallback=1),
            out_dir=out if out is not None
            else cp.get("run", "out", fallback="results"),
            raw_text=raw,
        )
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    if cfg.h_over_eps > 0.25 + 1e-12:
        raise ConfigError("sweep.h_over_eps must be <= 0.25 (need 4h <= eps)")
    if cfg.kernel is not None and cfg.order + 1 > cfg.kernel.max_moment:
        raise ConfigError(
            f"kernel moments up to {cfg.order + 1} required but only "
            f"{cfg.kernel.max_moment} exist")
    if cfg.rates is not None and cfg.A_max == 0.0:
        cfg.A_max = cfg.a_step * round(cfg.rates.a_max_for_tail(1e-10, 1)
                                       / cfg.a_step + 0.5)
    return cfg


def write_csv(path, header, rows, config_hash):
    """Deterministic CSV with a config-hash comment and a header row."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                x if isinstance(x, str) else f"{x:.17g}" for x in row) + "\n")


@dataclass
class RateStudy:
    order: int
    eps_values: list
    errors: list
    floor: float
    status: str              # "ok", "exact"
    slope: float | None = None
    intercept: float | None = None
    fit_residual: float | None = None
    used_points: int = 0

    @property
    def passed(self):
        if self.status == "exact":
            return True
        return self.slope is not None and self.slope >= self.order - 0.25


def rate_study(cfg: ExperimentConfig, order=None, table=None) -> RateStudy:
    """Constant-kernel rate experiment for the matched expansion.

    For each eps the direct solution is compared with the order-N matched
    expansion in sup norm.  The slope assertion only uses sweep points
    whose error exceeds 100x the scheme-error floor (estimated by an h vs
    h/2 run at the smallest eps); if no point clears the floor and the
    floor itself is at machine scale the study reports "exact".
    """
    if cfg.kernel is None:
        raise ConfigError("rate study needs a [kernel] block")
    N = cfg.order if order is None else order
    if table is None:
        table = CorrectorTable.build(cfg.kernel, N, cfg.micro_step,
                                     cfg.micro_t_max)
    ex = ExpansionSet.build(cfg.kernel, cfg.source, cfg.past, N, table=table)
    eps_values = sorted(cfg.eps_values, reverse=True)
    if len(eps_values) < 3:
        raise ConfigError("sweep needs at least three eps values")

    def solve(eps, h):
        return solve_x_eps(DelayProblem(cfg.kernel, cfg.source, cfg.past,
                                        eps, cfg.T, h))

    errs = []
    for eps in eps_values:
        x = solve(eps, eps * cfg.h_over_eps)
        errs.append(float(np.max(np.abs(x.values - ex.evaluate(eps, x.times())))))

    eps_f = eps_values[-1]
    xa = solve(eps_f, eps_f * cfg.h_over_eps)
    xb = solve(eps_f, eps_f * cfg.h_over_eps / 2.0)
    floor = float(np.max(np.abs(xa.values - xb.values[::2])))

    scale = max(1.0, float(np.max(np.abs(xa.values))))
    usable = [(e, r) for e, r in zip(eps_values, errs) if r > 100.0 * floor]
    study = RateStudy(order=N, eps_values=eps_values, errors=errs, floor=floor,
                      status="ok", used_points=len(usable))
    if len(usable) >= 3:
        slope, intercept, resid = fit_slope([u[0] for u in usable],
                                            [u[1] for u in usable])
        study.slope, study.intercept, study.fit_residual = slope, intercept, resid
        return study
    if floor <= 1e-10 * scale and max(errs) <= max(100.0 * floor, 1e-10 * scale):
        study.status = "exact"
        return study
    raise FloorDominated(
        f"only {len(usable)} sweep points exceed 100x the scheme floor "
        f"({floor:.2e}); refine h_over_eps or enlarge eps to observe the rate")
