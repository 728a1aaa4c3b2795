"""Run configuration: dataclass, validation, TOML/JSON ingestion, hashing.

Config files are TOML (or JSON with the same structure).  Sections and field
names:

[run]         mu, dt, t_max, k_max, seed, snapshot_stride
[omega_grid]  half_width, n_points
[eta_grid]    half_width, n_points
[weights]     lambda0, a, gamma, lambda_samples
[initial]     family ("gaussian" | "lorentzian" | "tabulated"), sigma | delta
              | omega + density, perturbations (list of {k, re, im}),
              check_normalization
[output]      directory, write_csv_snapshots
[picard]      tol, max_iters
[particles]   n, dt, t_max
[estimates]   fit_window ([t_lo, t_hi]), lam, p, convergence_tol

All physical quantities are in model units (time dimensionless, frequencies in
radians per unit time).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .core import (
    ConfigError,
    EtaGrid,
    Gaussian,
    InitialDatum,
    Lorentzian,
    OmegaGrid,
    Tabulated,
)
from .norms import WeightParams

ETA_MARGIN = 2.0  # minimum eta headroom past the time horizon


@dataclasses.dataclass(frozen=True)
class RunConfig:
    mu: float
    dt: float
    t_max: float
    k_max: int
    omega_grid: OmegaGrid
    eta_grid: EtaGrid
    weight_params: WeightParams
    initial: InitialDatum
    seed: int = 0
    snapshot_stride: float = 0.5
    out_dir: str | None = None
    write_csv_snapshots: bool = False
    richardson_check: bool = True
    picard_tol: float = 1e-6
    picard_max_iters: int = 25
    particles_n: int = 50_000
    particles_dt: float | None = None
    particles_t_max: float | None = None
    fit_window: tuple = (5.0, 20.0)
    estimates_lam: float = 0.25
    estimates_p: float = 1.0
    convergence_tol: float = 1e-4  # allowed sup_t R change under grid refinement

    def validate(self) -> None:
        if self.mu < 0:
            raise ConfigError(f"coupling must satisfy mu >= 0, got {self.mu}")
        if self.dt <= 0:
            raise ConfigError(f"time step must satisfy dt > 0, got {self.dt}")
        if self.t_max <= 0:
            raise ConfigError(f"horizon must satisfy t_max > 0, got {self.t_max}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be >= 1, got {self.k_max}")
        n_steps = self.t_max / self.dt
        if abs(n_steps - round(n_steps)) > 1e-9 * max(1.0, n_steps):
            raise ConfigError(f"t_max = {self.t_max} is not an integer multiple of dt = {self.dt}")
        stride_steps = self.snapshot_stride / self.dt
        if abs(stride_steps - round(stride_steps)) > 1e-9 * max(1.0, stride_steps):
            raise ConfigError(
                f"snapshot_stride = {self.snapshot_stride} is not an integer multiple of dt"
            )
        if self.eta_grid.half_width < self.t_max + ETA_MARGIN:
            raise ConfigError(
                f"eta grid half_width = {self.eta_grid.half_width} must be >= "
                f"t_max + {ETA_MARGIN} = {self.t_max + ETA_MARGIN} so shifted arguments "
                f"stay representable"
            )
        if self.picard_tol <= 0:
            raise ConfigError("picard tol must be positive")
        if self.initial.max_mode() > self.k_max:
            raise ConfigError(
                f"k_max = {self.k_max} below highest perturbed mode {self.initial.max_mode()}"
            )
        self.initial.validate()

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def snapshot_every(self) -> int:
        return int(round(self.snapshot_stride / self.dt))

    def snapshot_times(self) -> list[float]:
        times = [i * self.dt for i in range(0, self.n_steps + 1, self.snapshot_every)]
        if times[-1] != self.n_steps * self.dt:
            times.append(self.n_steps * self.dt)
        return times

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)

    # -- serialization ------------------------------------------------------

    def canonical_dict(self) -> dict:
        init: dict = {"check_normalization": self.initial.check_normalization}
        g = self.initial.g
        if isinstance(g, Gaussian):
            init["family"] = "gaussian"
            init["sigma"] = g.sigma
        elif isinstance(g, Lorentzian):
            init["family"] = "lorentzian"
            init["delta"] = g.delta
        elif isinstance(g, Tabulated):
            init["family"] = "tabulated"
            init["omega"] = list(g.omega)
            init["density"] = list(g.density_values)
        else:
            raise ConfigError(f"unknown frequency family {type(g).__name__}")
        init["perturbations"] = [
            {"k": int(k), "re": complex(eps).real, "im": complex(eps).imag}
            for k, eps in self.initial.perturbations
        ]
        return {
            "run": {
                "mu": self.mu,
                "dt": self.dt,
                "t_max": self.t_max,
                "k_max": self.k_max,
                "seed": self.seed,
                "snapshot_stride": self.snapshot_stride,
            },
            "omega_grid": {
                "half_width": self.omega_grid.half_width,
                "n_points": self.omega_grid.n_points,
            },
            "eta_grid": {
                "half_width": self.eta_grid.half_width,
                "n_points": self.eta_grid.n_points,
            },
            "weights": {
                "lambda0": self.weight_params.lambda0,
                "a": self.weight_params.a,
                "gamma": self.weight_params.gamma,
                "lambda_samples": list(self.weight_params.lambda_samples),
            },
            "initial": init,
            "output": {
                "directory": self.out_dir,
                "write_csv_snapshots": self.write_csv_snapshots,
            },
            "picard": {"tol": self.picard_tol, "max_iters": self.picard_max_iters},
            "particles": {
                "n": self.particles_n,
                "dt": self.particles_dt,
                "t_max": self.particles_t_max,
            },
            "estimates": {
                "fit_window": list(self.fit_window),
                "lam": self.estimates_lam,
                "p": self.estimates_p,
                "convergence_tol": self.convergence_tol,
            },
            "richardson_check": self.richardson_check,
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def _get(section: dict, key: str, where: str, required: bool = True, default=None):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"missing config field [{where}] {key}")
    return default


def _build_initial(section: dict) -> InitialDatum:
    family = str(_get(section, "family", "initial")).lower()
    if family == "gaussian":
        g = Gaussian(sigma=float(section.get("sigma", 1.0)))
    elif family == "lorentzian":
        g = Lorentzian(delta=float(section.get("delta", 1.0)))
    elif family == "tabulated":
        g = Tabulated(
            omega=tuple(float(x) for x in _get(section, "omega", "initial")),
            density_values=tuple(float(x) for x in _get(section, "density", "initial")),
        )
    else:
        raise ConfigError(f"unknown initial family {family!r}")
    perts = []
    for item in section.get("perturbations", []):
        perts.append(
            (int(_get(item, "k", "initial.perturbations")),
             complex(float(item.get("re", 0.0)), float(item.get("im", 0.0))))
        )
    return InitialDatum(
        g=g,
        perturbations=tuple(perts),
        check_normalization=bool(section.get("check_normalization", True)),
    )


def config_from_dict(raw: dict) -> RunConfig:
    run = raw.get("run", {})
    og = raw.get("omega_grid", {})
    eg = raw.get("eta_grid", {})
    ws = raw.get("weights", {})
    out = raw.get("output", {})
    pic = raw.get("picard", {})
    par = raw.get("particles", {})
    est = raw.get("estimates", {})

    t_max = float(_get(run, "t_max", "run"))
    lambda0 = float(ws.get("lambda0", 0.5))
    gamma = float(ws.get("gamma", 3.0))
    if "lambda_samples" in ws:
        lams = tuple(float(x) for x in ws["lambda_samples"])
    else:
        lams = WeightParams.default(lambda0, gamma).lambda_samples
    a = float(ws.get("a", lambda0 / math.pi))
    weight_params = WeightParams(lambda0=lambda0, a=a, gamma=gamma, lambda_samples=lams)

    cfg = RunConfig(
        mu=float(_get(run, "mu", "run")),
        dt=float(_get(run, "dt", "run")),
        t_max=t_max,
        k_max=int(_get(run, "k_max", "run")),
        omega_grid=OmegaGrid(
            half_width=float(_get(og, "half_width", "omega_grid")),
            n_points=int(_get(og, "n_points", "omega_grid")),
        ),
        eta_grid=EtaGrid(
            half_width=float(eg.get("half_width", t_max + 5.0)),
            n_points=int(eg.get("n_points", 201)),
        ),
        weight_params=weight_params,
        initial=_build_initial(raw.get("initial", {})),
        seed=int(run.get("seed", 0)),
        snapshot_stride=float(run.get("snapshot_stride", 0.5)),
        out_dir=out.get("directory"),
        write_csv_snapshots=bool(out.get("write_csv_snapshots", False)),
        richardson_check=bool(raw.get("richardson_check", True)),
        picard_tol=float(pic.get("tol", 1e-6)),
        picard_max_iters=int(pic.get("max_iters", 25)),
        particles_n=int(par.get("n", 50_000)),
        particles_dt=None if par.get("dt") is None else float(par["dt"]),
        particles_t_max=None if par.get("t_max") is None else float(par["t_max"]),
        fit_window=tuple(float(x) for x in est.get("fit_window", (5.0, t_max))),
        estimates_lam=float(est.get("lam", 0.25)),
        estimates_p=float(est.get("p", 1.0)),
        convergence_tol=float(est.get("convergence_tol", 1e-4)),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        raw = json.loads(text.decode())
    else:
        try:
            raw = tomllib.loads(text.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a table, got {type(raw).__name__}")
    return config_from_dict(raw)
