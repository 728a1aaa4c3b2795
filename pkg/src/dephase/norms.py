"""Weights and analytic norms for the spectral diagnostics.

The basic building block is the exponential weight
A(lam, p; k, eta) = exp(lam * <k, eta>) * <k, eta>**p with the bracket
<k, eta> = sqrt(1 + k^2 + eta^2).  The sup of A * |hhat| over the lattice is
the analyticity norm of the field; exponential decay of the order parameter
is tracked through r(lam, p; t) = |z1(t)| e^{lam t} <t>^p.

Time-dependent bookkeeping uses the shrinking analyticity budget
beta(t, lam) = lambda0 - lam - a * arctan(t), positive for all time whenever
a < 2 * lambda0 / pi.  The space-time (triple-bar) norms combine beta^(1/2)
with the lattice norms; continuous sups over (lam, t, eta) are replaced by
sups over declared sample sets, whose density is a config choice covered by
refinement tests.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .core import ConfigError, NumericalError, OrderSeries, SpectralField, mode_numbers

_EXP_LIMIT = 709.0  # log of the largest double


@dataclasses.dataclass(frozen=True)
class WeightParams:
    """Parameters (lambda0, a, gamma) of the budget weight plus sample sets.

    Requires a < 2*lambda0/pi strictly, so the budget stays positive at t -> inf,
    and gamma >= 3.  lambda_samples must lie in [0, lambda0).
    """

    lambda0: float
    a: float
    gamma: float = 3.0
    lambda_samples: tuple = ()
    t_samples: tuple | None = None

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ConfigError(f"lambda0 must be positive, got {self.lambda0}")
        if not (0 < self.a < 2 * self.lambda0 / math.pi):
            raise ConfigError(
                f"budget slope must satisfy a < 2*lambda0/pi: got a = {self.a}, "
                f"2*lambda0/pi = {2 * self.lambda0 / math.pi:.6g}"
            )
        if self.gamma < 3:
            raise ConfigError(f"gamma must be >= 3, got {self.gamma}")
        lams = tuple(float(l) for l in self.lambda_samples)
        if not lams:
            raise ConfigError("lambda_samples must be non-empty")
        if any(l < 0 or l >= self.lambda0 for l in lams):
            raise ConfigError("lambda samples must lie in [0, lambda0)")
        if list(lams) != sorted(lams):
            raise ConfigError("lambda samples must be ordered")
        object.__setattr__(self, "lambda_samples", lams)
        if self.t_samples is not None:
            object.__setattr__(self, "t_samples", tuple(float(t) for t in self.t_samples))

    @classmethod
    def default(cls, lambda0: float = 0.5, gamma: float = 3.0) -> "WeightParams":
        """a at half its admissible cap; lambda samples spread over [0, lambda0)."""
        a = lambda0 / math.pi
        lams = tuple(np.round(np.linspace(0.0, 0.9 * lambda0, 7), 12))
        return cls(lambda0=lambda0, a=a, gamma=gamma, lambda_samples=lams)


def bracket(t):
    """<t> = sqrt(1 + t^2)."""
    t = np.asarray(t, dtype=float)
    out = np.sqrt(1.0 + t * t)
    return float(out) if out.ndim == 0 else out


def bracket2(k, eta):
    """<k, eta> = sqrt(1 + k^2 + eta^2); satisfies the triangle inequality."""
    k = np.asarray(k, dtype=float)
    eta = np.asarray(eta, dtype=float)
    out = np.sqrt(1.0 + k * k + eta * eta)
    return float(out) if out.ndim == 0 else out


def weight_A(lam: float, p: float, k: int, eta: float) -> float:
    """exp(lam <k,eta>) <k,eta>^p, evaluated in log space with an overflow guard."""
    if lam < 0 or p < 0:
        raise ConfigError(f"weight needs lam, p >= 0, got lam={lam}, p={p}")
    b = bracket2(k, eta)
    log_a = lam * b + p * math.log(b)
    if log_a > _EXP_LIMIT:
        raise ConfigError(
            f"weight exponent {log_a:.3g} overflows a double at (k={k}, eta={eta}); "
            f"grid extent and lam are mismatched"
        )
    return math.exp(log_a)


def _log_weight_grid(field: SpectralField, lam: float, p: float) -> np.ndarray:
    ks = mode_numbers(field.k_max)[:, np.newaxis]
    b = bracket2(ks, field.eta_grid.points[np.newaxis, :])
    return lam * b + p * np.log(b)


def norm_lambda_p(field: SpectralField, lam: float, p: float):
    """Lattice sup of A(lam,p) * |hhat_k(eta)|; returns (value, (k, eta) at the sup).

    Computed as exp(max of log A + log |hhat|) so large weights never
    materialize; zero entries are silently excluded.
    """
    if lam < 0 or p < 0:
        raise ConfigError(f"norm needs lam, p >= 0, got lam={lam}, p={p}")
    mag = np.abs(field.values)
    if not np.all(np.isfinite(mag)):
        raise NumericalError("norm of a field with non-finite entries")
    if not mag.any():
        return 0.0, (0, 0.0)
    log_w = _log_weight_grid(field, lam, p)
    with np.errstate(divide="ignore"):
        score = log_w + np.log(mag)
    flat = int(np.argmax(score))
    r, c = np.unravel_index(flat, score.shape)
    top = float(score[r, c])
    if top > _EXP_LIMIT:
        raise NumericalError(
            f"weighted amplitude exp({top:.3g}) overflows; lam={lam} too large "
            f"for this field"
        )
    k_star = int(r) - field.k_max
    eta_star = float(field.eta_grid.points[c])
    return float(np.exp(top)), (k_star, eta_star)


def r_lambda_p(series: OrderSeries, lam: float, p: float) -> np.ndarray:
    """Damping tracker r(t) = |z1(t)| e^{lam t} <t>^p on the series grid."""
    if lam < 0 or p < 0:
        raise ConfigError(f"r needs lam, p >= 0, got lam={lam}, p={p}")
    return series.R * np.exp(lam * series.t) * bracket(series.t) ** p


def beta(t, lam: float, params: WeightParams):
    """Analyticity budget lambda0 - lam - a*arctan(t); may be <= 0 (caller filters)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigError("budget weight is defined for t >= 0")
    out = params.lambda0 - lam - params.a * np.arctan(t)
    return float(out) if out.ndim == 0 else out


@dataclasses.dataclass(frozen=True)
class TripleNormH:
    """Space-time norm of a trajectory: sum of the p=1 and weighted p=gamma sups."""

    total: float
    addend_p1: float
    addend_pgamma: float
    argsup_p1: tuple  # (lam, t)
    argsup_pgamma: tuple


def triple_norm_h(trajectory: Sequence[SpectralField], params: WeightParams) -> TripleNormH:
    """sup over admissible (lam, t) of beta^(1/2) ||h(t)||_{lam,1}, plus the same
    for ||h(t)||_{lam,gamma} / <t>.

    Admissible means beta(t, lam) > 0; t runs over the trajectory's time tags
    (checked against params.t_samples when given).
    """
    if not trajectory:
        raise ConfigError("empty trajectory")
    tags = [f.time_tag for f in trajectory]
    if params.t_samples is not None:
        if len(params.t_samples) != len(tags) or not np.allclose(params.t_samples, tags):
            raise ConfigError("trajectory time tags do not match params.t_samples")
    best1 = (-np.inf, (np.nan, np.nan))
    bestg = (-np.inf, (np.nan, np.nan))
    admissible = False
    for field, t in zip(trajectory, tags):
        for lam in params.lambda_samples:
            b = beta(t, lam, params)
            if b <= 0:
                continue
            admissible = True
            sb = math.sqrt(b)
            v1, _ = norm_lambda_p(field, lam, 1.0)
            vg, _ = norm_lambda_p(field, lam, params.gamma)
            cand1 = sb * v1
            candg = sb * vg / bracket(t)
            if cand1 > best1[0]:
                best1 = (cand1, (lam, t))
            if candg > bestg[0]:
                bestg = (candg, (lam, t))
    if not admissible:
        raise ConfigError("no admissible (lam, t) samples: budget never positive")
    return TripleNormH(
        total=best1[0] + bestg[0],
        addend_p1=best1[0],
        addend_pgamma=bestg[0],
        argsup_p1=best1[1],
        argsup_pgamma=bestg[1],
    )


def triple_norm_R(series: OrderSeries, params: WeightParams):
    """sup over admissible (lam, t) of R(t) e^{lam t} <t>^gamma.

    Returns (value, (lam, t) at the sup); t runs over the series grid.
    """
    best = 0.0
    arg = (params.lambda_samples[0], float(series.t[0]))
    for lam in params.lambda_samples:
        b = beta(series.t, lam, params)
        mask = b > 0
        if not mask.any():
            continue
        vals = r_lambda_p(series, lam, params.gamma)[mask]
        i = int(np.argmax(vals))
        if vals[i] > best:
            best = float(vals[i])
            arg = (lam, float(series.t[mask][i]))
    return best, arg


# ---------------------------------------------------------------------------
# reports


@dataclasses.dataclass(frozen=True)
class NormReport:
    """Serializable snapshot of norm evaluations at one time."""

    t: float
    entries: tuple  # of dicts {lambda, p, value, argsup_k, argsup_eta}
    triple_h: float | None = None
    triple_R: float | None = None

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "entries": list(self.entries),
            "triple_h": self.triple_h,
            "triple_R": self.triple_R,
        }


def build_norm_report(
    field: SpectralField,
    params: WeightParams,
    p_values: Sequence[float] = (1.0,),
) -> NormReport:
    entries = []
    for lam in params.lambda_samples:
        for p in p_values:
            value, (k_star, eta_star) = norm_lambda_p(field, lam, p)
            if not np.isfinite(value) or value < 0:
                raise NumericalError("norm report entry is not finite and nonnegative")
            entries.append(
                {
                    "lambda": lam,
                    "p": p,
                    "value": value,
                    "argsup_k": k_star,
                    "argsup_eta": eta_star,
                }
            )
    return NormReport(t=field.time_tag, entries=tuple(entries))
