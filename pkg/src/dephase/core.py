"""Grids, spectral state, and initial data for the gliding-frame oscillator density.

The evolving state is the family of angular Fourier modes h_k(t, omega) of the
phase density in the frame that glides with the free rotation.  Two lattices
are involved:

* the frequency grid (omega), on which the mixed representation h_k(omega)
  lives and on which all quadratures are trapezoidal;
* the dual grid (eta), on which the fully transformed field
  hhat_k(eta) = integral of h_k(omega) exp(-i eta omega) d omega
  is tabulated for norm diagnostics.

Transform conventions carry no 1/(2pi) prefactors: the angular transform is
integral over the torus of exp(-i k theta), the frequency transform is the
plain Fourier integral above.  With these conventions the order parameter is
exactly the mode-(1) transform evaluated on the diagonal, z1(t) = hhat_1(t, t),
and the mode-0 transform equals the transform of the conserved frequency
marginal g.
"""
from __future__ import annotations

import dataclasses
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import ndtri

REALITY_TOL = 1e-12
MASS_TOL = 1e-10
_POSITIVITY_TOL = 1e-12
_THETA_SCAN_POINTS = 4096


class ConfigError(ValueError):
    """A configuration or precondition violation (CLI exit code 1)."""


class DatumError(ConfigError):
    """An initial datum that fails positivity or normalization."""


class NumericalError(RuntimeError):
    """A numerical abort: non-finite state or singular step (CLI exit code 2)."""


# ---------------------------------------------------------------------------
# grids


@dataclasses.dataclass(frozen=True)
class OmegaGrid:
    """Uniform symmetric grid omega in [-half_width, half_width]."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 16:
            raise ConfigError(f"omega grid needs n_points >= 16, got {self.n_points}")
        if self.half_width <= 0:
            raise ConfigError(f"omega grid needs half_width > 0, got {self.half_width}")

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_points, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclasses.dataclass(frozen=True)
class EtaGrid:
    """Uniform symmetric grid for the dual variable eta.

    Must extend past the time horizon (half_width >= t_max + margin) so that
    the time-shifted arguments eta -+ t of the coupling operator stay on the
    lattice.
    """

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigError(f"eta grid needs n_points >= 2, got {self.n_points}")
        if self.half_width <= 0:
            raise ConfigError(f"eta grid needs half_width > 0, got {self.half_width}")

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)


def mode_numbers(k_max: int) -> np.ndarray:
    """Row index -> angular mode number, k = -k_max .. k_max."""
    return np.arange(-k_max, k_max + 1)


# ---------------------------------------------------------------------------
# fields


@dataclasses.dataclass
class MixedField:
    """Angular mode amplitudes h_k(omega) on the frequency grid.

    values[r, j] holds mode k = r - k_max at omega_grid.points[j].
    Reality of the underlying density requires h_{-k}(omega) = conj(h_k(omega)).
    """

    k_max: int
    omega_grid: OmegaGrid
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        expected = (2 * self.k_max + 1, self.omega_grid.n_points)
        if self.values.shape != expected:
            raise ConfigError(
                f"mixed field shape {self.values.shape} != expected {expected}"
            )

    def row(self, k: int) -> np.ndarray:
        if abs(k) > self.k_max:
            raise ConfigError(f"mode {k} outside |k| <= {self.k_max}")
        return self.values[self.k_max + k]

    def copy(self) -> "MixedField":
        return MixedField(self.k_max, self.omega_grid, self.values.copy(), self.time_tag)

    def reality_defect(self) -> float:
        flipped = np.conj(self.values[::-1])
        return float(np.max(np.abs(self.values - flipped)))

    def enforce_reality(self) -> float:
        """Symmetrize h_k <- (h_k + conj(h_{-k}))/2 in place; returns prior defect."""
        flipped = np.conj(self.values[::-1])
        defect = float(np.max(np.abs(self.values - flipped)))
        self.values = 0.5 * (self.values + flipped)
        return defect

    def mass(self) -> float:
        """Quadrature of the mode-0 row (the conserved frequency marginal)."""
        return float(np.real(np.dot(self.omega_grid.weights, self.values[self.k_max])))

    def validate(self, reality_tol: float = REALITY_TOL) -> None:
        if not np.all(np.isfinite(self.values.view(np.float64))):
            raise NumericalError("mixed field contains non-finite entries")
        defect = self.reality_defect()
        if defect > reality_tol:
            raise ConfigError(f"reality defect {defect:.3e} exceeds {reality_tol:.1e}")


@dataclasses.dataclass
class SpectralField:
    """Fully transformed amplitudes hhat_k(eta) on the (k, eta) lattice.

    Reality symmetry here pairs opposite modes and opposite eta:
    hhat_{-k}(-eta) = conj(hhat_k(eta)).
    """

    k_max: int
    eta_grid: EtaGrid
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        expected = (2 * self.k_max + 1, self.eta_grid.n_points)
        if self.values.shape != expected:
            raise ConfigError(
                f"spectral field shape {self.values.shape} != expected {expected}"
            )

    def row(self, k: int) -> np.ndarray:
        if abs(k) > self.k_max:
            raise ConfigError(f"mode {k} outside |k| <= {self.k_max}")
        return self.values[self.k_max + k]

    def reality_defect(self) -> float:
        flipped = np.conj(self.values[::-1, ::-1])
        return float(np.max(np.abs(self.values - flipped)))

    def validate(self) -> None:
        if not np.all(np.isfinite(self.values.view(np.float64))):
            raise NumericalError("spectral field contains non-finite entries")


# ---------------------------------------------------------------------------
# frequency distributions


class FrequencyDistribution:
    """Distribution g of natural frequencies; subclasses are value types."""

    def density(self, omega: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spectral(self, eta):
        """Closed-form Fourier transform of g, or None when unavailable."""
        return None

    def tail_mass(self, half_width: float) -> float:
        """Mass of g outside [-half_width, half_width]."""
        raise NotImplementedError

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclasses.dataclass(frozen=True)
class Gaussian(FrequencyDistribution):
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"gaussian width must be positive, got {self.sigma}")

    def density(self, omega):
        s = self.sigma
        return np.exp(-np.asarray(omega) ** 2 / (2 * s * s)) / (s * np.sqrt(2 * np.pi))

    def spectral(self, eta):
        return np.exp(-(self.sigma * np.asarray(eta, dtype=float)) ** 2 / 2)

    def tail_mass(self, half_width):
        from scipy.special import erfc

        return float(erfc(half_width / (self.sigma * np.sqrt(2.0))))

    def inverse_cdf(self, u):
        return self.sigma * ndtri(u)

    def cdf(self, omega):
        from scipy.special import erf

        return 0.5 * (1.0 + erf(np.asarray(omega) / (self.sigma * np.sqrt(2.0))))


@dataclasses.dataclass(frozen=True)
class Lorentzian(FrequencyDistribution):
    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError(f"lorentzian width must be positive, got {self.delta}")

    def density(self, omega):
        d = self.delta
        return (d / np.pi) / (np.asarray(omega) ** 2 + d * d)

    def spectral(self, eta):
        return np.exp(-self.delta * np.abs(np.asarray(eta, dtype=float)))

    def tail_mass(self, half_width):
        return float((2.0 / np.pi) * np.arctan(self.delta / half_width))

    def inverse_cdf(self, u):
        return self.delta * np.tan(np.pi * (np.asarray(u) - 0.5))

    def cdf(self, omega):
        return 0.5 + np.arctan(np.asarray(omega) / self.delta) / np.pi


@dataclasses.dataclass(frozen=True)
class Tabulated(FrequencyDistribution):
    """Density given by samples on its own grid; zero outside the table."""

    omega: tuple
    density_values: tuple

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        dv = np.asarray(self.density_values, dtype=float)
        if om.ndim != 1 or om.shape != dv.shape or om.size < 4:
            raise ConfigError("tabulated density needs matching 1-d tables, >= 4 points")
        if np.any(np.diff(om) <= 0):
            raise ConfigError("tabulated density grid must be strictly increasing")
        if np.any(dv < 0):
            raise DatumError("tabulated density must be nonnegative")

    def _tables(self):
        return np.asarray(self.omega, dtype=float), np.asarray(self.density_values, dtype=float)

    def density(self, omega):
        om, dv = self._tables()
        return np.interp(np.asarray(omega, dtype=float), om, dv, left=0.0, right=0.0)

    def grid_mass(self) -> float:
        om, dv = self._tables()
        return float(np.trapezoid(dv, om))

    def tail_mass(self, half_width):
        om, dv = self._tables()
        inside = np.clip(om, -half_width, half_width)
        return max(0.0, self.grid_mass() - float(np.trapezoid(dv, inside)))

    def inverse_cdf(self, u):
        om, dv = self._tables()
        cdf = np.concatenate([[0.0], np.cumsum((dv[1:] + dv[:-1]) * 0.5 * np.diff(om))])
        cdf /= cdf[-1]
        return np.interp(np.asarray(u), cdf, om)

    def cdf(self, omega):
        om, dv = self._tables()
        c = np.concatenate([[0.0], np.cumsum((dv[1:] + dv[:-1]) * 0.5 * np.diff(om))])
        total = c[-1]
        return np.interp(np.asarray(omega, dtype=float), om, c / total, left=0.0, right=1.0)


# ---------------------------------------------------------------------------
# initial datum


@dataclasses.dataclass(frozen=True)
class InitialDatum:
    """Initial density f0(theta, omega) = g(omega)/(2 pi) * (1 + sum_k 2 Re(eps_k e^{i k theta})).

    Perturbations are given per positive angular mode with complex amplitude;
    negative modes are implied by conjugation so the density stays real.
    """

    g: FrequencyDistribution
    perturbations: tuple = ()
    check_normalization: bool = True

    def amplitude(self, k: int) -> complex:
        for mode, eps in self.perturbations:
            if mode == k:
                return complex(eps)
        return 0.0 + 0.0j

    def angular_profile(self, theta: np.ndarray) -> np.ndarray:
        """The theta-dependent factor 1 + sum_k 2 Re(eps_k e^{i k theta})."""
        theta = np.asarray(theta, dtype=float)
        out = np.ones_like(theta)
        for mode, eps in self.perturbations:
            out = out + 2.0 * np.real(complex(eps) * np.exp(1j * mode * theta))
        return out

    def f0(self, theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
        """Samples of f0 on the outer product theta x omega."""
        prof = self.angular_profile(np.asarray(theta))
        dens = self.g.density(np.asarray(omega))
        return np.outer(prof, dens) / (2.0 * np.pi)

    def validate(self) -> None:
        seen = set()
        for mode, _eps in self.perturbations:
            if int(mode) != mode or mode < 1:
                raise ConfigError(f"perturbation modes must be integers >= 1, got {mode}")
            if mode in seen:
                raise ConfigError(f"duplicate perturbation mode {mode}")
            seen.add(mode)
        theta = np.linspace(0.0, 2 * np.pi, _THETA_SCAN_POINTS, endpoint=False)
        prof = self.angular_profile(theta)
        lowest = float(prof.min())
        if lowest < -_POSITIVITY_TOL:
            worst = float(theta[int(prof.argmin())])
            raise DatumError(
                f"initial density is negative: angular factor reaches {lowest:.6g} "
                f"near theta = {worst:.4f}"
            )
        if self.check_normalization and isinstance(self.g, Tabulated):
            mass = self.g.grid_mass()
            if abs(mass - 1.0) > MASS_TOL:
                raise DatumError(
                    f"tabulated frequency density has mass {mass!r}, expected 1 "
                    f"within {MASS_TOL:.1e}"
                )

    def max_mode(self) -> int:
        return max((mode for mode, _ in self.perturbations), default=0)


def make_initial_field(datum: InitialDatum, grid: OmegaGrid, k_max: int) -> MixedField:
    """Angular transform of f0 in closed form: h_0 = g, h_k = eps_k g for k >= 1."""
    datum.validate()
    if datum.max_mode() > k_max:
        raise ConfigError(
            f"k_max = {k_max} below highest perturbed mode {datum.max_mode()}"
        )
    dens = datum.g.density(grid.points)
    values = np.zeros((2 * k_max + 1, grid.n_points), dtype=np.complex128)
    values[k_max] = dens
    for mode, eps in datum.perturbations:
        values[k_max + mode] = complex(eps) * dens
        values[k_max - mode] = np.conj(complex(eps)) * dens
    return MixedField(k_max, grid, values, 0.0)


# ---------------------------------------------------------------------------
# transforms


def mixed_to_spectral(field: MixedField, eta: EtaGrid) -> SpectralField:
    """Trapezoidal transform of every mode row onto the eta lattice.

    Guards against an eta grid too coarse to represent the transform of a
    function supported in [-W, W]: requires spacing(eta) * W <= pi.
    """
    W = field.omega_grid.half_width
    if eta.spacing * W > np.pi * (1.0 + 1e-12):
        raise ConfigError(
            f"eta grid too coarse for omega support: spacing*W = {eta.spacing * W:.6g} "
            f"> pi (aliasing guard)"
        )
    phases = np.exp(-1j * np.outer(field.omega_grid.points, eta.points))
    weighted = field.values * field.omega_grid.weights[np.newaxis, :]
    return SpectralField(field.k_max, eta, weighted @ phases, field.time_tag)


def evaluate_spectral_at(field: MixedField, k: int, eta: float) -> complex:
    """Direct quadrature of hhat_k at one (possibly off-grid) eta; no interpolation."""
    if abs(k) > field.k_max:
        raise ConfigError(f"mode {k} outside |k| <= {field.k_max}")
    row = field.values[field.k_max + k]
    phase = np.exp(-1j * eta * field.omega_grid.points)
    return complex(np.dot(row * field.omega_grid.weights, phase))


# ---------------------------------------------------------------------------
# order parameter series


@dataclasses.dataclass(frozen=True)
class OrderSample:
    """One time sample of the complex order parameter z1 = R e^{-i phi}."""

    t: float
    z1: complex

    @property
    def R(self) -> float:
        return abs(self.z1)


@dataclasses.dataclass
class OrderSeries:
    """Time series of z1(t); the conjugate mode is never stored."""

    t: np.ndarray
    z1: np.ndarray
    source: str = "kinetic"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.z1 = np.asarray(self.z1, dtype=np.complex128)
        if self.t.shape != self.z1.shape or self.t.ndim != 1:
            raise ConfigError("order series needs matching 1-d t and z1 arrays")
        if self.t.size >= 2 and np.any(np.diff(self.t) <= 0):
            raise ConfigError("order series timestamps must be strictly increasing")

    @property
    def R(self) -> np.ndarray:
        return np.abs(self.z1)

    def sample(self, i: int) -> OrderSample:
        return OrderSample(float(self.t[i]), complex(self.z1[i]))

    def z_at(self, times: np.ndarray) -> np.ndarray:
        """Linear interpolation of z1 (componentwise) at the given times."""
        times = np.asarray(times, dtype=float)
        re = np.interp(times, self.t, self.z1.real)
        im = np.interp(times, self.t, self.z1.imag)
        return re + 1j * im


def spectral_trajectory(snapshots: Sequence[MixedField], eta: EtaGrid) -> list[SpectralField]:
    """Transform a snapshot sequence onto the eta lattice."""
    return [mixed_to_spectral(f, eta) for f in snapshots]
