"""Closed-form rf-SQUID device physics and the ladder line description.

All quantities are SI; phases are in radians.  The reduced flux quantum is
``PHI0 = hbar / 2e``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import e, hbar

PHI0 = hbar / (2 * e)
LOG10E = math.log10(math.e)


class InvalidBiasError(ValueError):
    """Raised when a bias point leaves the non-hysteretic, positive-inductance regime."""


def screening_parameter(L, Ic):
    """Return beta_L = L * Ic / phi0."""
    if L <= 0 or Ic < 0:
        raise ValueError(f"need L > 0 and Ic >= 0, got L={L}, Ic={Ic}")
    return L * Ic / PHI0


def solve_dc_phase(phi_e, beta_L, tol=1e-12, max_iter=100):
    """Solve ``phi + beta_L * sin(phi) = phi_e`` for the dc junction phase.

    The left-hand side is strictly increasing for ``beta_L < 1`` so the root is
    unique.  Safeguarded Newton: every iterate is kept inside a bracket that is
    shrunk on each step, with bisection whenever Newton would leave it.
    """
    if not 0 <= beta_L < 1:
        raise InvalidBiasError(f"beta_L must lie in [0, 1), got {beta_L}")
    if beta_L == 0:
        return float(phi_e)
    # |phi - phi_e| <= beta_L, so this bracket always contains the root
    lo, hi = phi_e - beta_L - 1e-12, phi_e + beta_L + 1e-12
    x = float(phi_e)
    for _ in range(max_iter):
        f = x + beta_L * math.sin(x) - phi_e
        if f > 0:
            hi = x
        else:
            lo = x
        df = 1 + beta_L * math.cos(x)
        step = f / df
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < tol:
            x = x_new
            break
        x = x_new
    return x


def small_signal_inductance(L, beta_L, phi_dc):
    """Linear rf-SQUID inductance ``L / (1 + beta_L cos phi_dc)``."""
    den = 1 + beta_L * math.cos(phi_dc)
    if den <= 0:
        raise InvalidBiasError(f"1 + beta_L cos(phi_dc) = {den} is not positive")
    return L / den


def nonlinearity_coeffs(beta_L, phi_dc):
    """Return the quadratic (beta) and Kerr (gamma) nonlinearity coefficients."""
    den = 1 + beta_L * np.cos(phi_dc)
    if np.any(den <= 0):
        raise InvalidBiasError("1 + beta_L cos(phi_dc) must be positive")
    beta = 0.5 * beta_L * np.sin(phi_dc) / den
    gamma = beta_L / 6 * np.cos(phi_dc) / den
    return beta, gamma


def approx_dispersion(omega, omega0, omegaJ):
    """Low-frequency expansion of k(omega) in rad/cell; valid for omega << omega0, omegaJ."""
    x = omega / omega0
    return x * (1 + omega**2 / (2 * omegaJ**2) + omega**2 / (24 * omega0**2))


def subgap_attenuation_db(N, omega, L_S0, Z0, RJ):
    """Attenuation of a forward wave due to the junction subgap resistance, in dB."""
    if math.isinf(RJ):
        return 0.0 * omega
    return 10 * LOG10E * N * omega**2 * L_S0**2 / (Z0 * RJ)


@dataclass(frozen=True)
class SquidParams:
    L: float = 84e-12
    Ic: float = 1.57e-6
    CJ: float = 20e-15
    IcRJ: float = 16.5e-3  # V; math.inf for a lossless junction

    def __post_init__(self):
        if self.L <= 0 or self.Ic <= 0 or self.CJ <= 0:
            raise ValueError("L, Ic and CJ must be strictly positive")
        if not self.IcRJ > 0:
            raise ValueError("IcRJ must be positive or inf")

    @property
    def RJ(self):
        return self.IcRJ / self.Ic

    @property
    def beta_L(self):
        return screening_parameter(self.L, self.Ic)


@dataclass(frozen=True)
class BiasPoint:
    Idc: float
    phi_e: float
    phi_dc: float
    L_S0: float
    beta: float
    gamma: float

    @classmethod
    def from_current(cls, squid: SquidParams, Idc: float) -> "BiasPoint":
        # the dc current through the SQUID inductor sets the external flux L*Idc
        phi_e = squid.L * Idc / PHI0
        return cls.from_flux(squid, phi_e, Idc=Idc)

    @classmethod
    def from_flux(cls, squid: SquidParams, phi_e: float, Idc: float = math.nan) -> "BiasPoint":
        bl = squid.beta_L
        phi_dc = solve_dc_phase(phi_e, bl)
        L_S0 = small_signal_inductance(squid.L, bl, phi_dc)
        beta, gamma = nonlinearity_coeffs(bl, phi_dc)
        return cls(Idc, phi_e, phi_dc, L_S0, float(beta), float(gamma))


@dataclass(frozen=True)
class LoadingProfile:
    """Three-level periodic ground-capacitance loading.

    One period is ``[C01]*kappa + [C02]*mu + [C01]*kappa + [C03]*nu``.
    """

    C01: float = 8.8e-15
    C02: float = 62.3e-15
    C03: float = 80e-15
    kappa: int = 5
    mu: int = 5
    nu: int = 5
    N: int = 1500

    def __post_init__(self):
        if min(self.kappa, self.mu, self.nu) < 0 or self.m == 0:
            raise ValueError("segment lengths must be non-negative with a non-empty period")
        if self.N % self.m:
            raise ValueError(f"N={self.N} is not a multiple of the loading period m={self.m}")
        if min(self.C01, self.C02, self.C03) <= 0:
            raise ValueError("loading capacitances must be positive")

    @classmethod
    def uniform(cls, C: float, N: int = 1500) -> "LoadingProfile":
        return cls(C, C, C, 0, 1, 0, N)

    @property
    def m(self) -> int:
        return 2 * self.kappa + self.mu + self.nu

    @property
    def is_uniform(self) -> bool:
        used = {self.C01} if self.kappa else set()
        if self.mu:
            used.add(self.C02)
        if self.nu:
            used.add(self.C03)
        return len(used) == 1

    def period(self) -> np.ndarray:
        return np.array(
            [self.C01] * self.kappa + [self.C02] * self.mu + [self.C01] * self.kappa + [self.C03] * self.nu
        )

    def sequence(self) -> np.ndarray:
        return np.tile(self.period(), self.N // self.m)

    @property
    def mean(self) -> float:
        return math.fsum([2 * self.kappa * self.C01, self.mu * self.C02, self.nu * self.C03]) / self.m


@dataclass(frozen=True)
class LineSpec:
    """Complete electrical description of the ladder.

    ``L_S0_override`` replaces the bias-derived small-signal inductance in the
    linear analysis; the transient solver always uses the physical SQUID.
    """

    squid: SquidParams = field(default_factory=SquidParams)
    Idc: float = 9.8e-6
    profile: LoadingProfile = field(default_factory=LoadingProfile)
    Z0: float = 50.0
    Rs: float = 50.0
    Rt: float = 50.0
    L_S0_override: float | None = None

    def __post_init__(self):
        if self.squid.beta_L >= 1:
            raise InvalidBiasError(f"hysteretic SQUID: beta_L = {self.squid.beta_L:.4f} >= 1")

    @property
    def N(self) -> int:
        return self.profile.N

    @property
    def bias(self) -> BiasPoint:
        return BiasPoint.from_current(self.squid, self.Idc)

    @property
    def L_S0(self) -> float:
        return self.L_S0_override if self.L_S0_override is not None else self.bias.L_S0

    @property
    def C_mean(self) -> float:
        return self.profile.mean

    @property
    def omega0(self) -> float:
        return 1 / math.sqrt(self.L_S0 * self.C_mean)

    @property
    def omegaJ(self) -> float:
        return 1 / math.sqrt(self.L_S0 * self.squid.CJ)

    @property
    def omega_c(self) -> float:
        return 2 / math.sqrt(self.L_S0 * (self.C_mean + 4 * self.squid.CJ))

    @property
    def Z_mean(self) -> float:
        return math.sqrt(self.L_S0 / self.C_mean)

    @property
    def transit_time(self) -> float:
        return self.N * math.sqrt(self.L_S0 * self.C_mean)

    def derived_scales(self) -> dict:
        b = self.bias
        return {
            "beta_L": self.squid.beta_L,
            "phi_e": b.phi_e,
            "phi_dc": b.phi_dc,
            "L_S0": self.L_S0,
            "beta": b.beta,
            "gamma": b.gamma,
            "RJ": self.squid.RJ,
            "C_mean": self.C_mean,
            "Z_mean": self.Z_mean,
            "omega0": self.omega0,
            "omegaJ": self.omegaJ,
            "omega_c": self.omega_c,
            "transit_time": self.transit_time,
        }

    def with_profile(self, profile: LoadingProfile) -> "LineSpec":
        return replace(self, profile=profile)


def derived_scales(line: LineSpec):
    """Return ``(C_mean, omega0, omegaJ, omega_c, Z_mean)``."""
    return line.C_mean, line.omega0, line.omegaJ, line.omega_c, line.Z_mean


PAPER_LINE = LineSpec()
UNIFORM_LINE = LineSpec(profile=LoadingProfile.uniform(40e-15))
