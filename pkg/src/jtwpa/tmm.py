"""Small-signal transfer-matrix analysis of the loaded rf-SQUID ladder.

Matrices are stored as stacked ``(..., 2, 2)`` complex arrays so that a whole
frequency grid is processed at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .physics import LineSpec

TWO_PI = 2 * math.pi


class SingularFrequencyError(ValueError):
    pass


class InsufficientBandError(ValueError):
    pass


def shunt(Y):
    Y = np.asarray(Y, dtype=complex)
    T = np.zeros(Y.shape + (2, 2), dtype=complex)
    T[..., 0, 0] = 1
    T[..., 1, 1] = 1
    T[..., 1, 0] = Y
    return T


def series(Z):
    Z = np.asarray(Z, dtype=complex)
    T = np.zeros(Z.shape + (2, 2), dtype=complex)
    T[..., 0, 0] = 1
    T[..., 1, 1] = 1
    T[..., 0, 1] = Z
    return T


def cell_transfer_matrix(omega, L_S0, CJ, Cn, RJ=None):
    """ABCD matrix of one pi-cell: shunt Cn/2, series SQUID branch, shunt Cn/2.

    Without ``RJ`` the closed-form lossless coefficients are used.  With a finite
    ``RJ`` the series branch is ``L_S0 || CJ || RJ``.
    """
    w = np.asarray(omega, dtype=float)
    if RJ is None or math.isinf(RJ):
        den = 1 - w**2 * CJ * L_S0
        if np.any(np.abs(den) < 1e-14):
            raise SingularFrequencyError("omega hits the SQUID branch resonance 1/sqrt(L_S0 CJ)")
        A = 1 - 0.5 * w**2 * L_S0 * Cn / den
        B = 1j * w * L_S0 / den
        C = 1j * w * Cn - 0.25j * w**3 * L_S0 * Cn**2 / den
        T = np.empty(w.shape + (2, 2), dtype=complex)
        T[..., 0, 0] = A
        T[..., 0, 1] = B
        T[..., 1, 0] = C
        T[..., 1, 1] = A
        return T
    with np.errstate(divide="ignore"):
        Yb = 1 / (1j * w * L_S0) + 1j * w * CJ + 1 / RJ
        Zb = np.where(w == 0, 0, 1 / Yb)
    Ys = 0.5j * w * Cn
    return shunt(Ys) @ series(Zb) @ shunt(Ys)


def cascade(matrices):
    """Ordered product, input side first."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("cascade needs at least one matrix")
    T = matrices[0]
    for M in matrices[1:]:
        T = T @ M
    return T


def det(T):
    return T[..., 0, 0] * T[..., 1, 1] - T[..., 0, 1] * T[..., 1, 0]


def period_matrix(line: LineSpec, omega, lossy=False):
    """Transfer matrix of one loading period, built from run-length segments."""
    RJ = line.squid.RJ if lossy else None
    prof = line.profile
    segs = [(prof.C01, prof.kappa), (prof.C02, prof.mu), (prof.C01, prof.kappa), (prof.C03, prof.nu)]
    parts = []
    for Cn, count in segs:
        if count:
            T = cell_transfer_matrix(omega, line.L_S0, line.squid.CJ, Cn, RJ)
            parts.append(np.linalg.matrix_power(T, count))
    return cascade(parts)


def line_matrix(line: LineSpec, omega, lossy=False):
    return np.linalg.matrix_power(period_matrix(line, omega, lossy), line.N // line.profile.m)


def _unwrap_bloch(theta_re, start=0.0):
    """Unfold the reduced Bloch phase (in [0, pi]) into a continuous non-decreasing k*m."""
    out = np.empty_like(theta_re)
    prev = start
    for i, th in enumerate(theta_re):
        j = math.floor(prev / TWO_PI)
        best = math.inf
        for a in (j - 1, j, j + 1):
            for c in (TWO_PI * a + th, TWO_PI * a - th):
                if c >= prev - 1e-9 and c < best:
                    best = c
        prev = best
        out[i] = best
    return out


@dataclass
class DispersionResult:
    f: np.ndarray
    k: np.ndarray  # complex Bloch wavenumber, rad/cell
    half_trace: np.ndarray
    m: int
    omega0: float
    stop_bands: list = field(default_factory=list)
    line: LineSpec | None = None

    @property
    def k_m(self):
        return TWO_PI / self.m

    def gap_centers(self, jmax=2):
        """Analytic gap centres ``(j pi / m) omega0`` in Hz."""
        return np.array([j * math.pi / self.m * self.omega0 / TWO_PI for j in range(1, jmax + 1)])

    @property
    def in_gap(self):
        return np.abs(self.half_trace.real) > 1

    def contains(self, f):
        return any(lo <= f <= hi for lo, hi in self.stop_bands)

    def k_at(self, f):
        """Unfolded Bloch k at arbitrary frequencies.

        The reduced phase is evaluated exactly at ``f``; the band branch is taken
        from the grid by linear interpolation of Re(k).
        """
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if self.line is None:
            return np.interp(f, self.f, self.k.real) + 1j * np.interp(f, self.f, self.k.imag)
        T = period_matrix(self.line, TWO_PI * f)
        x = 0.5 * (T[..., 0, 0] + T[..., 1, 1])
        th = np.arccos(x.real.astype(complex))
        guess = np.interp(f, self.f, self.k.real) * self.m
        km = np.empty(f.shape)
        for i, (t, g) in enumerate(zip(th.real, guess)):
            j = round(g / TWO_PI)
            cands = np.array([TWO_PI * a + s * t for a in (j - 1, j, j + 1) for s in (1, -1)])
            km[i] = cands[np.argmin(np.abs(cands - g))]
        return (km + 1j * np.abs(th.imag)) / self.m


def stop_bands_from(f, half_trace):
    gap = np.abs(np.real(half_trace)) > 1
    bands = []
    i = 0
    n = len(f)
    while i < n:
        if gap[i]:
            j = i
            while j + 1 < n and gap[j + 1]:
                j += 1
            bands.append((float(f[i]), float(f[j])))
            i = j + 1
        else:
            i += 1
    return bands


def default_grid(fmin=0.1e9, fmax=30e9, df=1e6):
    return np.arange(round(fmin / df), round(fmax / df) + 1) * df


def bloch_dispersion(line: LineSpec, f=None) -> DispersionResult:
    """Bloch band structure of the periodically loaded line (lossless)."""
    f = default_grid() if f is None else np.asarray(f, dtype=float)
    T = period_matrix(line, TWO_PI * f)
    x = 0.5 * (T[..., 0, 0] + T[..., 1, 1])
    theta = np.arccos(x.real.astype(complex))
    km = _unwrap_bloch(theta.real)
    k = (km + 1j * np.abs(theta.imag)) / line.profile.m
    return DispersionResult(
        f=f,
        k=k,
        half_trace=x,
        m=line.profile.m,
        omega0=line.omega0,
        stop_bands=stop_bands_from(f, x),
        line=line,
    )


@dataclass
class MismatchCurve:
    fp: float
    fs: np.ndarray
    dk: np.ndarray
    dk_ps: np.ndarray
    dk_pi: np.ndarray
    dk_2p: float
    gap_flags: dict

    @property
    def xi(self):
        with np.errstate(divide="ignore"):
            return math.pi / np.abs(self.dk)

    def zero_crossings(self):
        """Sign changes of dk between adjacent points where signal and idler both propagate."""
        ok = ~(self.gap_flags["s"] | self.gap_flags["i"])
        sgn = np.sign(self.dk)
        return int(np.count_nonzero(ok[1:] & ok[:-1] & (sgn[1:] != sgn[:-1])))

    @property
    def xi_ps(self):
        with np.errstate(divide="ignore"):
            return np.where(self.gap_flags["p+s"], np.nan, math.pi / np.abs(self.dk_ps))

    @property
    def xi_pi(self):
        with np.errstate(divide="ignore"):
            return np.where(self.gap_flags["p+i"], np.nan, math.pi / np.abs(self.dk_pi))


def phase_mismatch(disp: DispersionResult, fp, fs) -> MismatchCurve:
    """Mismatch of the basic and the unwanted three-wave processes, in rad/cell."""
    fs = np.atleast_1d(np.asarray(fs, dtype=float))
    fi = fp - fs
    kp = disp.k_at(fp).real[0]
    ks = disp.k_at(fs).real
    ki = disp.k_at(fi).real
    dk = kp - ks - ki
    dk_ps = disp.k_at(fp + fs).real - kp - ks
    dk_pi = disp.k_at(fp + fi).real - kp - ki
    dk_2p = disp.k_at(2 * fp).real[0] - 2 * kp
    flags = {
        "s": np.array([disp.contains(x) for x in fs]),
        "i": np.array([disp.contains(x) for x in fi]),
        "p+s": np.array([disp.contains(x) for x in fp + fs]),
        "p+i": np.array([disp.contains(x) for x in fp + fi]),
        "2p": disp.contains(2 * fp),
        "p": disp.contains(fp),
    }
    return MismatchCurve(fp, fs, dk, dk_ps, dk_pi, dk_2p, flags)


@dataclass
class SParameterSet:
    f: np.ndarray
    S11: np.ndarray
    S21: np.ndarray
    Z0: float
    lossy: bool = False

    @property
    def S11_db(self):
        return 20 * np.log10(np.abs(self.S11))

    @property
    def S21_db(self):
        return 20 * np.log10(np.abs(self.S21))

    @property
    def Z_in(self):
        return self.Z0 * (1 + self.S11) / (1 - self.S11)


def s_from_abcd(T, Z0):
    A, B, C, D = T[..., 0, 0], T[..., 0, 1], T[..., 1, 0], T[..., 1, 1]
    den = A + B / Z0 + C * Z0 + D
    return (A + B / Z0 - C * Z0 - D) / den, 2 / den


def linear_s_parameters(line: LineSpec, f, Z0=None, lossy=False) -> SParameterSet:
    Z0 = line.Z0 if Z0 is None else Z0
    f = np.asarray(f, dtype=float)
    S11, S21 = s_from_abcd(line_matrix(line, TWO_PI * f, lossy), Z0)
    return SParameterSet(f, S11, S21, Z0, lossy)


def local_minima(y):
    y = np.asarray(y)
    return np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1


def side_lobe_spacing(sp: SParameterSet, band, floor_db=-80.0):
    """Median spacing of adjacent |S11| minima inside ``band`` (Hz)."""
    lo, hi = band
    sel = (sp.f >= lo) & (sp.f <= hi)
    f = sp.f[sel]
    mag = sp.S11_db[sel]
    if mag.size == 0 or np.max(mag) < floor_db:
        raise InsufficientBandError("no side-lobes above the numerical floor")
    idx = local_minima(mag)
    if len(idx) < 3:
        raise InsufficientBandError(f"only {len(idx)} minima in band {band}")
    return float(np.median(np.diff(f[idx])))


def bloch_impedances(line: LineSpec, f, lossy=False):
    """Forward and backward Bloch-wave impedances V/I at every node 0..N-1.

    ``I`` is the port current entering cell n at node n (before its shunt
    half-capacitance).  The forward wave is the eigenvector of the one-period
    matrix starting at that node with eigenvalue ``exp(+i k m)``, Im k >= 0.
    """
    w = TWO_PI * f
    RJ = line.squid.RJ if lossy else None
    seq = line.profile.period()
    m = len(seq)
    cells = [cell_transfer_matrix(w, line.L_S0, line.squid.CJ, c, RJ) for c in seq]
    Zf = np.empty(m, dtype=complex)
    Zb = np.empty(m, dtype=complex)
    for p in range(m):
        T = cascade(cells[p:] + cells[:p])
        A, B, D = T[0, 0], T[0, 1], T[1, 1]
        lam = np.roots([1, -(A + D), A * D - B * T[1, 0]])
        z = B / (lam - A)
        if abs(abs(lam[0]) - abs(lam[1])) > 1e-9:
            # evanescent: the forward wave decays towards the output, V_{n+m} = V_n / lam
            fwd = int(np.argmax(np.abs(lam)))
        else:
            # propagating: the forward wave carries positive power
            fwd = int(np.argmax(z.real))
        Zf[p] = z[fwd]
        Zb[p] = z[1 - fwd]
    reps = line.N // m
    return np.tile(Zf, reps), np.tile(Zb, reps)
