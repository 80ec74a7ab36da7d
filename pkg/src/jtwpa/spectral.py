"""DFT post-processing of transient traces: tones, node powers, S-parameters, growth fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .physics import LineSpec
from .tmm import bloch_impedances
from .transient import TransientTrace

TONE_LABELS = ("s", "i", "p", "p+s", "p+i", "2p")


class GridAlignmentError(ValueError):
    pass


class DegenerateDriveError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def dft_bins(x, axis=0):
    """``X_q = (1/M) sum_tau x_tau exp(-2 pi i tau q / M)`` for q = 0..M//2 (real input)."""
    x = np.asarray(x)
    return np.fft.rfft(x, axis=axis) / x.shape[axis]


def full_dft(x):
    """All M bins of the normalized DFT; used for checks on short series."""
    x = np.asarray(x)
    return np.fft.fft(x, axis=0) / x.shape[0]


@dataclass
class SpectralFrame:
    """One-sided spectra of a trace.

    ``V[q, c]`` and ``I[q, c]`` are the normalized DFT bins for recorded column
    ``c``; ``I_in`` is the spectrum of the current delivered into the input.
    """

    df: float
    M: int
    nodes: np.ndarray
    V: np.ndarray
    I: np.ndarray
    I_in: np.ndarray
    N: int

    def bin_of(self, f, tol=1e-6):
        q = f / self.df
        qi = int(round(q))
        if abs(q - qi) > tol or qi < 0 or qi > self.M // 2:
            raise GridAlignmentError(f"{f} Hz is not on the {self.df} Hz grid below Nyquist")
        return qi

    @property
    def f(self):
        return self.df * np.arange(self.V.shape[0])


def dft(trace: TransientTrace) -> SpectralFrame:
    M = trace.M
    return SpectralFrame(
        df=1.0 / (M * trace.dt),
        M=M,
        nodes=trace.nodes,
        V=dft_bins(trace.v),
        I=dft_bins(trace.i),
        I_in=dft_bins(trace.i_in),
        N=trace.N,
    )


@dataclass
class ToneField:
    """Complex amplitudes of one tone at the recorded nodes.

    ``V`` and ``I`` are peak phasors (twice the one-sided DFT bin), so the
    time-averaged power is ``P = Re(V I*) / 2`` watts.
    """

    label: str
    f: float
    bin: int
    nodes: np.ndarray
    V: np.ndarray
    I: np.ndarray
    I_in: complex
    degenerate: bool = False

    @property
    def P(self):
        return 0.5 * np.real(self.V * np.conj(self.I))

    @property
    def P_dbm(self):
        with np.errstate(divide="ignore"):
            return 10 * np.log10(np.abs(self.P) / 1e-3)

    def at(self, node):
        c = int(np.flatnonzero(self.nodes == node)[0])
        return self.V[c], self.I[c]


def tone_frequencies(fp, fs):
    fi = fp - fs
    return {"s": fs, "i": fi, "p": fp, "p+s": fp + fs, "p+i": fp + fi, "2p": 2 * fp}


def extract_tones(frame: SpectralFrame, fp, fs, labels=TONE_LABELS):
    """One ToneField per tone; every tone must fall exactly on a DFT bin."""
    freqs = tone_frequencies(fp, fs)
    degenerate = frame.bin_of(fs) == frame.bin_of(fp - fs)
    out = {}
    for lab in labels:
        f = freqs[lab]
        q = frame.bin_of(f)
        scale = 1.0 if q == 0 else 2.0
        out[lab] = ToneField(
            label=lab,
            f=f,
            bin=q,
            nodes=frame.nodes,
            V=scale * frame.V[q],
            I=scale * frame.I[q],
            I_in=scale * frame.I_in[q],
            degenerate=degenerate and lab in ("s", "i"),
        )
    return out


def single_tone(frame: SpectralFrame, f, label="f") -> ToneField:
    """ToneField of an arbitrary on-grid frequency (e.g. a lone probe tone)."""
    q = frame.bin_of(f)
    scale = 1.0 if q == 0 else 2.0
    return ToneField(label, f, q, frame.nodes, scale * frame.V[q], scale * frame.I[q], scale * frame.I_in[q])


def s_parameters(tone: ToneField, Z0=50.0, floor=1e-30):
    """Forward S11, S21 from the port phasors at node 0 (input) and node N (output)."""
    N = int(tone.nodes.max())
    V_in, _ = tone.at(0)
    V_out, _ = tone.at(N)
    I_in = tone.I_in
    den = V_in + Z0 * I_in
    if abs(den) < floor:
        raise DegenerateDriveError(f"no incident wave at {tone.f} Hz")
    return (V_in - Z0 * I_in) / den, 2 * V_out / den


def transducer_gain(S21):
    """|S21|^2 in dB (equal source and load reference impedances)."""
    return 20 * np.log10(np.abs(S21))


def output_powers(tones: dict) -> dict:
    """Power of each tone delivered at the output node, in watts."""
    out = {}
    for lab, t in tones.items():
        c = int(np.argmax(t.nodes))
        out[lab] = float(t.P[c])
    return out


def incident_power(amp, Z0=50.0):
    """Power available from a Norton current source of peak ``amp`` behind ``Z0``."""
    return amp**2 * Z0 / 8


@dataclass
class GrowthFit:
    """Result of the exponential-growth fit.

    The signal model is ``|cosh(gn) + c sinh(gn)|^2``.  A purely imaginary
    ``c = i dk/2g`` is the textbook case of a clean signal input with phase
    mismatch; a real part absorbs a small idler already present at the input.
    """

    g: float
    c: complex
    residual_db: float
    max_drop_db: float
    rejected: bool
    n: np.ndarray = field(repr=False, default=None)
    model_db: np.ndarray = field(repr=False, default=None)

    @property
    def mismatch_ratio(self):
        return abs(self.c.imag)

    @property
    def gain_db(self):
        """Signal power gain of the fitted model from the first to the last node."""
        return float(self.model_db[-1] - self.model_db[0])


def _moving_average(y, w):
    if w <= 1:
        return y
    k = np.ones(w) / w
    pad = np.pad(y, (w // 2, w - 1 - w // 2), mode="edge")
    return np.convolve(pad, k, mode="valid")


def envelope_drop_db(p_db):
    """Largest fall of a dB curve below its running maximum."""
    return float(np.max(np.maximum.accumulate(p_db) - p_db))


def wave_powers(tone: ToneField, line: LineSpec):
    """Forward and backward Bloch-wave powers at nodes 0..N-1 (watts).

    The recorded branch current is shifted to the cell port current by adding
    the shunt half-capacitance current of the cell.
    """
    N = line.N
    order = np.argsort(tone.nodes)
    nodes = tone.nodes[order]
    if len(nodes) < N or not np.array_equal(nodes[:N], np.arange(N)):
        raise InsufficientDataError("wave decomposition needs every node recorded")
    V = tone.V[order][:N]
    Ip = tone.I[order][:N] + 1j * math.pi * tone.f * line.profile.sequence() * V
    Zf, Zb = bloch_impedances(line, tone.f)
    af = (V - Zb * Ip) / (Zf - Zb)
    ab = (Zf * Ip - V) / (Zf - Zb)
    return 0.5 * np.abs(af) ** 2 * Zf.real, -0.5 * np.abs(ab) ** 2 * Zb.real


def _growth_db(g, c, n):
    gn = g * n
    return 10 * np.log10(np.abs(np.cosh(gn) + c * np.sinh(gn)) ** 2 + 1e-300)


def fit_growth(signal: ToneField, idler: ToneField | None = None, line: LineSpec | None = None,
               smooth=20, max_residual_db=1.0, max_drop_db=3.0) -> GrowthFit:
    """Fit the exponential-growth model to the node power profiles.

    Signal ``|cosh(gn) + c sinh(gn)|^2`` and idler ``|sinh(gn) + q cosh(gn)|^2``
    with complex ``c``, ``q``, separate amplitudes and a common ``g``.  With
    ``line`` given, the forward Bloch-wave power is fitted; otherwise the net
    node power is used, which carries the standing-wave imprint of any
    reflected wave.  Powers are smoothed over ``smooth`` cells to remove the
    loading-period imprint.  The fit is rejected when the smoothed signal
    envelope falls more than ``max_drop_db`` below its running maximum, or the
    rms log residual exceeds ``max_residual_db``.
    """
    if signal.degenerate:
        raise ValueError("growth fit needs distinct signal and idler tones")
    order = np.argsort(signal.nodes)
    n = signal.nodes[order].astype(float)
    if len(n) < 10:
        raise InsufficientDataError("growth fit needs the full node profile")
    if line is not None:
        ps = wave_powers(signal, line)[0]
        pi = wave_powers(idler, line)[0] if idler is not None else None
        n = n[: line.N]
    else:
        ps = signal.P[order]
        pi = idler.P[order] if idler is not None else None
    ps_db = 10 * np.log10(_moving_average(np.abs(ps), smooth) + 1e-300)
    pi_db = None
    if pi is not None:
        pi_db = 10 * np.log10(_moving_average(np.abs(pi), smooth) + 1e-300)
    n0 = n - n[0]
    # fit the total exponent G = g * n_end so that every parameter is of order one
    x = n0 / max(n0[-1], 1.0)

    def signal_res(p):
        G, cr, ci, a_s = p[:4]
        return a_s + _growth_db(G, cr + 1j * ci, x) - ps_db

    def joint_res(p):
        G, qr, qi, a_i = p[0], p[4], p[5], p[6]
        Gx = G * x
        mi = a_i + 10 * np.log10(np.abs(np.sinh(Gx) + (qr + 1j * qi) * np.cosh(Gx)) ** 2 + 1e-300)
        return np.concatenate([signal_res(p), mi - pi_db])

    opts = dict(x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12)
    # stage 1: the signal alone, which is well conditioned
    G0 = max(0.1, math.acosh(10 ** (max(ps_db[-1] - ps_db[0], 0.1) / 20)))
    sol = least_squares(signal_res, [G0, 0.0, 0.1, ps_db[0]],
                        bounds=([1e-6, -50, -50, -np.inf], [50, 50, 50, np.inf]), **opts)
    if pi_db is not None:
        # stage 2: joint fit; the idler start value follows from its input floor
        G = sol.x[0]
        a_i0 = pi_db[-1] - 10 * math.log10(math.cosh(G) ** 2)
        q0 = math.sqrt(10 ** ((pi_db[0] - a_i0) / 10))
        p0 = list(sol.x) + [0.0, q0, a_i0]
        sol = least_squares(joint_res, p0, bounds=([1e-6, -50, -50, -np.inf, -50, -50, -np.inf],
                                                   [50, 50, 50, np.inf, 50, 50, np.inf]), **opts)
    g, c = sol.x[0] / max(n0[-1], 1.0), complex(sol.x[1], sol.x[2])
    resid = float(np.sqrt(np.mean(sol.fun**2)))
    drop = envelope_drop_db(ps_db)
    return GrowthFit(
        g=float(g),
        c=c,
        residual_db=resid,
        max_drop_db=drop,
        rejected=bool(resid > max_residual_db or drop > max_drop_db),
        n=n,
        model_db=sol.x[3] + _growth_db(sol.x[0], c, x),
    )


def beating_period(tone: ToneField, average=1, min_periods=3):
    """Dominant spatial period (cells) of a tone's power along the line.

    Power is first averaged over ``average`` cells; one loading period removes
    the Bloch modulation inside each period and leaves the beat between
    waves.  The log-power is detrended with a quadratic, Hann-windowed, and
    the strongest spectral component with at least ``min_periods`` periods in
    the line gives the answer.  Nodes must be contiguous.
    """
    order = np.argsort(tone.nodes)
    nodes = tone.nodes[order]
    if np.any(np.diff(nodes) != 1):
        raise ValueError("beating_period needs every node along the line")
    p = np.abs(tone.P[order])
    if average > 1:
        p = np.convolve(p, np.ones(average) / average, mode="valid")
    x = np.arange(p.size, dtype=float)
    q = 10 * np.log10(p + 1e-300)
    q = q - np.polyval(np.polyfit(x, q, 2), x)
    if np.ptp(q) < 1e-3:
        raise InsufficientDataError("power envelope has no modulation to measure")
    npad = 16 * p.size
    spec = np.abs(np.fft.rfft(q * np.hanning(p.size), npad))
    freq = np.fft.rfftfreq(npad)
    ok = freq >= min_periods / p.size
    if not np.any(ok):
        raise InsufficientDataError("line too short for the requested number of periods")
    return float(1 / freq[ok][np.argmax(spec[ok])])


def harmonic_fraction(tones: dict, pump_amp, Z0=50.0, labels=("2p", "p+s", "p+i"), where="peak"):
    """Power in the listed mixing products relative to the incident pump power.

    ``where="peak"`` takes the largest summed product power over all recorded
    nodes (the conversion reached anywhere along the line); ``"output"`` uses
    the load power only.
    """
    p_in = incident_power(pump_amp, Z0)
    if where == "output":
        out = output_powers(tones)
        return sum(out[lab] for lab in labels) / p_in
    if where != "peak":
        raise ValueError(f"unknown where={where!r}")
    total = sum(np.abs(tones[lab].P) for lab in labels)
    return float(np.max(total)) / p_in


def moving_mean(y, f, width):
    """Centred moving mean of ``y`` over ``|f - f_j| <= width / 2``.

    Returns ``(full, mean)``.  Only points whose window lies entirely inside the
    sampled range are kept; ``full`` is their mask.
    """
    tol = 1e-6 * (np.max(np.abs(f)) or 1.0)
    full = (f - width / 2 >= f[0] - tol) & (f + width / 2 <= f[-1] + tol)
    out = np.array([np.mean(y[np.abs(f - fj) <= width / 2 + tol]) for fj in f[full]])
    return full, out


@dataclass
class GainProfile:
    fs: np.ndarray
    gain_db: np.ndarray
    fp: float
    pump_amp: float
    signal_amp: float
    degenerate_mask: np.ndarray = None

    def __post_init__(self):
        if self.degenerate_mask is None:
            self.degenerate_mask = np.isclose(self.fs, self.fp / 2, atol=1.0)

    @property
    def peak_db(self):
        return float(np.max(self.gain_db[~self.degenerate_mask]))

    def envelope(self, width=500e6):
        """Frequencies and moving mean of the gain in dB, non-degenerate bins only.

        The ripple on the gain curve is a cavity ripple, G0 / |1 - r exp(i phi)|^2
        with |r| < 1.  The phase average of log|1 - r exp(i phi)| vanishes, so the
        mean in dB over whole ripple periods is the ripple-free gain; a median
        would sit on the broad troughs instead.  Points without a full window
        are dropped.  ``width=0`` returns the raw samples.
        """
        sel = ~self.degenerate_mask
        f = self.fs[sel]
        g = self.gain_db[sel]
        full, env = moving_mean(g, f, width)
        return f[full], env

    def bandwidth(self, drop_db=3.0, width=500e6):
        """Widest contiguous interval where the envelope is within ``drop_db`` of its maximum.

        Returns ``(width_Hz, lo_Hz, hi_Hz)``.  The degenerate bin is skipped, so
        it never splits a band.
        """
        f, env = self.envelope(width)
        if env.size == 0:
            return (math.nan, math.nan, math.nan)
        ok = env >= env.max() - drop_db
        best = (-1.0, math.nan, math.nan)
        i = 0
        while i < len(ok):
            if ok[i]:
                j = i
                while j + 1 < len(ok) and ok[j + 1]:
                    j += 1
                if f[j] - f[i] > best[0]:
                    best = (f[j] - f[i], f[i], f[j])
                i = j + 1
            else:
                i += 1
        return best

    def ripple_spacing(self):
        """Median spacing of adjacent local gain maxima (Hz); NaN with fewer than three."""
        sel = ~self.degenerate_mask
        f = self.fs[sel]
        g = self.gain_db[sel]
        idx = np.flatnonzero((g[1:-1] > g[:-2]) & (g[1:-1] >= g[2:])) + 1
        if len(idx) < 3:
            return math.nan
        return float(np.median(np.diff(f[idx])))

    def ripple(self, width=500e6, band=None):
        """Peak-to-peak deviation of gain from its envelope, within ``band``."""
        sel = ~self.degenerate_mask
        f = self.fs[sel]
        g = self.gain_db[sel]
        full, env = moving_mean(g, f, width)
        f = f[full]
        dev = g[full] - env
        if band is not None:
            inb = (f >= band[0]) & (f <= band[1])
            dev = dev[inb]
        return float(np.max(dev) - np.min(dev))
