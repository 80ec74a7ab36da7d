"""Nonlinear time-domain solver for the N-cell rf-SQUID ladder.

Node fluxes ``Phi_n`` obey

    M Phi'' + G Phi' + F(Phi) = I_ext(t)

with ``M`` the (tridiagonal) capacitance matrix, ``G`` the conductance matrix of
the subgap and termination resistors and ``F`` the inductor plus junction
branch currents.  The trapezoidal rule is applied to the first-order form and
the implicit step is solved by Newton iteration with a tridiagonal Jacobian.

Node indices in code are 0-based: index 0 is the input node, index N the
output node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .physics import PHI0, LineSpec, solve_dc_phase

DT_DEFAULT = 4e-12
T_DISCARD = 10e-9
T_RECORD = 50e-9
RAMP_TIME = 0.4e-9
# reassociation and contraction only: NaN/inf semantics are kept for divergence checks
_FASTMATH = {"contract", "reassoc", "arcp", "afn"}


class TransientError(RuntimeError):
    pass


class NewtonConvergenceError(TransientError):
    pass


class DivergenceError(TransientError):
    pass


@dataclass(frozen=True)
class DriveSpec:
    """Current drives at the input node.

    Sinusoids ``amp * sin(2 pi f t + phase)`` are on from t = 0; the dc bias is
    ramped linearly from zero over ``ramp_time``.  ``Idc=None`` takes the bias
    current of the line.
    """

    pump_amp: float = 0.0
    fp: float = 12.92e9
    pump_phase: float = 0.0
    signal_amp: float = 0.0
    fs: float = 6.7e9
    signal_phase: float = 0.0
    Idc: float | None = None
    ramp_time: float = RAMP_TIME

    def tones(self):
        return (
            np.array([self.pump_amp, self.signal_amp], dtype=float),
            2 * np.pi * np.array([self.fp, self.fs], dtype=float),
            np.array([self.pump_phase, self.signal_phase], dtype=float),
        )


@dataclass
class Network:
    """Assembled equation system; arrays are per node (N+1) or per branch (N)."""

    N: int
    m_diag: np.ndarray
    m_off: np.ndarray
    g_diag: np.ndarray
    g_off: np.ndarray
    L: float
    Ic: float
    inv_RJ: float
    inv_Rs: float
    inv_Rt: float
    amps: np.ndarray
    omegas: np.ndarray
    phases: np.ndarray
    Idc: float
    ramp_time: float
    phi_dc: float
    line: LineSpec | None = None
    drive: DriveSpec | None = None


def _inv(R):
    return 0.0 if math.isinf(R) else 1.0 / R


def assemble_network(line: LineSpec, drive: DriveSpec) -> Network:
    N = line.N
    Cn = line.profile.sequence()
    if len(Cn) != N:
        raise ValueError("profile length does not match N")
    CJ = line.squid.CJ
    inv_RJ = _inv(line.squid.RJ)
    Cg = np.zeros(N + 1)
    Cg[:-1] += 0.5 * Cn
    Cg[1:] += 0.5 * Cn
    nbr = np.full(N + 1, 2.0)
    nbr[0] = nbr[-1] = 1.0
    m_diag = Cg + CJ * nbr
    m_off = np.full(N, -CJ)
    g_diag = inv_RJ * nbr
    g_diag[0] += _inv(line.Rs)
    g_diag[-1] += _inv(line.Rt)
    g_off = np.full(N, -inv_RJ)
    Idc = line.Idc if drive.Idc is None else drive.Idc
    phi_e = line.squid.L * Idc / PHI0
    amps, omegas, phases = drive.tones()
    return Network(
        N=N,
        m_diag=m_diag,
        m_off=m_off,
        g_diag=g_diag,
        g_off=g_off,
        L=line.squid.L,
        Ic=line.squid.Ic,
        inv_RJ=inv_RJ,
        inv_Rs=_inv(line.Rs),
        inv_Rt=_inv(line.Rt),
        amps=amps,
        omegas=omegas,
        phases=phases,
        Idc=Idc,
        ramp_time=drive.ramp_time,
        phi_dc=solve_dc_phase(phi_e, line.squid.beta_L),
        line=line,
        drive=drive,
    )


@numba.njit(cache=True, fastmath=_FASTMATH)
def _thomas(diag, off, rhs, cp, x):
    """Solve a symmetric tridiagonal system in place of ``x``; ``cp`` is scratch."""
    n = diag.shape[0]
    b = diag[0]
    cp[0] = off[0] / b
    x[0] = rhs[0] / b
    for i in range(1, n):
        b = diag[i] - off[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = off[i] / b
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / b
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]


@numba.njit(cache=True, fastmath=_FASTMATH)
def _tri_factor(diag, off, cp, dinv):
    """LU factors of a symmetric tridiagonal matrix for repeated ``_tri_solve`` calls."""
    n = diag.shape[0]
    b = diag[0]
    dinv[0] = 1.0 / b
    cp[0] = off[0] * dinv[0]
    for i in range(1, n):
        b = diag[i] - off[i - 1] * cp[i - 1]
        dinv[i] = 1.0 / b
        if i < n - 1:
            cp[i] = off[i] * dinv[i]


@numba.njit(cache=True, fastmath=_FASTMATH)
def _tri_solve(off, cp, dinv, rhs, x):
    n = rhs.shape[0]
    x[0] = rhs[0] * dinv[0]
    for i in range(1, n):
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) * dinv[i]
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]


@numba.njit(cache=True, fastmath=_FASTMATH)
def _sources(t, amps, omegas, phases, Idc, ramp_time):
    s = 0.0
    for j in range(amps.shape[0]):
        if amps[j] != 0.0:
            s += amps[j] * math.sin(omegas[j] * t + phases[j])
    if t >= ramp_time:
        dc = Idc
    else:
        dc = Idc * t / ramp_time
    return s, dc


@numba.njit(cache=True, fastmath=_FASTMATH)
def _tri_matvec(diag, off, x, out):
    n = diag.shape[0]
    for i in range(n):
        s = diag[i] * x[i]
        if i > 0:
            s += off[i - 1] * x[i - 1]
        if i < n - 1:
            s += off[i] * x[i + 1]
        out[i] = s


@numba.njit(cache=True, fastmath=_FASTMATH)
def _branch_forces(phi, invL, Ic, phi0, F, kstiff, with_stiffness=True):
    """Node force vector F = J_n - J_{n-1} and, optionally, per-branch stiffness."""
    n = phi.shape[0]
    for i in range(n):
        F[i] = 0.0
    for b in range(n - 1):
        d = phi[b] - phi[b + 1]
        x = d / phi0
        j = d * invL + Ic * math.sin(x)
        if with_stiffness:
            kstiff[b] = invL + Ic / phi0 * math.cos(x)
        F[b] += j
        F[b + 1] -= j


@numba.njit(cache=True, fastmath=_FASTMATH)
def _accel(phi, v, t, m_diag, m_off, g_diag, g_off, invL, Ic, phi0, amps, omegas, phases,
           Idc, ramp_time, bias_tee, F, ks, tmp, cp, a):
    _branch_forces(phi, invL, Ic, phi0, F, ks)
    _tri_matvec(g_diag, g_off, v, tmp)
    s, dc = _sources(t, amps, omegas, phases, Idc, ramp_time)
    n = phi.shape[0]
    for i in range(n):
        tmp[i] = -tmp[i] - F[i]
    tmp[0] += s + dc
    if bias_tee:
        tmp[n - 1] -= dc
    _thomas(m_diag, m_off, tmp, cp, a)


@numba.njit(cache=True, fastmath=_FASTMATH)
def _run(phi, v, m_diag, m_off, g_diag, g_off, L, Ic, phi0, inv_RJ, inv_Rs, inv_Rt,
         amps, omegas, phases, Idc, ramp_time, bias_tee, h, nsub, nsteps, rec_start,
         rec_nodes, V_rec, J_rec, Iin_rec, E_rec, want_energy, tol, max_iter, phi_ref,
         phase_sum, stats):
    n = phi.shape[0]
    nb = n - 1
    invL = 1.0 / L
    F = np.zeros(n)
    ks = np.zeros(nb)
    tmp = np.zeros(n)
    cp = np.zeros(n)
    dinv = np.zeros(n)
    a = np.zeros(n)
    gv = np.zeros(n)
    res = np.zeros(n)
    jd = np.zeros(n)
    jo = np.zeros(nb)
    dx = np.zeros(n)
    phin = np.zeros(n)
    vn = np.zeros(n)
    _accel(phi, v, 0.0, m_diag, m_off, g_diag, g_off, invL, Ic, phi0, amps, omegas, phases,
           Idc, ramp_time, bias_tee, F, ks, tmp, cp, a)
    c1 = 2.0 / h
    c2 = 4.0 / (h * h)
    total_iter = 0
    max_it_seen = 0
    max_dev = 0.0
    step = 0
    nrec = rec_nodes.shape[0]
    for k in range(nsteps):
        for sub in range(nsub):
            t_new = (k * nsub + sub + 1) * h
            s, dc = _sources(t_new, amps, omegas, phases, Idc, ramp_time)
            for i in range(n):
                phin[i] = phi[i] + h * v[i] + 0.5 * h * h * a[i]
            converged = False
            for it in range(max_iter):
                # v' - v = c1 (phi' - phi) - 2 v ;  a' = c1 (v' - v) - a
                for i in range(n):
                    dv = c1 * (phin[i] - phi[i]) - 2.0 * v[i]
                    vn[i] = v[i] + dv
                    dx[i] = c1 * dv - a[i]
                _tri_matvec(m_diag, m_off, dx, res)
                _tri_matvec(g_diag, g_off, vn, gv)
                # modified Newton: the Jacobian is formed at the predictor only
                _branch_forces(phin, invL, Ic, phi0, F, ks, it == 0)
                for i in range(n):
                    res[i] = -(res[i] + gv[i] + F[i])
                res[0] += s + dc
                if bias_tee:
                    res[n - 1] -= dc
                if it == 0:
                    for i in range(n):
                        jd[i] = c2 * m_diag[i] + c1 * g_diag[i]
                    for b in range(nb):
                        jd[b] += ks[b]
                        jd[b + 1] += ks[b]
                        jo[b] = c2 * m_off[b] + c1 * g_off[b] - ks[b]
                    _tri_factor(jd, jo, cp, dinv)
                _tri_solve(jo, cp, dinv, res, dx)
                dmax = 0.0
                for i in range(n):
                    phin[i] += dx[i]
                    ad = abs(dx[i])
                    if ad > dmax:
                        dmax = ad
                if not (dmax == dmax):
                    stats[0] = k
                    return 2
                if dmax < tol:
                    total_iter += it + 1
                    if it + 1 > max_it_seen:
                        max_it_seen = it + 1
                    converged = True
                    break
            if not converged:
                stats[0] = k
                return 1
            for i in range(n):
                dv = c1 * (phin[i] - phi[i]) - 2.0 * v[i]
                vnew = v[i] + dv
                a[i] = c1 * dv - a[i]
                phi[i] = phin[i]
                v[i] = vnew
        if k + 1 >= rec_start:
            r = k + 1 - rec_start
            if r < V_rec.shape[0]:
                t = (k + 1) * nsub * h
                s, dc = _sources(t, amps, omegas, phases, Idc, ramp_time)
                Iin_rec[r] = s + dc - v[0] * inv_Rs
                for q in range(nrec):
                    node = rec_nodes[q]
                    V_rec[r, q] = v[node]
                    if node < nb:
                        d = phi[node] - phi[node + 1]
                        J_rec[r, q] = (d * invL + Ic * math.sin(d / phi0)
                                       - m_off[node] * (a[node] - a[node + 1])
                                       + inv_RJ * (v[node] - v[node + 1]))
                    else:
                        J_rec[r, q] = v[node] * inv_Rt
                e_kin = 0.0
                for b in range(nb):
                    x = (phi[b] - phi[b + 1]) / phi0
                    phase_sum[b] += x
                    dev = abs(x - phi_ref)
                    if dev > max_dev:
                        max_dev = dev
                    if want_energy:
                        e_kin += 0.5 * x * x * phi0 * phi0 * invL + Ic * phi0 * (1.0 - math.cos(x))
                if want_energy:
                    _tri_matvec(m_diag, m_off, v, tmp)
                    for i in range(n):
                        e_kin += 0.5 * v[i] * tmp[i]
                    E_rec[r] = e_kin
        for i in range(n):
            if not (abs(phi[i]) < 1e300 and abs(v[i]) < 1e300):
                stats[0] = k
                return 2
    stats[0] = nsteps
    stats[1] = total_iter
    stats[2] = max_it_seen
    stats[3] = max_dev
    return 0


@dataclass
class TransientTrace:
    """Equidistant record of node voltages and outgoing branch currents.

    ``i[:, q]`` is the total rf-SQUID series current leaving recorded node
    ``nodes[q]``; for the output node it is the load current.  ``i_in`` is the
    current delivered into the line at the input node (sources minus the
    source-resistor current).
    """

    dt: float
    t_start: float
    nodes: np.ndarray
    v: np.ndarray
    i: np.ndarray
    i_in: np.ndarray
    N: int
    drive: DriveSpec | None = None
    line: LineSpec | None = None
    energy: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    final_state: tuple | None = None

    @property
    def M(self):
        return self.v.shape[0]

    @property
    def t_end(self):
        return self.t_start + self.M * self.dt

    @property
    def t(self):
        return self.t_start + self.dt * np.arange(self.M)

    def column(self, node):
        hits = np.flatnonzero(self.nodes == node)
        if not hits.size:
            raise KeyError(f"node {node} was not recorded")
        return int(hits[0])


def _resolve_nodes(record_nodes, N):
    if record_nodes is None or (isinstance(record_nodes, str) and record_nodes == "all"):
        return np.arange(N + 1)
    if isinstance(record_nodes, str) and record_nodes == "ends":
        return np.array([0, N])
    nodes = np.asarray(record_nodes, dtype=np.int64)
    if nodes.min() < 0 or nodes.max() > N:
        raise ValueError("recorded node index out of range")
    return nodes


def integrate(net: Network, t_end, dt=DT_DEFAULT, window=None, record_nodes="all", substeps=1,
              initial_state=None, bias_tee=True, newton_tol=1e-7, max_iter=20, energy=False):
    """Fixed-step trapezoidal integration from t = 0 to ``t_end``.

    ``window=(t_start, t_stop)`` selects the recorded samples, taken exactly at
    ``t_start + k dt``.  Each recording step is split into ``substeps`` internal
    steps.  Newton stops when the largest flux update is below
    ``newton_tol * phi0``.
    """
    if dt > DT_DEFAULT * (1 + 1e-12):
        raise ValueError("dt must not exceed 4 ps")
    nsteps = int(round(t_end / dt))
    if abs(nsteps * dt - t_end) > 1e-6 * dt:
        raise ValueError("t_end must be a multiple of dt")
    t_start, t_stop = window if window is not None else (0.0, t_end)
    rec_start = int(round(t_start / dt))
    M = int(round((t_stop - t_start) / dt))
    if abs(M * dt - (t_stop - t_start)) > 1e-6 * dt or rec_start + M > nsteps + 1 or rec_start < 1:
        raise ValueError("recording window must lie on the dt grid within (0, t_end]")
    nodes = _resolve_nodes(record_nodes, net.N)
    n = net.N + 1
    if initial_state is None:
        phi = np.zeros(n)
        v = np.zeros(n)
    else:
        phi = np.array(initial_state[0], dtype=float)
        v = np.array(initial_state[1], dtype=float)
    V = np.zeros((M, len(nodes)))
    J = np.zeros((M, len(nodes)))
    Iin = np.zeros(M)
    E = np.zeros(M if energy else 1)
    phase_sum = np.zeros(net.N)
    stats = np.zeros(4)
    h = dt / substeps
    status = _run(phi, v, net.m_diag, net.m_off, net.g_diag, net.g_off, net.L, net.Ic, PHI0,
                  net.inv_RJ, net.inv_Rs, net.inv_Rt, net.amps, net.omegas, net.phases,
                  net.Idc, net.ramp_time, bias_tee, h, substeps, nsteps, rec_start, nodes,
                  V, J, Iin, E, energy, newton_tol * PHI0, max_iter, net.phi_dc, phase_sum, stats)
    if status == 1:
        raise NewtonConvergenceError(
            f"Newton did not converge within {max_iter} iterations at step {int(stats[0])} "
            f"(t = {stats[0] * dt:.4e} s)")
    if status == 2:
        raise DivergenceError(f"state diverged at step {int(stats[0])} (t = {stats[0] * dt:.4e} s)")
    diag = {
        "steps": nsteps * substeps,
        "newton_iterations": int(stats[1]),
        "mean_newton_iterations": stats[1] / (nsteps * substeps),
        "max_newton_iterations": int(stats[2]),
        "max_phase_deviation": float(stats[3]),
        "mean_branch_phase": phase_sum / M,
    }
    return TransientTrace(
        dt=dt,
        t_start=rec_start * dt,
        nodes=nodes,
        v=V,
        i=J,
        i_in=Iin,
        N=net.N,
        drive=net.drive,
        line=net.line,
        energy=E if energy else None,
        diagnostics=diag,
        final_state=(phi, v),
    )


@dataclass(frozen=True)
class Protocol:
    dt: float = DT_DEFAULT
    t_discard: float = T_DISCARD
    t_record: float = T_RECORD
    substeps: int = 4  # internal step dt/4 keeps trapezoidal frequency warping below ~0.05%

    @property
    def df(self):
        return 1 / self.t_record

    @property
    def fmax(self):
        return 1 / (2 * self.dt)

    @property
    def n_samples(self):
        return int(round(self.t_record / self.dt))


def standard_protocol(line: LineSpec, drive: DriveSpec, protocol: Protocol = Protocol(),
                      record_nodes="all") -> TransientTrace:
    """Zero initial state, 0.4 ns bias ramp, discard 10 ns, record 50 ns."""
    for f in (drive.fp, drive.fs):
        q = f / protocol.df
        if abs(q - round(q)) > 1e-6:
            raise ValueError(f"drive frequency {f} Hz is not a multiple of {protocol.df} Hz")
    net = assemble_network(line, drive)
    t_end = protocol.t_discard + protocol.t_record
    return integrate(net, t_end, protocol.dt, (protocol.t_discard, t_end), record_nodes,
                     substeps=protocol.substeps)


def network_energy(net: Network, phi, v):
    """Stored energy: capacitive, inductive and Josephson (zero at rest)."""
    x = (phi[:-1] - phi[1:]) / PHI0
    Mv = net.m_diag * v
    Mv[:-1] += net.m_off * v[1:]
    Mv[1:] += net.m_off * v[:-1]
    return 0.5 * v @ Mv + np.sum(0.5 * (x * PHI0) ** 2 / net.L + net.Ic * PHI0 * (1 - np.cos(x)))
