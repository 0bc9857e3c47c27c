"""Closed-form AoI model and an explicit DTMC of the SPS state machine."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .config import SpsParams

DEFAULT_STATE_CAP = 2_000_000
DIRECT_SOLVE_MAX = 50_000


class AnalyticError(ValueError):
    pass


# --------------------------------------------------------------------------
# closed forms

def effective_sch_prob(p_sch: float, x: float) -> float:
    """Probability an Idle attempt finds a usable resource under starvation ``x``."""
    if not 0.0 < p_sch <= 1.0:
        raise AnalyticError("p_sch must lie in (0, 1]")
    if not 0.0 <= x <= 1.0:
        raise AnalyticError("x must lie in [0, 1]")
    if x == 1.0:
        raise AnalyticError("degenerate starvation: no CSR ever found")
    return (1.0 - x) * p_sch


def inter_success_moments(gamma: int, phi: float) -> tuple[float, float]:
    """First two moments of the gap between successful receptions.

    The gap is ``gamma * H`` with ``H`` geometric on {1, 2, ...} with success
    probability ``phi``.
    """
    if gamma < 1:
        raise AnalyticError("gamma must be >= 1")
    if not 0.0 < phi <= 1.0:
        raise AnalyticError("phi must lie in (0, 1]")
    mean = gamma / phi
    second = gamma * gamma * (2.0 - phi) / (phi * phi)
    return mean, second


def reset_aoi_c0(p_sch_eff: float, gamma: int) -> float:
    """Mean age of a packet when it is delivered.

    Idle dwell ``1/P'`` plus mean wait ``(gamma-1)/2`` plus one full RRI plus
    the one-subframe queueing term.
    """
    if not p_sch_eff > 0.0:
        raise AnalyticError("p_sch_eff must be > 0")
    return 1.0 / p_sch_eff + (gamma - 1) / 2.0 + gamma + 1.0


def expected_reset(p_sch_eff: float, gamma: int, phi: float) -> float:
    return reset_aoi_c0(p_sch_eff, gamma) + (1.0 / phi - 1.0) * gamma


@dataclass(frozen=True)
class AoiPrediction:
    c0_ms: float
    expected_reset_ms: float
    mean_inter_success_ms: float
    second_moment_inter_success: float
    average_aoi_ms: float
    average_aoi_renewal_ms: float
    p_sch_eff: float

    def as_dict(self) -> dict:
        return {
            "p_sch_eff": self.p_sch_eff,
            "c0_ms": self.c0_ms,
            "expected_reset_ms": self.expected_reset_ms,
            "mean_inter_success_ms": self.mean_inter_success_ms,
            "second_moment_inter_success": self.second_moment_inter_success,
            "average_aoi_ms": self.average_aoi_ms,
            "average_aoi_renewal_ms": self.average_aoi_renewal_ms,
        }


def average_aoi_closed(p_sch_eff: float, gamma: int, phi: float) -> float:
    return reset_aoi_c0(p_sch_eff, gamma) + gamma * (2.0 / phi - 1.5)


def average_aoi_renewal(p_sch_eff: float, gamma: int, phi: float) -> float:
    m1, m2 = inter_success_moments(gamma, phi)
    return expected_reset(p_sch_eff, gamma, phi) + m2 / (2.0 * m1)


def average_aoi(p_sch: float, x: float, gamma: int, phi: float, *, tol: float = 1e-9) -> AoiPrediction:
    """Time-average AoI, computed by the renewal route and the direct form.

    The two must agree to ``tol`` (relative to magnitude); disagreement
    raises, since it would mean one of the formulas is wrong.
    """
    pe = effective_sch_prob(p_sch, x)
    c0 = reset_aoi_c0(pe, gamma)
    ed = expected_reset(pe, gamma, phi)
    m1, m2 = inter_success_moments(gamma, phi)
    renewal = ed + m2 / (2.0 * m1)
    closed = average_aoi_closed(pe, gamma, phi)
    if abs(renewal - closed) > tol * max(1.0, abs(closed)):
        raise AnalyticError(f"renewal ({renewal!r}) and closed form ({closed!r}) disagree")
    return AoiPrediction(c0, ed, m1, m2, closed, renewal, pe)


# --------------------------------------------------------------------------
# DTMC

@dataclass(frozen=True)
class DtmcModel:
    """Explicit chain over Idle, Wait(w) and the (k, tau) reservation states.

    State order: Idle = 0, Wait(w) = 1 + w, (k, tau) = 1 + gamma + (k-1)*gamma + tau.
    """

    gamma: int
    rc_max: int
    transition_matrix: sp.csr_matrix
    p_sch_eff: float
    p_keep: float

    @property
    def n_states(self) -> int:
        return self.transition_matrix.shape[0]

    @property
    def idle(self) -> int:
        return 0

    def wait(self, w: int) -> int:
        return 1 + w

    def active(self, k: int, tau: int) -> int:
        return 1 + self.gamma + (k - 1) * self.gamma + tau

    @property
    def state_index(self) -> list:
        names = ["Idle"] + [f"Wait({w})" for w in range(self.gamma)]
        names += [f"({k},{tau})" for k in range(1, self.rc_max + 1) for tau in range(self.gamma)]
        return names

    def tx_states(self) -> np.ndarray:
        """Indices of the transmitting states (k, 0)."""
        return np.array([self.active(k, 0) for k in range(1, self.rc_max + 1)])


def build_sps_dtmc(sps: SpsParams, p_sch_eff: float, *, state_cap: int = DEFAULT_STATE_CAP) -> DtmcModel:
    g, rmin, rmax, pk = sps.gamma, sps.rc_min, sps.rc_max, sps.p_keep
    if not 0.0 <= p_sch_eff <= 1.0:
        raise AnalyticError("p_sch_eff must lie in [0, 1]")
    n = 1 + g + rmax * g
    if n > state_cap:
        raise AnalyticError(f"state space of {n} states exceeds cap {state_cap}")

    rows, cols, vals = [], [], []

    def add(i, j, p):
        if p > 0.0:
            rows.append(i)
            cols.append(j)
            vals.append(p)

    def idx(k, tau):
        return 1 + g + (k - 1) * g + tau

    nrc = rmax - rmin + 1
    add(0, 0, 1.0 - p_sch_eff)
    for w in range(g):
        add(0, 1 + w, p_sch_eff / g)
    for w in range(1, g):
        add(1 + w, w, 1.0)
    for k in range(rmin, rmax + 1):
        add(1, idx(k, g - 1), 1.0 / nrc)
    for k in range(1, rmax + 1):
        for tau in range(1, g):
            add(idx(k, tau), idx(k, tau - 1), 1.0)
        if k > 1:
            add(idx(k, 0), idx(k - 1, g - 1), 1.0)
    # RC expiry: keep (fresh RC, same cadence) or release
    for k in range(rmin, rmax + 1):
        add(idx(1, 0), idx(k, g - 1), pk / nrc)
    add(idx(1, 0), 0, 1.0 - pk)

    P = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    P.sum_duplicates()
    return DtmcModel(g, rmax, P, float(p_sch_eff), float(pk))


def _recurrent_support(P: sp.csr_matrix, start: int = 0) -> np.ndarray:
    """Breadth-first reachability from ``start``."""
    n = P.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    frontier = np.array([start])
    while frontier.size:
        nxt = P[frontier].indices
        nxt = nxt[~seen[nxt]]
        nxt = np.unique(nxt)
        seen[nxt] = True
        frontier = nxt
    return seen


def _check_irreducible(P: sp.csr_matrix) -> np.ndarray:
    """Mask of states reachable from Idle; they must form one closed class."""
    reach = _recurrent_support(P, 0)
    sub = P[reach][:, reach]
    ncomp, _ = connected_components(sub, directed=True, connection="strong")
    if ncomp != 1:
        raise AnalyticError("chain is not irreducible (need P_keep < 1 and P'_sch > 0)")
    return reach


def stationary_distribution(m, *, tol: float = 1e-10, max_iter: int = 10_000_000) -> np.ndarray:
    """Stationary vector of an irreducible chain.

    Accepts a :class:`DtmcModel` or a bare square matrix.  Uses a sparse
    direct solve up to ``DIRECT_SOLVE_MAX`` states, power iteration above.
    """
    P = m.transition_matrix if isinstance(m, DtmcModel) else sp.csr_matrix(np.asarray(m, dtype=float)
                                                                            if not sp.issparse(m) else m)
    n = P.shape[0]
    if isinstance(m, DtmcModel):
        if m.p_keep >= 1.0 or m.p_sch_eff <= 0.0:
            raise AnalyticError("chain is not irreducible (need P_keep < 1 and P'_sch > 0)")
        support = _check_irreducible(P)
    else:
        ncomp, _ = connected_components(P, directed=True, connection="strong")
        if ncomp != 1:
            raise AnalyticError("chain is not irreducible")
        support = np.ones(n, dtype=bool)

    Q = P[support][:, support].tocsr()
    k = Q.shape[0]
    if k <= DIRECT_SOLVE_MAX:
        A = (Q.T - sp.identity(k, format="csr")).tolil()
        A[k - 1, :] = np.ones(k)
        b = np.zeros(k)
        b[k - 1] = 1.0
        pi_s = spsolve(A.tocsc(), b)
        pi_s = np.clip(pi_s, 0.0, None)
        pi_s /= pi_s.sum()
    else:
        pi_s = power_iteration(Q, tol=tol, max_iter=max_iter)

    pi = np.zeros(n)
    pi[support] = pi_s
    resid = np.abs(pi @ P - pi).max()
    if resid > tol:
        # polish with a few power steps
        for _ in range(1000):
            pi = pi @ P
            pi /= pi.sum()
            resid = np.abs(pi @ P - pi).max()
            if resid <= tol:
                break
        else:
            raise AnalyticError(f"stationary residual {resid:.3e} above {tol:g}")
    return pi


def power_iteration(P, *, tol: float = 1e-10, max_iter: int = 10_000_000, lazy: float = 0.5) -> np.ndarray:
    """Stationary vector by iterating the lazy chain ``lazy*I + (1-lazy)*P``.

    Laziness removes periodicity (the SPS chain has period Gamma when
    P'_sch = 1) without changing the fixed point.
    """
    P = sp.csr_matrix(P)
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    PT = P.T.tocsr()
    for _ in range(max_iter):
        nxt = lazy * pi + (1.0 - lazy) * (PT @ pi)
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < tol * 1e-3 and np.abs(PT @ nxt - nxt).max() <= tol:
            return nxt
        pi = nxt
    raise AnalyticError("power iteration did not converge")


def mean_first_passage_idle_to_tx(m: DtmcModel) -> float:
    """Expected subframes from entering Idle until first reaching a (k, 0) state.

    Solves h_i = 1 + sum_j P_ij h_j over non-target states, h = 0 on targets.
    """
    P = m.transition_matrix
    n = P.shape[0]
    target = np.zeros(n, dtype=bool)
    target[m.tx_states()] = True
    keep = ~target
    Q = P[keep][:, keep].tocsc()
    A = sp.identity(Q.shape[0], format="csc") - Q
    b = np.ones(Q.shape[0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            h = spsolve(A, b)
        except Exception as exc:  # MatrixRankWarning / singular
            raise AnalyticError("first-passage system is singular") from exc
    if not np.all(np.isfinite(h)):
        raise AnalyticError("first-passage system is singular")
    pos = np.flatnonzero(keep)
    return float(h[np.searchsorted(pos, m.idle)])
