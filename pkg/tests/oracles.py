"""Independent reference computations, written without touching the package.

Every frozen number used by the tests is listed in ``FROZEN`` and re-derived
here from first principles: explicit series, exact rational arithmetic, or a
hand-enumerated transition table.
"""

from __future__ import annotations

from fractions import Fraction as F


def geometric_series_moments(gamma: int, phi: F, terms: int = 4000) -> tuple[float, float]:
    """E[T], E[T^2] for T = gamma * H, H ~ Geometric(phi) on {1, 2, ...}, by summation."""
    phi = F(phi)
    m1 = m2 = 0.0
    q = 1.0 - float(phi)
    p = float(phi)
    w = p
    for h in range(1, terms + 1):
        m1 += gamma * h * w
        m2 += (gamma * h) ** 2 * w
        w *= q
    return m1, m2


def first_tx_delay(p_eff: F, gamma: int) -> F:
    """Idle entry to first transmission: Geometric attempts, uniform wait, one RRI."""
    p_eff = F(p_eff)
    attempts = 1 / p_eff  # mean of Geometric on {1, 2, ...}
    wait = F(sum(range(gamma)), gamma)
    return attempts + wait + gamma


def reset_c0(p_eff: F, gamma: int) -> F:
    # one more subframe for the air interface
    return first_tx_delay(p_eff, gamma) + 1


def average_aoi_renewal_reward(p_eff, gamma: int, phi) -> float:
    """Renewal-reward average E[R] + E[T^2] / (2 E[T]), with R the reset AoI.

    The reset after a run of failures carries the head-of-line generation
    time, so E[R] = C0 + gamma * E[H - 1].
    """
    c0 = float(reset_c0(F(p_eff), gamma))
    phi = F(phi)
    m1, m2 = geometric_series_moments(gamma, phi)
    er = c0 + gamma * (1 / float(phi) - 1)
    return er + m2 / (2 * m1)


def toy_chain() -> list[list[F]]:
    """Gamma=2, RC fixed at 1, no keep, P'=1.  States Idle, W0, W1, A(1,0), A(1,1).

    Idle -> W0 or W1 with 1/2 each; W1 -> W0; W0 -> A(1,1); A(1,1) -> A(1,0);
    A(1,0) transmits and releases to Idle.
    """
    z, h, o = F(0), F(1, 2), F(1)
    return [
        [z, h, h, z, z],
        [z, z, z, z, o],
        [z, o, z, z, z],
        [o, z, z, z, z],
        [z, z, z, o, z],
    ]


def exact_stationary(P: list[list[F]]) -> list[F]:
    """Solve pi P = pi, sum pi = 1 by Gauss-Jordan over the rationals."""
    n = len(P)
    # rows: (P^T - I) with last row replaced by ones
    A = [[P[j][i] - (1 if i == j else 0) for j in range(n)] for i in range(n)]
    A[-1] = [F(1)] * n
    b = [F(0)] * (n - 1) + [F(1)]
    for c in range(n):
        piv = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        b[c], b[piv] = b[piv], b[c]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [a - f * ac for a, ac in zip(A[r], A[c])]
                b[r] -= f * b[c]
    return [b[i] / A[i][i] for i in range(n)]


def violation(tdr, n: int) -> F:
    return 1 - F(tdr) ** n


FROZEN = {
    "aoi_x0": 201.5,
    "aoi_x09": 210.5,
    "aoi_phi05": 401.5,
    "c0_p1_g100": 151.5,
    "c0_p01_g100": 160.5,
    "c0_p1_g1": 3.0,
    "passage_p1_g100": 150.5,
    "passage_p01_g100": 159.5,
    "passage_p1_g1": 2.0,
    "moments_g100_phi05": (200.0, 60000.0),
    "moments_g50_phi025": (200.0, 70000.0),
    "toy_pi": (2 / 9, 2 / 9, 1 / 9, 2 / 9, 2 / 9),
    "violation_08468_n20": 0.9641,  # 4 decimals
    "fcw_gap": 0.1531,
    "lcw_gap": 0.1384,
}


def recompute() -> dict:
    m = geometric_series_moments
    return {
        "aoi_x0": average_aoi_renewal_reward(F(1), 100, F(1)),
        "aoi_x09": average_aoi_renewal_reward(F(1, 10), 100, F(1)),
        "aoi_phi05": average_aoi_renewal_reward(F(1), 100, F(1, 2)),
        "c0_p1_g100": float(reset_c0(F(1), 100)),
        "c0_p01_g100": float(reset_c0(F(1, 10), 100)),
        "c0_p1_g1": float(reset_c0(F(1), 1)),
        "passage_p1_g100": float(first_tx_delay(F(1), 100)),
        "passage_p01_g100": float(first_tx_delay(F(1, 10), 100)),
        "passage_p1_g1": float(first_tx_delay(F(1), 1)),
        "moments_g100_phi05": m(100, F(1, 2)),
        "moments_g50_phi025": m(50, F(1, 4)),
        "toy_pi": tuple(float(v) for v in exact_stationary(toy_chain())),
        "violation_08468_n20": round(float(violation(F("0.8468"), 20)), 4),
        "fcw_gap": float(F("0.9999") - F("0.8468")),
        "lcw_gap": float(F("0.9990") - F("0.8606")),
    }
