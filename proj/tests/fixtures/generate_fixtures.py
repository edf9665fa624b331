"""Regenerates the frozen oracle fixtures in this directory.

Independent of the C++ code: the SDE-derived chains are re-discretized here
with scipy's normal CDF and every chain is solved by a dense eigendecomposition
(numpy.linalg.eig). Run from any directory:

    python3 tests/fixtures/generate_fixtures.py
"""

import pathlib

import numpy as np
from scipy.stats import norm

HERE = pathlib.Path(__file__).resolve().parent

SMALL = {
    "symmetric2": [[0.4, 0.4], [0.4, 0.4]],
    "three_state": [[0.5, 0.3, 0.0], [0.2, 0.5, 0.2], [0.0, 0.3, 0.4]],
    "complex4": [
        [0.30, 0.55, 0.05, 0.02],
        [0.00, 0.30, 0.55, 0.05],
        [0.05, 0.00, 0.30, 0.55],
        [0.55, 0.05, 0.00, 0.30],
    ],
    "dense5": [
        [0.30, 0.20, 0.10, 0.15, 0.05],
        [0.10, 0.25, 0.25, 0.10, 0.20],
        [0.05, 0.15, 0.40, 0.20, 0.10],
        [0.20, 0.10, 0.10, 0.30, 0.15],
        [0.15, 0.05, 0.20, 0.10, 0.35],
    ],
}

# drift, sigma, lo, hi, n, dt; edges kill.
SDE = {
    "ou_chain": (lambda x: -x, 1.0, -1.0, 1.0, 100, 0.01),
    "double_well": (lambda x: x - x**3, 0.7, -1.5, 1.5, 400, 0.01),
}


def sde_chain(drift, sigma, lo, hi, n, dt):
    h = (hi - lo) / n
    edges = lo + h * np.arange(n + 1)
    centers = lo + h * (np.arange(n) + 0.5)
    sd = sigma * np.sqrt(dt)
    mean = centers + drift(centers) * dt
    z = (edges[None, :] - mean[:, None]) / sd
    cdf = norm.cdf(z)
    sf = norm.sf(z)
    # Difference whichever tail is smaller, as the mass of a far cell is tiny.
    q = np.where(z[:, :-1] > 0, sf[:, :-1] - sf[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    return np.clip(q, 0.0, None), dt


def eigen_data(q, dt):
    w, vr = np.linalg.eig(q)
    order = np.argsort(-np.abs(w))
    rho = w[order[0]].real
    rho2 = abs(w[order[1]]) if len(w) > 1 else 0.0
    v = np.abs(vr[:, order[0]].real)
    wl, vl = np.linalg.eig(q.T)
    u = np.abs(vl[:, np.argmax(wl.real)].real)
    alpha = u / u.sum()
    beta = u * v / np.dot(u, v)
    gamma = np.log(rho / rho2) / dt if rho2 > 0 else float("inf")
    return rho, -np.log(rho) / dt, gamma, alpha, beta, v / v.sum()


def fmt(xs):
    return " ".join(f"{x:.17g}" for x in np.atleast_1d(xs))


def main():
    lines = [
        "# Principal eigen-data of the built-in chains.",
        f"# Source: numpy {np.__version__} dense eig of Q and Q^T; SDE chains",
        "# re-discretized with scipy.stats.norm cell masses (edges kill).",
        "# v is the right eigenvector scaled to sum 1 (only ratios are compared).",
    ]
    chains = {k: (np.array(m, dtype=float), 1.0) for k, m in SMALL.items()}
    chains.update({k: sde_chain(*args) for k, args in SDE.items()})
    for name, (q, dt) in chains.items():
        rho, lam, gamma, alpha, beta, v = eigen_data(q, dt)
        lines += [
            f"fixture {name}",
            f"n {q.shape[0]}",
            f"rho {fmt(rho)}",
            f"lambda1 {fmt(lam)}",
            f"gamma {fmt(gamma)}",
            f"alpha {fmt(alpha)}",
            f"beta {fmt(beta)}",
            f"v {fmt(v)}",
            "end",
        ]
    (HERE / "chain_eigen.txt").write_text("\n".join(lines) + "\n")

    # Conditioned expectation curve E_0[1{Z_t = 0} | t < tau] on three_state.
    q = chains["three_state"][0]
    w = np.array([1.0, 0.0, 0.0])
    curve = []
    for _ in range(41):
        curve.append(w[0] / w.sum())
        w = w @ q
    (HERE / "three_state_conditioned.txt").write_text(
        "# E_0[1{Z_t = 0} | t < tau] for t = 0..40 on three_state.\n"
        f"# Source: numpy {np.__version__} repeated row-vector products.\n"
        f"values {fmt(curve)}\n"
    )


if __name__ == "__main__":
    main()
