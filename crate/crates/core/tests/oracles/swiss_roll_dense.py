"""Dense LLE on the Swiss-roll sample used by the Rust tests.

Creates the point fixture on first use and prints the 10-NN preservation score of the dense solution. The value is
frozen in `swiss_roll.rs`.
"""
from pathlib import Path

import numpy as np

N, K, D = 2000, 10, 2
REG = 1e-3

FIXTURE = Path(__file__).parent.parent / "fixtures" / "swiss_roll_2000.csv"

if not FIXTURE.exists():
    rng = np.random.default_rng(2000)
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(N))
    height = 21.0 * rng.random(N)
    X = np.stack([t * np.cos(t), height, t * np.sin(t)], axis=1)
    FIXTURE.parent.mkdir(exist_ok=True)
    np.savetxt(FIXTURE, X, delimiter=",", fmt="%.17g")
X = np.loadtxt(FIXTURE, delimiter=",")


def knn(P, k):
    d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


nbrs = knn(X, K)
W = np.zeros((N, N))
for j in range(N):
    Z = X[nbrs[j]] - X[j]
    C = Z @ Z.T
    ridge = REG * np.trace(C) / K
    if (np.linalg.eigvalsh(C) >= ridge).sum() < K:
        C = C + ridge * np.eye(K)
    w = np.linalg.solve(C, np.ones(K))
    W[nbrs[j], j] = w / w.sum()

A = np.eye(N) - W
M = A @ A.T
vals, vecs = np.linalg.eigh(M)
Y = vecs[:, 1 : D + 1]
low = knn(Y, K)
score = np.mean([len(set(nbrs[j]) & set(low[j])) / K for j in range(N)])
print(f"eigenvalues {vals[:4]}")
print(f"norm {np.abs(M).sum(axis=1).max():.6e} {vals[-1]:.6e}")
print(f"preservation {score:.6f}")
