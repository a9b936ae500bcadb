"""Why alpha_n = 1/(n+1), beta = 1/2 cannot feed the vKM bound, and an instance that can.

The bound needs a rate for |alpha_n - alpha_{n-1}| / (alpha_n^2 beta_n) -> 0.
Run: python demos/vkm_premises.py
"""

import numpy as np


def ratio(alpha, n, beta=0.5):
    return np.abs(alpha(n) - alpha(n - 1)) / (alpha(n) ** 2 * beta)


n = np.array([1, 10, 100, 10_000, 1_000_000], dtype=float)
harmonic = lambda k: 1 / (k + 1)
cbrt = lambda k: (k + 1) ** (-1 / 3)
print("n           ", n.astype(int))
print("1/(n+1)     ", np.round(ratio(harmonic, n), 6), "-> 2, never small")
print("(n+1)^(-1/3)", np.round(ratio(cbrt, n), 6), "-> 0")

# partial sums of alpha_n beta_n against the candidate rate k -> ceil(4k)
sums = np.cumsum(0.5 / np.arange(1, 10_001))
for k in (1, 2, 5, 10):
    m = int(np.ceil(4 * k))
    print(f"k={k}: sum up to {m} is {sums[m]:.3f}", "ok" if sums[m] >= k else "short")
