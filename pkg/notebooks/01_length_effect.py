# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # How segment length inflates KL2
#
# Two samples from the *same* 13-dimensional Gaussian should be at distance
# zero.  With finite samples they never are, and the gap grows quickly as
# either sample gets short.  Most of it comes from the trace term
# `tr(S_B^-1 S_A)`, whose expectation for N(0, I) data has a closed form:
# `d (m - 1) / (m - d - 2)` with `m = |B|`.

# %%
import numpy as np

from kl2bias import compute_stats, kl2, trace_term

d = 13


def mean_over_trials(fn, n_a, n_b, trials=500, seed=0):
    rng = np.random.default_rng(seed)
    vals = [fn(compute_stats(rng.standard_normal((n_a, d))), compute_stats(rng.standard_normal((n_b, d))))
            for _ in range(trials)]
    return np.mean(vals)


# %% [markdown]
# ## Trace term vs. |B| with |A| = 100

# %%
print(f"{'|B|':>6} {'simulated':>10} {'closed form':>12}")
for m in (20, 30, 50, 100, 200, 500, 1000):
    exact = d * (m - 1) / (m - d - 2)
    print(f"{m:>6} {mean_over_trials(trace_term, 100, m):>10.3f} {exact:>12.3f}")

# %% [markdown]
# Swapping roles, |A| barely matters once |B| is fixed:

# %%
for n in (30, 100, 1000):
    print(n, round(mean_over_trials(trace_term, n, 100), 3))

# %% [markdown]
# ## Full KL2 on a length grid
#
# Each cell is a mean same-distribution distance.  This is what a
# correction surface stores.

# %%
grid = (20, 50, 100, 300, 1000)
print("      " + "".join(f"{m:>9}" for m in grid))
for n in grid:
    print(f"{n:>6}" + "".join(f"{mean_over_trials(kl2, n, m, trials=200):>9.3f}" for m in grid))
