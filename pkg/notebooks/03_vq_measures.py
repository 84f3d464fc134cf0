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
# # Codebook distances and sample size
#
# Two codebook-based measures:
#
# * `vq_distance` compares two trained codebooks directly, so both sides
#   carry training noise.
# * `aqd_distance` scores each segment's frames against the other's
#   codebook and averages per frame.  Only the codebook side is trained.

# %%
import numpy as np

from kl2bias import aqd, aqd_distance, train_codebook, vq_distance


def same_gaussian_mean(fn, n, m, trials=20):
    vals = []
    for t in range(trials):
        rng = np.random.default_rng([n, m, t])
        vals.append(fn(rng.standard_normal((n, 13)), rng.standard_normal((m, 13))))
    return np.mean(vals)


def vq_fn(a, b):
    return vq_distance(train_codebook(a), train_codebook(b))


# %% [markdown]
# Ratios relative to the (1000, 1000) cell:

# %%
ref_vq = same_gaussian_mean(vq_fn, 1000, 1000)
ref_aqd = same_gaussian_mean(aqd_distance, 1000, 1000)
print(f"{'n':>5} {'vq':>7} {'aqd':>7}")
for n in (30, 50, 100, 300, 1000):
    print(f"{n:>5} {same_gaussian_mean(vq_fn, n, 1000) / ref_vq:>7.3f} "
          f"{same_gaussian_mean(aqd_distance, n, 1000) / ref_aqd:>7.3f}")

# %% [markdown]
# AQD is a per-frame mean, so repeating the query frames changes nothing:

# %%
rng = np.random.default_rng(1)
cb = train_codebook(rng.standard_normal((800, 13)))
x = rng.standard_normal((97, 13))
print(aqd(x, cb) == aqd(np.vstack([x, x, x]), cb))
