# %% [markdown]
# # Frequency-domain attention and Min-p masking
#
# Attention scores are computed per patch as the circular cross-correlation
# of a query patch with a key patch, evaluated through the FFT. Min-p then
# keeps, in every row of the map, the entries above a fraction of the row
# maximum.

# %%
import numpy as np

from tsformer.msa import freq_attention, min_p_keep, top_k_keep
from tsformer.spectral import fft2, naive_dft2

rng = np.random.default_rng(0)

# %% [markdown]
# The radix-2 transform agrees with the direct double sum.

# %%
for n in (4, 8, 16, 32):
    x = rng.standard_normal((n, n))
    print(n, np.abs(fft2(x) - naive_dft2(x)).max())

# %% [markdown]
# A query that is a shifted copy of the key peaks at the shift.

# %%
k = rng.standard_normal((8, 8))
q = np.roll(k, shift=(2, 5), axis=(0, 1))
M = freq_attention(q, k).data
print("peak at", np.unravel_index(M.argmax(), M.shape))

# %% [markdown]
# Min-p adapts the number of kept entries to each row; top-k does not.

# %%
for p in (0.2, 0.5, 0.8):
    print(f"p_base={p}: kept per row", min_p_keep(M, p).sum(axis=1))
print("top_k=2: kept per row", top_k_keep(M, 2).sum(axis=1))
