# %% [markdown]
# # Sampling strategies on planted supports
#
# Each synthetic map has one to four support entries per row over Gaussian
# noise. Top-k gets the true mean support size, which is right on average
# but wrong for most rows; Min-p thresholds relative to each row's peak.

# %%
from tsformer.pipeline.ablate import support_recovery
from tsformer.pipeline.config import RunConfig

cfg = RunConfig()
for noise in (0.0, 0.1, 0.2):
    res = support_recovery(cfg, noise=noise)
    print(f"noise {noise}: " + "  ".join(f"{s} {v['f1']:.3f}" for s, v in res.items()))

# %% [markdown]
# With a fixed support size per row and no noise, every strategy is exact.

# %%
res = support_recovery(cfg, noise=0.0, support_min=3, support_max=3)
print({s: v["f1"] for s, v in res.items()})

# %% [markdown]
# ISA only raises its threshold from maps that were already judged stable.
# Planted maps sit just above the initial threshold of 4, so none qualify
# and the threshold never moves.
