# %% [markdown]
# # FLOP ledger and tiled inference

# %%
import numpy as np

from tsformer.model import ModelConfig, TSFormer, model_forward
from tsformer.pipeline.bench import run_bench
from tsformer.pipeline.config import RunConfig
from tsformer.pipeline.tiling import tile_inference
from tsformer.tensor import Tensor

# %% [markdown]
# Dense and sparse passes on one random image; only the attention
# modulation shrinks, by exactly the fraction of masked entries.

# %%
res = run_bench(RunConfig(bench_size=128))
print("\n".join(res.lines()[:10]))

# %% [markdown]
# Tiles of 64 with 16 pixels of overlap against a full-frame pass.

# %%
model = TSFormer(ModelConfig(), seed=0)
img = Tensor(np.random.default_rng(0).random((1, 3, 128, 128), dtype=np.float32))
full = model_forward(img, model).data
tiled = tile_inference(img, model, 64, 16).data
print("mean abs difference", float(np.abs(full - tiled).mean()))
