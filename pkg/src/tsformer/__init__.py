"""Min-p sparse frequency-domain attention and the TSFormer restoration network."""
from .metrics import FlopLedger, flops_report, psnr, ssim
from .model import ModelConfig, TSFormer, model_forward, param_count
from .msa import SparsityConfig
from .rmt import TrustConfig

__version__ = "0.1.0"
