"""Image I/O, degradations, tiling, run configs and the command workflows."""
from .config import ConfigError, RunConfig, load_config, parse_config
from .degrade import DegradationSpec, procedural_texture
from .imageio import ImageFormatError, load_image, save_image
from .tiling import tile_inference

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "DegradationSpec",
    "procedural_texture",
    "ImageFormatError",
    "load_image",
    "save_image",
    "tile_inference",
]
