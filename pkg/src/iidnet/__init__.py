"""Self-supervised intrinsic image decomposition.

Decomposes linear-RGB images into reflectance, gray shading, and a global
illuminant color, trained purely from single images by simulating
illumination-brightness and -color changes.
"""

from .image import ColorVec, GrayMap, LinearImage, geometric_mean_luminance, luminance
from .illumination import IlluminationCondition, WbParams, evaluation_grid, generate_views
from .losses import LossBreakdown, LossWeights, total_loss
from .metrics import LmseConfig, dssim, lmse, lmse_decomposition, mse, psnr, ssim
from .network import Decomposition, NetConfig, NetParams, decompose, init_params, reconstruct
from .training import AdamConfig, TrainConfig, evaluate_images, lmse_evaluate, train

__all__ = [
    "AdamConfig", "ColorVec", "Decomposition", "GrayMap", "IlluminationCondition",
    "LinearImage", "LmseConfig", "LossBreakdown", "LossWeights", "NetConfig", "NetParams",
    "TrainConfig", "WbParams", "decompose", "dssim", "evaluate_images", "evaluation_grid",
    "generate_views", "geometric_mean_luminance", "init_params", "lmse", "lmse_decomposition",
    "lmse_evaluate", "luminance", "mse", "psnr", "reconstruct", "ssim", "total_loss", "train",
]

__version__ = "0.1.0"
