"""
Image quality metrics.
"""

from src.metrics.quality import MetricReport, evaluate, psnr, ssim

__all__ = ["MetricReport", "evaluate", "psnr", "ssim"]
