"""Locally supervised global image restoration on periodic grids.

Library layout:

- :mod:`sparsedense.sampling`   masks, subsampling operators, translations
- :mod:`sparsedense.oracle`     exact finite-probability verification engine
- :mod:`sparsedense.autodiff`   dense-tensor reverse-mode autodiff + optimizer
- :mod:`sparsedense.network`    translation-equivariant U-Net
- :mod:`sparsedense.quadrants`  synthetic four-quadrant pattern data
- :mod:`sparsedense.train`      training loops (sparse-dense and patch-wise)
- :mod:`sparsedense.metrics`    MSE/SSIM/PSNR and the bilinear baseline
- :mod:`sparsedense.io`         SDI1 image / SDCK checkpoint formats
- :mod:`sparsedense.cli`        command-line entry points
"""

from . import sampling

__all__ = ["sampling"]
__version__ = "0.1.0"
