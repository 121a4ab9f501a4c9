"""Residual-guided k-space under-sampling pattern optimization.

Thin Python layer over the C++ core: centered unitary FFTs, baseline and
probabilistic sampling masks, lightweight cross-modality translators, the
joint pattern refinement loop, reconstruction surrogates, and PSNR/SSIM.
"""

from ksopt._core import (
    DegenerateMassError,
    TrainConfig,
    Translator,
    adjusted_mass,
    apply_rigid,
    bernoulli_realize,
    fft2c,
    gen_center,
    gen_gaussian_1d,
    gen_phantom_pairs,
    gen_poisson,
    ifft2c,
    init_weights,
    make_threshold,
    normalize_residual,
    psnr,
    regularized_ls,
    sample_rigid,
    scale_to_factor,
    soft_binarize,
    ssim,
    topk_extract,
    train,
    undersample,
    zero_filled,
)

__all__ = [
    "DegenerateMassError",
    "TrainConfig",
    "Translator",
    "adjusted_mass",
    "apply_rigid",
    "bernoulli_realize",
    "fft2c",
    "gen_center",
    "gen_gaussian_1d",
    "gen_phantom_pairs",
    "gen_poisson",
    "ifft2c",
    "init_weights",
    "make_threshold",
    "normalize_residual",
    "psnr",
    "regularized_ls",
    "sample_rigid",
    "scale_to_factor",
    "soft_binarize",
    "ssim",
    "topk_extract",
    "train",
    "undersample",
    "zero_filled",
]
