from stainreg.raster.image import Image, Mask, Pyramid, decode_pnm, encode_pnm, read_pnm, write_pnm
from stainreg.raster.masks import (
    kmeans_mask,
    largest_gap_select,
    mask_pyramid,
    resize_mask,
    select_tissue_pair,
    threshold_mask,
    tissue_bounding_box,
)
from stainreg.raster.preprocess import (
    build_pyramid,
    center_of_mass,
    crop_border,
    downsample,
    equalize_clahe,
    gaussian_smooth,
    invert,
    luminance,
    remove_dark_border,
    to_gray_inverted,
)

__all__ = [
    "Image",
    "Mask",
    "Pyramid",
    "build_pyramid",
    "center_of_mass",
    "crop_border",
    "decode_pnm",
    "downsample",
    "encode_pnm",
    "equalize_clahe",
    "gaussian_smooth",
    "invert",
    "kmeans_mask",
    "largest_gap_select",
    "luminance",
    "mask_pyramid",
    "read_pnm",
    "remove_dark_border",
    "resize_mask",
    "select_tissue_pair",
    "threshold_mask",
    "tissue_bounding_box",
    "to_gray_inverted",
    "write_pnm",
]
