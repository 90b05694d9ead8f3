"""Tabular-to-image conversion by rank-matched feature placement."""
from .distances import (
    DistanceMetric,
    PixelGrid,
    RankMatrix,
    feature_distance_matrix,
    pixel_rank_matrix,
    rank_matrix,
)
from .optimize import (
    Assignment,
    ErrorKind,
    IgtdConfig,
    exhaustive_minimum,
    igtd_error,
    optimize_assignment,
    swap_delta,
)
from .render import (
    ImageSample,
    pad_features,
    read_image_dir,
    read_pgm,
    render_images,
    render_pixels,
    write_image_dir,
    write_pgm,
)


def convert(x, cfg: IgtdConfig):
    """Pad, rank, optimise and render ``x`` in one call.

    Returns ``(images, assignment, grid, padded_matrix)``.
    """
    grid = pixel_rank_matrix(cfg.ni, cfg.nj, cfg.pixel_metric)
    padded = pad_features(x, grid.size)
    r = rank_matrix(feature_distance_matrix(padded, cfg.feature_metric))
    assignment = optimize_assignment(r, grid, cfg)
    return render_images(padded, assignment, grid), assignment, grid, padded


__all__ = [
    "Assignment", "DistanceMetric", "ErrorKind", "IgtdConfig", "ImageSample", "PixelGrid",
    "RankMatrix", "convert", "exhaustive_minimum", "feature_distance_matrix", "igtd_error",
    "optimize_assignment", "pad_features", "pixel_rank_matrix", "rank_matrix", "read_image_dir",
    "read_pgm", "render_images", "render_pixels", "swap_delta", "write_image_dir", "write_pgm",
]
