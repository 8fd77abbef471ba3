"""Python bindings for the resinsort C++ core."""

from ._resinsort import (
    DataError,
    DimensionError,
    Model,
    NumericError,
    Projection,
    conv2d,
    detect_outliers,
    fc,
    fit_lda,
    fit_pca,
    knn_classify,
    load_model,
    maxpool,
    open_dataset,
    relu,
    resize_bilinear,
    siamese_loss,
    synth,
    train,
    triplet_loss,
)

__all__ = [
    "DataError",
    "DimensionError",
    "Model",
    "NumericError",
    "Projection",
    "conv2d",
    "detect_outliers",
    "fc",
    "fit_lda",
    "fit_pca",
    "knn_classify",
    "load_model",
    "maxpool",
    "open_dataset",
    "relu",
    "resize_bilinear",
    "siamese_loss",
    "synth",
    "train",
    "triplet_loss",
]
