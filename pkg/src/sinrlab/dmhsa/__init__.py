"""Attention-based SINR estimator: features, model, loss, persistence."""

from .complexity import complexity_estimate
from .features import (FeatureMatrix, attention_masks, extract_features_csi, extract_features_geo,
                       padding_mask)
from .io import load_model, save_model
from .model import (DmhsaConfig, DmhsaModel, ForwardResult, LabelStandardizer, calibrate_bias,
                    count_parameters, destandardize, forward, init_params, masked_mse_loss,
                    param_shapes, parameter_count_formula, standardize_labels)

__all__ = [
    "DmhsaConfig", "DmhsaModel", "FeatureMatrix", "ForwardResult", "LabelStandardizer",
    "attention_masks", "calibrate_bias", "complexity_estimate", "count_parameters", "destandardize",
    "extract_features_csi", "extract_features_geo", "forward", "init_params", "load_model",
    "masked_mse_loss", "padding_mask", "param_shapes", "parameter_count_formula", "save_model",
    "standardize_labels",
]
