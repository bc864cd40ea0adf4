"""
損失與評估指標
Losses and Metrics
"""

from .losses import LossValue, gaussian_nll_loss, mse_loss
from .metrics import (
    APPROX_THRESHOLDS,
    EnsembleReport,
    MetricsReport,
    approximation_error_table,
    flatten_report,
    format_mean_std,
    mae,
    rmse,
    summarize,
)

__all__ = [
    'LossValue', 'gaussian_nll_loss', 'mse_loss',
    'APPROX_THRESHOLDS', 'EnsembleReport', 'MetricsReport', 'approximation_error_table',
    'flatten_report', 'format_mean_std', 'mae', 'rmse', 'summarize',
]
