"""
生成模型：VAE 資料擴增與缺值補值
Generative Extensions
"""

from .imputation import GraphImputer, MaskedBatch, impute_frame, mask_frame, train_imputer, wgan_impute, wgan_train_step
from .retrain import retrain_with_generated
from .vae import BatteryVae, LatentSample, generated_frame, train_vae, vae_elbo, vae_generate

__all__ = [
    'GraphImputer', 'MaskedBatch', 'impute_frame', 'mask_frame', 'train_imputer', 'wgan_impute', 'wgan_train_step',
    'retrain_with_generated',
    'BatteryVae', 'LatentSample', 'generated_frame', 'train_vae', 'vae_elbo', 'vae_generate',
]
