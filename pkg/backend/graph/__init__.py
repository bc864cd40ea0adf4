"""
動態圖推論
Dynamic Graph Inference
"""

from .dgi import (
    DynamicGraphInference,
    EdgeMlp,
    expected_adjacency,
    fully_connected_adjacency,
    gumbel_softmax,
    gumbel_softmax_adjacency,
    harden,
    pairwise_logits,
    project_features,
    sample_gumbel,
)

__all__ = [
    'DynamicGraphInference', 'EdgeMlp', 'expected_adjacency', 'fully_connected_adjacency',
    'gumbel_softmax', 'gumbel_softmax_adjacency', 'harden', 'pairwise_logits',
    'project_features', 'sample_gumbel',
]
