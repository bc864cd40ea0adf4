"""
BGN 模型
BGN Models
"""

from .bgn import GRADIENT_GROUPS, BgnBackbone, BgnModel, ModelOutput, ModelSpec, build_parameters
from .grapher import GnnBlockParams, Grapher, gcn_layer, gnn_block, stacked_gnn, temporal_gru
from .parameters import BgnParameters, ParamFactory
from .readout import VAR_FLOOR, HeadMlp, gaussian_head, graph_readout, point_head

__all__ = [
    'GRADIENT_GROUPS', 'BgnBackbone', 'BgnModel', 'ModelOutput', 'ModelSpec', 'build_parameters',
    'GnnBlockParams', 'Grapher', 'gcn_layer', 'gnn_block', 'stacked_gnn', 'temporal_gru',
    'BgnParameters', 'ParamFactory',
    'VAR_FLOOR', 'HeadMlp', 'gaussian_head', 'graph_readout', 'point_head',
]
