"""Minimal float64 autodiff engine and the layers the PPM models need."""
from . import tensor as ops
from .layers import (LSTM, MLP, BatchNorm, Embedding, Encoder, EncoderLayer, LayerNorm,
                     Linear, Module, MultiHeadAttention, lstm_layer, multi_head_attention,
                     sinusoidal_positions)
from .optim import Adam, count_params, make_rng
from .tensor import Tensor

__all__ = [
    "Adam", "BatchNorm", "Embedding", "Encoder", "EncoderLayer", "LSTM", "LayerNorm", "Linear",
    "MLP", "Module", "MultiHeadAttention", "Tensor", "count_params", "lstm_layer", "make_rng",
    "multi_head_attention", "ops", "sinusoidal_positions",
]
