"""Neural text encoders (small transformer, CNN, GRU) with analytic
gradients, plus the tokenizer and pooling helpers built on them."""

from .core import (
    TextEncoder,
    backward_from_repr,
    encode_ids,
    encode_ids_with_cache,
    encode_text,
    forward_with_loss,
    gradient,
    inter_user_representation,
    intra_user_representation,
    loss_and_gradients,
)
from .params import (
    EncoderConfig,
    EncoderParams,
    init_params,
    load_pretrained_embeddings,
)
from .tokenizer import (
    BOS_ID,
    PAD_ID,
    UNK_ID,
    Tokenizer,
    build_tokenizer,
    tokenizer_from_texts,
)

__all__ = [
    "BOS_ID",
    "PAD_ID",
    "UNK_ID",
    "EncoderConfig",
    "EncoderParams",
    "TextEncoder",
    "Tokenizer",
    "backward_from_repr",
    "build_tokenizer",
    "encode_ids",
    "encode_ids_with_cache",
    "encode_text",
    "forward_with_loss",
    "gradient",
    "init_params",
    "inter_user_representation",
    "intra_user_representation",
    "load_pretrained_embeddings",
    "loss_and_gradients",
    "tokenizer_from_texts",
]
