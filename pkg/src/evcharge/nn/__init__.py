"""Small NumPy neural-network engine for the image classifier."""
from .layers import (
    adam_step,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_apply,
    l1l2_penalty,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    sgd_step,
    softmax,
    sparse_ce_loss,
)
from .model import (
    CnnSpec,
    ModelParams,
    checkpoint_bytes,
    deep_spec,
    default_spec,
    init_params,
    load_checkpoint,
    predict,
    predict_proba,
    save_checkpoint,
)
from .train import CnnClassifier, Curves, TrainConfig, evaluate, train_cnn
