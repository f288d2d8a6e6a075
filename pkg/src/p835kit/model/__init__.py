from .checkpoint import (
    Checkpoint,
    CheckpointError,
    ConfigMismatchWarning,
    init_checkpoint,
    load_checkpoint,
    load_ovrl_head,
    save_checkpoint,
    save_ovrl_head,
    tensor_digest,
)
from .network import (
    EncoderModel,
    FrontendConfig,
    ModelConfig,
    OvrlHead,
    RegressionHead,
    regression_loss_and_grads,
)
from .training import (
    STAGE_EPOCHS,
    TrainConfig,
    encode,
    lr_at,
    mse_loss,
    predict,
    predict_ovrl_a,
    predict_ovrl_p,
    predict_raw,
    train_ovrl_head,
    train_stage,
    two_stage,
)

__all__ = [
    "Checkpoint", "CheckpointError", "ConfigMismatchWarning", "EncoderModel", "FrontendConfig",
    "ModelConfig", "OvrlHead", "RegressionHead", "STAGE_EPOCHS", "TrainConfig", "encode",
    "init_checkpoint", "load_checkpoint", "load_ovrl_head", "lr_at", "mse_loss", "predict",
    "predict_ovrl_a", "predict_ovrl_p", "predict_raw", "regression_loss_and_grads",
    "save_checkpoint", "save_ovrl_head", "tensor_digest", "train_ovrl_head", "train_stage",
    "two_stage",
]
