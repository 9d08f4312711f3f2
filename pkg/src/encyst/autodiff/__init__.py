from .tensor import (
    Graph,
    ShapeError,
    Tensor,
    add,
    conv2d,
    div,
    exp,
    log,
    log_softmax,
    logsumexp,
    matmul,
    max_pool2d,
    mul,
    parameter,
    placeholder,
    relu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    square,
    stop_gradient,
    sub,
    tanh,
    tmean,
    tsum,
)
from .optim import SGD, Adam
from .checkpoint import (
    CheckpointError,
    checkpoint_hash,
    load_checkpoint,
    save_checkpoint,
)
