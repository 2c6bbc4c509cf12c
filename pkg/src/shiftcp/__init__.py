"""Conformal prediction for graph node classification under conditional shift."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    SparseGraph,
    NormalizedAdjacency,
    SplitSpec,
    DatasetFormatError,
    GraphValidationError,
    load_graph,
    save_graph,
    make_graph,
    normalize_adjacency,
    generate_sbm,
    make_splits,
)
from .autodiff import Tensor, ParamSet, backward  # noqa: F401
from .ppr import PPRVector, ppr_row, biased_train_sample  # noqa: F401
from .discrepancy import CmdConfig, MmdConfig, cmd, mmd  # noqa: F401
from .models import ModelConfig, ForwardResult, init_params, forward  # noqa: F401
from .train import (  # noqa: F401
    TrainConfig,
    TrainedModel,
    TrainingDivergedError,
    sample_iid,
    condsr_loss,
    train,
    predict_probs,
)
from .conformal import (  # noqa: F401
    CalibrationResult,
    PredictionSet,
    ConformalReport,
    aps_score,
    calibrate,
    predict_set,
    evaluate,
)
from .harness import (  # noqa: F401
    ExperimentConfig,
    ResultTable,
    run_experiment,
    sweep_lambdas,
    emit_report,
)
