"""demandcast: long-term monthly electricity demand forecasting.

Feed-forward regression networks (plain and cascade-forward), thirteen
classical batch training algorithms, stacked-autoencoder deep models, and an
expanding-window backtesting harness, wrapped in a FastAPI service with a
thin CLI.
"""

__version__ = "0.1.0"

from .dataset import (  # noqa: F401
    MonthlySample,
    NormalizationParams,
    Series,
    WindowSpec,
    expand_yearly,
    fit_normalization,
    generate_synthetic,
    load_csv,
    slice_window,
)
from .deepstack import (  # noqa: F401
    AutoencoderLayer,
    DeepModel,
    fine_tune,
    predict,
    pretrain_front,
    pretrain_stack,
    train_autoencoder,
)
from .harness import (  # noqa: F401
    ExperimentPlan,
    ExperimentResult,
    report,
    run_experiment,
    sweep_architecture,
    sweep_optimizer,
)
from .metrics import Metrics, mae, mape, rmse  # noqa: F401
from .network import (  # noqa: F401
    Network,
    Topology,
    forward,
    gradient,
    init_weights,
    jacobian,
    param_count,
)
from .optimizers import ALGORITHMS, TrainConfig, TrainReport, train  # noqa: F401
from .presets import PRESETS, ModelSpec  # noqa: F401
