"""Graph neural networks with hybrid aggregation/comparison filters for
unsupervised combinatorial optimization."""
from .config import RunConfig, preset
from .data import Dataset
from .decoders import Solution, decode
from .errors import BudgetError, ConfigError, ContractError, GconError, GraphError, ShapeError, TrainingError
from .filters import Aggregation, Comparison, FilterBank
from .graph import Graph, GraphBatch, generate_ba, generate_rb, RBParams
from .model import GconModel

__all__ = [
    "Aggregation", "BudgetError", "Comparison", "ConfigError", "ContractError", "Dataset", "FilterBank",
    "GconError", "GconModel", "Graph", "GraphBatch", "GraphError", "RBParams", "RunConfig",
    "ShapeError", "Solution", "TrainingError", "decode", "generate_ba", "generate_rb", "preset",
]
