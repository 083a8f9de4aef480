from .export import export_dataset, import_batches
from .generator import (
    Dataset,
    LossSpec,
    TaskSpec,
    batches,
    default_losses,
    generate,
    shuffle_indices,
)

__all__ = [
    "Dataset",
    "LossSpec",
    "TaskSpec",
    "batches",
    "default_losses",
    "export_dataset",
    "generate",
    "import_batches",
    "shuffle_indices",
]
