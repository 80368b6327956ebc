"""DiffKernel package init."""

__all__ = ["Tensor", "Tape", "Optim", "GradCheck"]
