#   Neural Implicit Dictionary
#      Released under the MIT license
#

__all__ = ["TaskConfig", "Model", "Trainer", "Adaptation", "Applications", "Baseline"]
