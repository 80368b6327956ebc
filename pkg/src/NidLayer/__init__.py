#   Neural Implicit Dictionary
#      Released under the MIT license
#

__all__ = ["Sparse", "Gating", "Dictionary", "Patches"]
