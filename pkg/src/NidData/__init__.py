#   Neural Implicit Dictionary
#      Released under the MIT license
#

__all__ = ["Generators", "Corruption", "ImageIO", "Checkpoint", "Serialization"]
