#   Neural Implicit Dictionary
#      Released under the MIT license
#

__all__ = ["MeasurementSet", "Functionals"]
