"""conceptforge: affordance-driven novel concept design pipeline.

Library + CLI covering ontology management, proximity scoring, spectrum
sampling with three-stage curricula, triplet-objective training on a toy
denoiser, and judge-based evaluation with agreement statistics.
"""

__version__ = "0.1.0"
