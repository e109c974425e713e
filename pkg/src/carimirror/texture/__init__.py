from .costs import BIG_COST, DEFAULT_DATA_WEIGHT, matching_cost, view_cost
from .graphcut import labeling_energy, min_cut, solve_labeling
from .poisson import poisson_blend, poisson_residual
from .samples import UNASSIGNED, LabelMap, TextureAtlas, ViewSample

__all__ = [
    "BIG_COST", "DEFAULT_DATA_WEIGHT", "matching_cost", "view_cost",
    "labeling_energy", "min_cut", "solve_labeling",
    "poisson_blend", "poisson_residual",
    "UNASSIGNED", "LabelMap", "TextureAtlas", "ViewSample",
]
