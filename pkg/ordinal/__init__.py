from .errors import InputError, DomainError, EvaluationError
from .spatial_graph import SpatialGraph, LcarHyper, build_graph, grid_graph
from .model import SurveyDataset, ModelSpec, CellTable, ParameterState, compile_cells
from .sampler import McmcConfig, PosteriorDraws, run
