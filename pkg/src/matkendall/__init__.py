"""Robust estimation of matrix factor models with matrix Kendall's tau."""

from .elliptical_sim import GroundTruth, ScenarioSpec, generate_scenario
from .errors import DegenerateError, FormatError, MatKendallError, ParameterError, ValidationError
from .kendall import KendallTau, kendall, pair_kernel
from .metrics import loading_variation, mse_common, pricing_errors, subspace_distance
from .mrts import (
    FactorFit, LoadingEstimate, apca_loadings, apca_ranks, mker_ranks, mrts_factors, mrts_loadings,
)
from .spectral import EigenDecomp, RankSelection, ratio_rank, sym_eigen
from .tensor_io import MatrixSeries, load_series, save_series, write_table

__version__ = "0.1.0"
