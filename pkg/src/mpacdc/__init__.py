"""Atom-centered density correlation features, their message-passing extensions, and linear models."""

from .acdc import acdc, bispectrum, cg_combine, pca_contract, power_spectrum, scalar_gate, three_center_invariant
from .blocks import EquivariantBlock, Labels, TensorMap, load_tensormap, save_tensormap
from .density import FeatureSpec, build_batch, expand_density, expand_pair
from .errors import ConfigurationError, ContractError, GenerationError, InputError, ParseError
from .features import compute_features, parse_feature_string
from .radial import RadialBasisSpec, evaluate_radial
from .so3 import CGCache, Rotation, build_cg_cache, real_spherical_harmonics, wigner_matrix
from .structures import Structure, build_neighbor_list, read_xyz, write_xyz

__all__ = [
    "CGCache",
    "ConfigurationError",
    "ContractError",
    "EquivariantBlock",
    "FeatureSpec",
    "GenerationError",
    "InputError",
    "Labels",
    "ParseError",
    "RadialBasisSpec",
    "Rotation",
    "Structure",
    "TensorMap",
    "acdc",
    "bispectrum",
    "build_batch",
    "build_cg_cache",
    "build_neighbor_list",
    "cg_combine",
    "compute_features",
    "evaluate_radial",
    "expand_density",
    "expand_pair",
    "load_tensormap",
    "parse_feature_string",
    "pca_contract",
    "power_spectrum",
    "read_xyz",
    "real_spherical_harmonics",
    "save_tensormap",
    "scalar_gate",
    "three_center_invariant",
    "wigner_matrix",
    "write_xyz",
]
