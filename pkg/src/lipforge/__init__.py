"""lipforge: construct and numerically probe badly non-differentiable
1-Lipschitz mappings at desk scale.

The package builds certified 1-Lipschitz expression trees, linearizes them
exactly on shrinking balls around nested separated nets through a two-player
ball game, and certifies the resulting non-differentiability with sampled
difference-quotient and one-sided derivative probes.
"""

from .numerics import CONSTRUCTION_DPS, LipForgeError
from .space import Domain, LinearMap, NormKind, diam, dist_to_boundary, norm, op_norm, sample_ball
from .lipfun import (
    AddConst,
    Affine,
    Const,
    Linear,
    LipFun,
    NormOf,
    Patch,
    Patched,
    Precompose,
    RadialBlend,
    Scale,
    Sum,
    add_const,
    deserialize,
    eval_batch,
    eval_point,
    identity,
    patch,
    radial_blend,
    serialize,
    sup_dist,
    zero_map,
)
from .nets import NetFamily, TargetSet, greedy_net, nested_nets, restrict, separation
from .perturb import PerturbParams, PerturbResult, blend_params, choose_s, linearize_near
from .game import (
    GameState,
    GameTranscript,
    MoveRecord,
    Witness,
    adversary,
    load_transcript,
    player2_move,
    run_game,
    validate_move,
    witnesses,
)
from .probe import (
    DiniReport,
    DqProfile,
    ScaleLadder,
    best_local_linear,
    dini_empty_certificate,
    dini_lower,
    dini_values,
    dq_error,
    dq_profile,
    witness_bound_report,
    witness_dini_report,
)

__version__ = "0.1.0"

__all__ = [
    "CONSTRUCTION_DPS",
    "LipForgeError",
    "Domain",
    "LinearMap",
    "NormKind",
    "diam",
    "dist_to_boundary",
    "norm",
    "op_norm",
    "sample_ball",
    "LipFun",
    "Const",
    "Linear",
    "Affine",
    "NormOf",
    "Sum",
    "Scale",
    "AddConst",
    "RadialBlend",
    "Patch",
    "Patched",
    "Precompose",
    "identity",
    "zero_map",
    "add_const",
    "radial_blend",
    "patch",
    "eval_point",
    "eval_batch",
    "sup_dist",
    "serialize",
    "deserialize",
    "TargetSet",
    "NetFamily",
    "separation",
    "restrict",
    "greedy_net",
    "nested_nets",
    "PerturbParams",
    "PerturbResult",
    "choose_s",
    "blend_params",
    "linearize_near",
    "GameState",
    "GameTranscript",
    "MoveRecord",
    "Witness",
    "validate_move",
    "player2_move",
    "adversary",
    "run_game",
    "witnesses",
    "load_transcript",
    "ScaleLadder",
    "DqProfile",
    "DiniReport",
    "dq_error",
    "dq_profile",
    "dini_values",
    "dini_lower",
    "dini_empty_certificate",
    "best_local_linear",
    "witness_bound_report",
    "witness_dini_report",
]
