"""Face template protection with maximum-entropy binary codes.

A small convolutional network is trained to map face images to random
K-bit codes assigned per user. Only SHA-512 digests of the codes are
stored; verification counts how many augmented crops of a probe image
reproduce the enrolled digest exactly.
"""

from mebauth.codes import CodeBook, MebCode, generate_code, generate_codebook
from mebauth.evalbench import (
    EvalReport,
    ProtocolConfig,
    SynthSpec,
    attack_sim,
    compute_eer,
    gar_at_zero_far,
    gen_synth_dataset,
    run_protocol,
    split_train_test,
)
from mebauth.nn import (
    NetArch,
    NetworkParams,
    TrainConfig,
    gradient_check,
    gradient_check_params,
    init_params,
    load_params,
    network_forward,
    random_tiny_arch,
    save_params,
    sgd_train,
)
from mebauth.images import AugmentConfig, crops_all, illum_normalize, load_image, save_image
from mebauth.matcher import MatchScore, binarize, decide, identify, score_verify
from mebauth.rng import make_rng
from mebauth.vault import ProtectedTemplate, Vault, hash_code

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "CodeBook",
    "EvalReport",
    "MatchScore",
    "MebCode",
    "NetArch",
    "NetworkParams",
    "ProtectedTemplate",
    "ProtocolConfig",
    "SynthSpec",
    "TrainConfig",
    "Vault",
    "attack_sim",
    "binarize",
    "compute_eer",
    "crops_all",
    "decide",
    "gar_at_zero_far",
    "gen_synth_dataset",
    "generate_code",
    "generate_codebook",
    "gradient_check",
    "gradient_check_params",
    "hash_code",
    "identify",
    "illum_normalize",
    "init_params",
    "load_image",
    "load_params",
    "make_rng",
    "network_forward",
    "random_tiny_arch",
    "run_protocol",
    "save_image",
    "save_params",
    "score_verify",
    "sgd_train",
    "split_train_test",
]
