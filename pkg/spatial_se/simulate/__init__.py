# Smart-speaker corpus spatialization: scenes, image-source RIRs, diffuse noise, mixing.
from .geometry import ArrayGeometry, RoomSpec, absorption_from_t60  # noqa: F401
from .rir import Rir, calibrate_absorption, schroeder_curve, schroeder_t60, simulate_rir  # noqa: F401
from .scene import SceneConstraints, SceneSpec, check_scene, sample_scene, utterance_seed  # noqa: F401
from .diffuse import gen_diffuse, spherical_coherence  # noqa: F401
from .mixer import MixtureRecord, build_mixture, fit_length, measured_snr, snr_gain  # noqa: F401
from .corpus import spatialize_corpus  # noqa: F401
