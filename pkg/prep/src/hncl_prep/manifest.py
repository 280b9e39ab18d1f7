"""Source manifests: where each dataset's files live and how identifiers are
parsed from filenames.

All naming conventions are data here, not logic in the converter, so a
differently packaged archive only needs a manifest tweak. Regexes must
expose named groups ``action``, ``subject``, and ``session`` (for UTD-MHAD
the trial number serves as the session id).
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ModalityRule:
    name: str            # canonical modality name in the output
    pattern: str         # glob pattern under the source root
    filename_regex: str  # named groups: action, subject, session
    loader: str          # one of the loaders in convert.LOADERS


@dataclass(frozen=True)
class SourceManifest:
    dataset: str
    modalities: tuple[ModalityRule, ...]
    # declared class names indexed by action id; actions never observed in a
    # given archive are compacted away at conversion time
    action_names: dict[int, str] = field(default_factory=dict)
    window_len: int = 64
    window_mode: str = "resample"  # "resample": one window per trial; "sliding": fixed windows
    overlap: float = 0.5           # sliding mode only

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        if self.window_mode not in ("resample", "sliding"):
            raise ValueError(f"unknown window_mode {self.window_mode!r}")
        if not (0.0 <= self.overlap < 1.0):
            raise ValueError("overlap must be in [0, 1)")


# Public UTD-MHAD action catalogue (27 actions, ids 1..27).
UTD_MHAD_ACTIONS = {
    1: "swipe_left",
    2: "swipe_right",
    3: "wave",
    4: "clap",
    5: "throw",
    6: "arm_cross",
    7: "basketball_shoot",
    8: "draw_x",
    9: "draw_circle_cw",
    10: "draw_circle_ccw",
    11: "draw_triangle",
    12: "bowling",
    13: "boxing",
    14: "baseball_swing",
    15: "tennis_swing",
    16: "arm_curl",
    17: "tennis_serve",
    18: "push",
    19: "knock",
    20: "catch",
    21: "pickup_throw",
    22: "jog",
    23: "walk",
    24: "sit_to_stand",
    25: "stand_to_sit",
    26: "lunge",
    27: "squat",
}


def utd_mhad_manifest(window_len: int = 64, window_mode: str = "resample",
                      overlap: float = 0.5) -> SourceManifest:
    """UTD-MHAD release layout: Inertial/aA_sS_tT_inertial.mat holding
    ``d_iner`` [frames x 6] and Skeleton/aA_sS_tT_skeleton.mat holding
    ``d_skel`` [20 joints x 3 x frames]. The trial index T is the session id."""
    return SourceManifest(
        dataset="utd-mhad",
        modalities=(
            ModalityRule(
                name="inertial",
                pattern="Inertial/*.mat",
                filename_regex=r"a(?P<action>\d+)_s(?P<subject>\d+)_t(?P<session>\d+)_inertial\.mat$",
                loader="utd_mat_inertial",
            ),
            ModalityRule(
                name="skeleton",
                pattern="Skeleton/*.mat",
                filename_regex=r"a(?P<action>\d+)_s(?P<subject>\d+)_t(?P<session>\d+)_skeleton\.mat$",
                loader="utd_mat_skeleton",
            ),
        ),
        action_names=dict(UTD_MHAD_ACTIONS),
        window_len=window_len,
        window_mode=window_mode,
        overlap=overlap,
    )


def mmact_manifest(window_len: int = 64, window_mode: str = "sliding",
                   overlap: float = 0.5) -> SourceManifest:
    """MMAct layout as distributed: phone accelerometer CSV clips under
    acc_phone_clip/subjectS/sceneX/sessionK/<action>.csv and 2-D pose
    keypoints as .npy under keypoints/subjectS/sceneX/sessionK/<action>.npy.

    Session ids are the ``sessionK`` path component; down-stream splits sort
    them ascending per subject. Action ids are assigned by sorted action
    name, so they are stable for a fixed archive.
    """
    return SourceManifest(
        dataset="mmact",
        modalities=(
            ModalityRule(
                name="inertial",
                pattern="acc_phone_clip/subject*/scene*/session*/*.csv",
                filename_regex=(
                    r"subject(?P<subject>\d+)/scene\d+/session(?P<session>\d+)/"
                    r"(?P<action>[A-Za-z_]+)\.csv$"
                ),
                loader="csv_channels",
            ),
            ModalityRule(
                name="skeleton",
                pattern="keypoints/subject*/scene*/session*/*.npy",
                filename_regex=(
                    r"subject(?P<subject>\d+)/scene\d+/session(?P<session>\d+)/"
                    r"(?P<action>[A-Za-z_]+)\.npy$"
                ),
                loader="npy_keypoints",
            ),
        ),
        window_len=window_len,
        window_mode=window_mode,
        overlap=overlap,
    )


MANIFESTS = {
    "utd-mhad": utd_mhad_manifest,
    "mmact": mmact_manifest,
}
