"""
Device-generalisation (DG) presets.

Each preset fixes the Freq-MixStyle mixing alpha, the FMS apply probability
and the DIR apply probability. The values depend on who is trained: CNN
teachers, the CPM student, or (annotation only) the imported transformer.
"""
from dataclasses import dataclass

from experiments.exceptions import UnknownPresetError


@dataclass(frozen=True)
class AugmentSettings:
    alpha_fms: float
    p_fms: float
    p_dir: float


DG_PRESETS = ("DIRFMS", "FMS", "DIR", "NOAUG")
IMPORTED_ARCHITECTURES = ("passt",)

_TABLE = {
    "teacher": AugmentSettings(0.3, 0.8, 0.4),
    "student": AugmentSettings(0.3, 0.4, 0.6),
    "passt": AugmentSettings(0.4, 0.4, 0.6),
}


def preset_family(role, architecture):
    if architecture in IMPORTED_ARCHITECTURES:
        return "passt"
    return "student" if role == "student" else "teacher"


def resolve_preset(name, role="student", architecture="cpm"):
    """The augmentation settings a DG preset expands to for this role."""
    name = name.upper()
    if name not in DG_PRESETS:
        raise UnknownPresetError(f"unknown DG preset {name!r}; expected one of {', '.join(DG_PRESETS)}")
    full = _TABLE[preset_family(role, architecture)]
    return AugmentSettings(
        alpha_fms=full.alpha_fms,
        p_fms=full.p_fms if "FMS" in name else 0.0,
        p_dir=full.p_dir if name.startswith("DIR") else 0.0,
    )
