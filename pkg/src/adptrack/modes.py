"""Operating modes of the learning engine."""

import enum


class Mode(str, enum.Enum):
    """STA* run the tracker alone, OTA* add the optimizer; *1 use the direct
    Bellman update, *2 the modified (difference) form."""

    STA1 = "STA1"
    STA2 = "STA2"
    OTA1 = "OTA1"
    OTA2 = "OTA2"
    PI_BASELINE = "PI_BASELINE"

    @property
    def algorithm(self) -> int:
        return 1 if self.value.endswith("1") else 2

    @property
    def optimizer_active(self) -> bool:
        return self.value.startswith("OTA") or self is Mode.PI_BASELINE

    def __str__(self):
        return self.value
