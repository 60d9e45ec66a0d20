"""Stereo disparity estimation by coalescing classical matchers.

Four block matchers (NCC, CENSUS, ZSAD, SOBEL-SAD) are evaluated per
matching hypothesis together with confidence measures taken along both
epipolar scan lines; a random forest fuses the resulting 20 features
into a single matching volume, which is then optimized (CBCA + SGM)
and post-processed into a dense disparity map.
"""

__version__ = "0.1.0"

from .volume import INVALID_DISP, CostVolume, shift_to_right_volume  # noqa: F401
from .config import PipelineConfig  # noqa: F401
