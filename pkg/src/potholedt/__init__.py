"""Road disparity transformation, pothole segmentation, attention modules and
adaptation-loss evaluators."""

from ._accel import BACKEND
from .disparity import DisparityImage, VDisparityHistogram, load_disparity, v_disparity
from .transform import (FitInput, PhiSolution, RoadModel, SolverConfig, energy,
                        estimate_phi, fit_and_transform, fit_input_from_image,
                        phi_closed_form, solve_scale_offset, transform)
from .detect import connected_components, otsu_threshold, segment
from .metrics import confusion, delta_ratio, fsc_iou, mean_metrics

__version__ = "0.1.0"
