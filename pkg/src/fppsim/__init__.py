"""Virtual fringe projection profilometry: rendering, reconstruction and depth benchmarking."""

__version__ = "0.1.0"

from .errors import (BehindModelError, ConfigurationError, FormatError, FPPError, InvalidArgument,
                     InvalidState)
from .geometry import (PinholeModel, Plane, Ray, RigidTransform, load_pinhole_json, look_at,
                       project_point, project_points, rotation_z, standard_rig, unproject)
from .scene import (Box, Cylinder, InfinitePlane, Material, Primitive, Scene, Sphere, TriangleMesh,
                    load_mesh, scene_from_json)
from .patterns import PatternId, PatternSchedule, schedule_patterns
from .render import FringeSequence, RenderConfig, read_sequence, render_sequence, write_sequence
from .reconstruct import demodulate, decode_gray, reconstruct, reconstruct_pipeline, triangulate, unwrap
from .depthio import (DepthMap, Normalization, denormalize, normalize_global, normalize_individual,
                      read_depth, to_viz_u16, write_depth)
from .metrics import MetricsReport, aggregate, evaluate_pair
from .losses import LossSpec, alpha_sweep, loss
from .dataset import (SplitPolicy, baseline_predict, build_dataset, mask_background, split_objects,
                      viewpoint_poses)
