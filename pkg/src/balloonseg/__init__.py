"""Semi-automatic 3D tumor segmentation by balloon inflation of a surface mesh."""

from .volume import (
    Volume3D,
    Mask3D,
    VolumeFormatError,
    load_volume,
    save_volume,
    load_mask,
    save_mask,
    sample_trilinear,
    extract_slice,
)
from .mesh import (
    SurfaceMesh,
    make_icosphere,
    vertex_normals,
    mean_curvature,
    split_long_edges,
    laplacian_smooth,
    mesh_volume,
    avg_center_distance,
    export_mesh,
    load_obj,
    validate_mesh,
    star_shape_score,
)
from .initialization import (
    ContourInit,
    InitParams,
    contour_centroid,
    contour_avg_radius,
    contour_intensity_range,
    process_contour,
)
from .phantom import PhantomSpec, generate_phantom, contour_from_mask
from .inflation import (
    InflationConfig,
    InflationTrace,
    IterationRecord,
    SegmentationResult,
    VertexKinematics,
    speed_factor,
    can_move,
    inflate_once,
    is_stalled,
    segment,
)
from .metrics import (
    EvalReport,
    voxelize,
    dice,
    volume_from_mask,
    sphere_model_volume,
    ellipsoid_model_volume,
)

__version__ = "0.1.0"
