"""derender3d: fit object-wise 3D scene representations to silhouettes and
re-render edited scenes."""

from .ffd import FFDLattice, ffd_apply
from .geometry import (
    Camera,
    ObjectState,
    Quaternion,
    ReparamCode,
    YawAngle,
    pose_mesh,
    project_points,
    reparam_decode,
    reparam_encode,
    rotate_point,
    translation_vector,
    yaw_to_quaternion,
)
from .meshes import Mesh, MeshLibrary, load_mesh_library, load_obj, save_obj
from .raster import (
    RenderLayers,
    SilhouetteImage,
    SoftRasterConfig,
    binarize,
    render_hard,
    render_silhouette_soft,
    silhouette_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "FFDLattice",
    "Mesh",
    "MeshLibrary",
    "ObjectState",
    "Quaternion",
    "RenderLayers",
    "ReparamCode",
    "SilhouetteImage",
    "SoftRasterConfig",
    "YawAngle",
    "binarize",
    "ffd_apply",
    "load_mesh_library",
    "load_obj",
    "pose_mesh",
    "project_points",
    "render_hard",
    "render_silhouette_soft",
    "reparam_decode",
    "reparam_encode",
    "rotate_point",
    "save_obj",
    "silhouette_gradient",
    "translation_vector",
    "yaw_to_quaternion",
]
