from .core import BlendshapeRig, DeformConstraint, LandmarkSet, TriMesh
from .ops import (
    DeformationTransferSolver,
    cotangent_laplacian,
    deform_energy,
    deformation_transfer,
    face_normals,
    landmark_angle_vector,
    laplacian_deform,
    vertex_normals,
)
from .synth import (
    DEFAULT_RESOLUTION,
    EXPRESSION_DIM,
    IDENTITY_DIM,
    FaceFamily,
    get_family,
    synthesize_face,
)

__all__ = [
    "BlendshapeRig", "DeformConstraint", "LandmarkSet", "TriMesh",
    "DeformationTransferSolver", "cotangent_laplacian", "deform_energy",
    "deformation_transfer", "face_normals", "landmark_angle_vector",
    "laplacian_deform", "vertex_normals",
    "DEFAULT_RESOLUTION", "EXPRESSION_DIM", "IDENTITY_DIM",
    "FaceFamily", "get_family", "synthesize_face",
]
