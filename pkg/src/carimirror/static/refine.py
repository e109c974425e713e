"""Neutral-shape refinement against the adjusted point cloud and blendshape
construction by deformation transfer from the template rig."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..mesh import (
    BlendshapeRig,
    DeformConstraint,
    DeformationTransferSolver,
    TriMesh,
    laplacian_deform,
)


def refine_neutral(coarse: TriMesh, cloud, weight=1.0, rounds=3,
                   point_indices=None) -> TriMesh:
    """ICP-style rounds of nearest-point Laplacian fits.

    ``point_indices``: optional vertex ids the cloud rows correspond to; when
    given, each such vertex is pulled to its own point directly.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.size == 0:
        raise ValueError("refine_neutral needs a nonempty point cloud")
    if weight == 0.0:
        return coarse
    mesh = coarse
    if point_indices is not None:
        constraints = [DeformConstraint(int(vi), cloud[k], weight)
                       for k, vi in enumerate(point_indices)]
        return laplacian_deform(mesh, constraints)
    tree = cKDTree(cloud)
    for _ in range(rounds):
        _, nearest = tree.query(mesh.vertices)
        constraints = [DeformConstraint(i, cloud[nearest[i]], weight)
                       for i in range(mesh.n_vertices)]
        mesh = laplacian_deform(mesh, constraints)
    return mesh


def build_blendshapes(b0: TriMesh, template_rig: BlendshapeRig) -> BlendshapeRig:
    """User rig: shape k transfers the template's (neutral -> b_k) deformation
    onto the user's neutral. One factorization serves all 46 transfers."""
    b0.require_same_topology(template_rig.neutral, "user neutral")
    solver = DeformationTransferSolver(b0)
    shapes = [b0]
    for k in range(1, len(template_rig.shapes)):
        shapes.append(solver.transfer(template_rig.neutral, template_rig.shapes[k]))
    return BlendshapeRig(shapes)
