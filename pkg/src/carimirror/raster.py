"""Minimal software rasterizer: z-buffered coverage, visibility, chart baking.

Used for fixture rendering, depth-buffer visibility inside the static stage,
texel-to-surface sampling for texture fusion, and offline previews. Pixel
centers sit at integer coordinates; images are indexed [row, col].
"""
from __future__ import annotations

import numpy as np

from .camera import CameraModel
from .mesh import TriMesh, vertex_normals

_EPS_AREA = 1e-12


def sample_bilinear(image, u, v, return_grad=False):
    """Bilinear sample (and optional d/du, d/dv) with border clamping.

    ``image`` is (H, W) or (H, W, C). Samples outside the frame are clamped
    to the border; the caller can detect that via ``in_bounds``.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    in_bounds = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.clip(np.floor(uc).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(uc, np.int64)
    y0 = np.clip(np.floor(vc).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(vc, np.int64)
    fx = uc - x0
    fy = vc - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    i00 = img[y0, x0]
    i10 = img[y0, x0 + 1] if w > 1 else i00
    i01 = img[y0 + 1, x0] if h > 1 else i00
    i11 = img[y0 + 1, x0 + 1] if (w > 1 and h > 1) else i00
    top = i00 * (1 - fx) + i10 * fx
    bot = i01 * (1 - fx) + i11 * fx
    val = top * (1 - fy) + bot * fy
    if not return_grad:
        return val, in_bounds
    du = (i10 - i00) * (1 - fy) + (i11 - i01) * fy
    dv = bot - top
    return val, du, dv, in_bounds


class RasterMaps:
    """Per-pixel coverage: face index (-1 empty), barycentric weights, depth."""

    __slots__ = ("face", "bary", "depth")

    def __init__(self, face, bary, depth):
        self.face = face
        self.bary = bary
        self.depth = depth


def rasterize(points2d, depth, faces, width, height) -> RasterMaps:
    """Z-buffer rasterization of projected triangles.

    points2d: (V, 2) pixel coordinates; depth: (V,) positive camera depths.
    Faces with any vertex behind the camera are skipped.
    """
    face_map = np.full((height, width), -1, dtype=np.int32)
    bary_map = np.zeros((height, width, 3))
    zbuf = np.full((height, width), np.inf)
    p = np.asarray(points2d)
    z = np.asarray(depth)
    for fi, (a, b, c) in enumerate(faces):
        if z[a] <= 0 or z[b] <= 0 or z[c] <= 0:
            continue
        pa, pb, pc = p[a], p[b], p[c]
        den = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
        if abs(den) < _EPS_AREA:
            continue
        x0 = max(int(np.floor(min(pa[0], pb[0], pc[0]))), 0)
        x1 = min(int(np.ceil(max(pa[0], pb[0], pc[0]))), width - 1)
        y0 = max(int(np.floor(min(pa[1], pb[1], pc[1]))), 0)
        y1 = min(int(np.ceil(max(pa[1], pb[1], pc[1]))), height - 1)
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        gx, gy = np.meshgrid(xs, ys)
        l1 = ((gx - pa[0]) * (pc[1] - pa[1]) - (gy - pa[1]) * (pc[0] - pa[0])) / den
        l2 = ((pb[0] - pa[0]) * (gy - pa[1]) - (pb[1] - pa[1]) * (gx - pa[0])) / den
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        zpix = l0 * z[a] + l1 * z[b] + l2 * z[c]
        sub = zbuf[y0:y1 + 1, x0:x1 + 1]
        win = inside & (zpix < sub)
        if not win.any():
            continue
        sub[win] = zpix[win]
        face_map[y0:y1 + 1, x0:x1 + 1][win] = fi
        bl = bary_map[y0:y1 + 1, x0:x1 + 1]
        bl[win] = np.stack([l0[win], l1[win], l2[win]], axis=-1)
    return RasterMaps(face_map, bary_map, zbuf)


def rasterize_view(mesh: TriMesh, camera: CameraModel, width, height) -> RasterMaps:
    uv, z = camera.project(mesh.vertices, return_depth=True)
    return rasterize(uv, z, mesh.faces, width, height)


def vertex_visibility(mesh: TriMesh, camera: CameraModel, width, height,
                      maps: RasterMaps = None, depth_tol=1e-3) -> np.ndarray:
    """Depth-buffer visibility per vertex at image resolution."""
    if maps is None:
        maps = rasterize_view(mesh, camera, width, height)
    uv, z = camera.project(mesh.vertices, return_depth=True)
    vis = np.zeros(mesh.n_vertices, dtype=bool)
    inb = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] <= width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= height - 1)
    idx = np.nonzero(inb)[0]
    cols = np.clip(np.round(uv[idx, 0]).astype(int), 0, width - 1)
    rows = np.clip(np.round(uv[idx, 1]).astype(int), 0, height - 1)
    zb = maps.depth[rows, cols]
    vis[idx] = z[idx] <= zb * (1.0 + depth_tol) + 1e-9
    return vis


def render(mesh: TriMesh, camera: CameraModel, width, height,
           vertex_values=None, texture=None, lighting=None, background=0.0):
    """Render vertex values (gray or RGB) or a UV texture, optionally SH-lit.

    Returns (image, maps); image is (H, W) if values are scalar, else (H, W, 3).
    """
    maps = rasterize_view(mesh, camera, width, height)
    covered = maps.face >= 0
    fidx = maps.face[covered]
    bary = maps.bary[covered]
    tri = mesh.faces[fidx]

    if texture is not None:
        if mesh.uv is None:
            raise ValueError("textured render needs a mesh UV chart")
        uvp = (bary[:, :, None] * mesh.uv[tri]).sum(axis=1)
        th, tw = texture.shape[:2]
        tu = uvp[:, 0] * (tw - 1)
        tv = (1.0 - uvp[:, 1]) * (th - 1)
        vals, _ = sample_bilinear(texture, tu, tv)
    else:
        vv = np.asarray(vertex_values, dtype=np.float64)
        vals = (bary[:, :, None] * vv[tri].reshape(len(tri), 3, -1)).sum(axis=1)
        if vv.ndim == 1:
            vals = vals[:, 0]

    if lighting is not None:
        normals = vertex_normals(mesh)
        npix = (bary[:, :, None] * normals[tri]).sum(axis=1)
        ln = np.linalg.norm(npix, axis=1)
        npix = npix / np.maximum(ln, 1e-12)[:, None]
        shade = lighting.shade(npix)
        vals = vals * shade if vals.ndim == 1 else vals * shade[:, None]

    shape = (height, width) if vals.ndim == 1 else (height, width, vals.shape[1])
    img = np.full(shape, background, dtype=np.float64)
    img[covered] = np.clip(vals, 0.0, 1.0)
    return img, maps


def rasterize_chart(mesh: TriMesh, size) -> RasterMaps:
    """Rasterize the UV chart over a size x size texel grid.

    Texel (row j, col i) samples chart point ((i + .5)/size, 1 - (j + .5)/size),
    so row 0 is the top of the chart, matching image conventions.
    """
    if mesh.uv is None:
        raise ValueError("mesh has no UV chart")
    pts = np.empty_like(mesh.uv)
    pts[:, 0] = mesh.uv[:, 0] * size - 0.5
    pts[:, 1] = (1.0 - mesh.uv[:, 1]) * size - 0.5
    fake_depth = np.ones(mesh.n_vertices)
    return rasterize(pts, fake_depth, mesh.faces, size, size)


def chart_surface_samples(mesh: TriMesh, maps: RasterMaps):
    """Per-texel surface positions and unit normals from a chart raster."""
    covered = maps.face >= 0
    tri = mesh.faces[maps.face[covered]]
    bary = maps.bary[covered]
    pos = (bary[:, :, None] * mesh.vertices[tri]).sum(axis=1)
    vn = vertex_normals(mesh)
    nrm = (bary[:, :, None] * vn[tri]).sum(axis=1)
    nrm /= np.maximum(np.linalg.norm(nrm, axis=1), 1e-12)[:, None]
    h, w = maps.face.shape
    positions = np.full((h, w, 3), np.nan)
    normals = np.full((h, w, 3), np.nan)
    positions[covered] = pos
    normals[covered] = nrm
    return positions, normals, covered
