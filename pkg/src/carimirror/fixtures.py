"""Synthetic capture/sequence builders: the desk-scale stand-ins for real
multi-view photos, stylized caricature views and monocular video."""
from __future__ import annotations

import numpy as np

from .camera import CameraModel, look_at, quat_from_rotvec, quat_mul, quat_normalize
from .lighting import SHLighting
from .mesh import FaceFamily, TriMesh, vertex_normals
from .raster import chart_surface_samples, rasterize_chart, render
from .static.fitting import MultiViewCapture
from .texture.samples import ViewSample

DEFAULT_LIGHTING = SHLighting([2.9, 0.12, 0.18, 0.25, 0.03, 0.02, 0.06, 0.04, 0.02])
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def vertex_albedo_rgb(mesh: TriMesh) -> np.ndarray:
    """Per-vertex RGB albedo with independent multi-band structure per channel.

    Channels carry different spatial patterns so multi-view color matching
    constrains both image directions (no rank-1 aperture sliding), the way
    real skin texture does.
    """
    v = mesh.vertices
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    zc = z - z.mean()
    r = 0.58 + 0.16 * np.sin(3.0 * x) * np.cos(2.0 * y) + 0.10 * np.sin(9.0 * x + 1.0) \
        + 0.06 * np.sin(15.0 * y - 0.7) + 0.10 * zc
    g = 0.52 + 0.16 * np.cos(2.5 * x - 0.4) * np.sin(3.5 * y) + 0.10 * np.cos(8.0 * y + 0.3) \
        + 0.06 * np.sin(13.0 * (x + y)) + 0.08 * zc
    b = 0.47 + 0.14 * np.sin(2.0 * x + 1.1) * np.sin(2.8 * y + 0.6) \
        + 0.09 * np.cos(11.0 * x - 2.0) + 0.06 * np.cos(14.0 * (x - y)) + 0.06 * zc
    return np.clip(np.column_stack([r, g, b]), 0.05, 0.95)


def vertex_albedo(mesh: TriMesh) -> np.ndarray:
    """Gray projection of the RGB fixture albedo, in [0.05, 0.95]."""
    return np.clip(vertex_albedo_rgb(mesh) @ GRAY_WEIGHTS, 0.05, 0.95)


def static_camera_ring(n_views=5, size=256, focal=300.0, radius=4.5, max_yaw_deg=40.0):
    """Cameras on a horizontal arc looking at the face center."""
    cams = []
    for yaw in np.radians(np.linspace(-max_yaw_deg, max_yaw_deg, n_views)):
        center = np.array([radius * np.sin(yaw), 0.15, radius * np.cos(yaw)])
        cams.append(look_at(center, [0, 0, 0.2], [0, 1, 0], focal, focal, size / 2, size / 2))
    return cams


def render_capture(family: FaceFamily, identity_params, cameras, size=256,
                   lighting: SHLighting = DEFAULT_LIGHTING, noise=0.0, seed=0):
    """Multi-view neutral capture of a synthetic identity, with ground truth."""
    mesh = family.synthesize(identity_params, np.zeros(8))
    albedo = vertex_albedo(mesh)
    albedo_rgb = vertex_albedo_rgb(mesh)
    lm_idx = np.asarray(family.default_landmarks().indices)
    rng = np.random.default_rng(seed)
    images, landmarks = [], []
    for cam in cameras:
        img, _ = render(mesh, cam, size, size, vertex_values=albedo_rgb, lighting=lighting,
                        background=0.02)
        if noise > 0:
            img = np.clip(img + rng.normal(0, noise, img.shape), 0.0, 1.0)
        images.append(img)
        landmarks.append(cam.project(mesh.vertices[lm_idx]))
    capture = MultiViewCapture(images, landmarks)
    truth = {"mesh": mesh, "albedo": albedo, "lighting": lighting}
    return capture, truth


def _stylize(colors, view_index):
    """Stand-in for externally stylized caricature views: posterized colors
    with a deliberate per-view tint so views disagree and seams matter."""
    tints = np.array([
        [1.00, 0.86, 0.78], [0.92, 1.00, 0.84], [0.85, 0.92, 1.00],
        [1.00, 0.95, 0.70], [0.95, 0.80, 1.00],
    ])
    tint = tints[view_index % len(tints)]
    q = np.round(colors * 6.0) / 6.0
    out = np.clip(0.15 + 0.85 * q * tint[None, :], 0.0, 1.0)
    return out


def stylized_view_samples(mesh: TriMesh, cameras, atlas_size=96, lighting=DEFAULT_LIGHTING):
    """Per-view chart resampling of stylized renders: the texture fuser's input.

    Returns (views, face_mask). Validity = texel's surface point visible in
    the view and front-facing.
    """
    maps = rasterize_chart(mesh, atlas_size)
    positions, normals, covered = chart_surface_samples(mesh, maps)
    albedo_rgb = vertex_albedo_rgb(mesh)
    views = []
    pos_flat = positions[covered]
    nrm_flat = normals[covered]
    for vi, cam in enumerate(cameras):
        size = int(2 * cam.cx)
        img, vmaps = render(mesh, cam, size, size, vertex_values=albedo_rgb, lighting=lighting,
                            background=0.0)
        img = _stylize(img.reshape(-1, 3), vi).reshape(img.shape)
        colors = np.zeros((atlas_size, atlas_size, 3))
        valid = np.zeros((atlas_size, atlas_size), dtype=bool)
        nrm_map = np.tile(np.array([0.0, 0.0, 1.0]), (atlas_size, atlas_size, 1))
        uv, depth = cam.project(pos_flat, return_depth=True)
        inb = (depth > 0) & (uv[:, 0] >= 0) & (uv[:, 0] <= size - 1) & \
              (uv[:, 1] >= 0) & (uv[:, 1] <= size - 1)
        # occlusion: compare against the view's depth buffer
        cols = np.clip(np.round(uv[:, 0]).astype(int), 0, size - 1)
        rows = np.clip(np.round(uv[:, 1]).astype(int), 0, size - 1)
        zbuf = vmaps.depth[rows, cols]
        visible = inb & (depth <= zbuf * 1.003 + 1e-9)
        ray = pos_flat - cam.center
        ray /= np.maximum(np.linalg.norm(ray, axis=1), 1e-12)[:, None]
        facing = np.einsum("ij,ij->i", nrm_flat, ray) < -0.15
        ok = visible & facing
        from .raster import sample_bilinear
        samp, _ = sample_bilinear(img, uv[ok, 0], uv[ok, 1])
        cov_idx = np.argwhere(covered)
        sel = cov_idx[ok]
        colors[sel[:, 0], sel[:, 1]] = samp
        valid[sel[:, 0], sel[:, 1]] = True
        nrm_map[covered] = nrm_flat
        views.append(ViewSample(colors, nrm_map, valid, cam.optical_axis_world()))
    return views, covered


def video_sequence(family: FaceFamily, rig, cam_intrinsics, n_frames=30, size=256,
                   seed=0, amplitude=1.0):
    """Monocular frame sequence with exact landmarks and ground-truth states.

    The face pose composes a pi-about-x base (template faces +z) with smooth
    yaw/pitch wobble; weights activate disjoint single shapes, which keeps
    the ground truth L1-minimal under the rig's composite shapes.
    """
    fx, fy, cx, cy = cam_intrinsics
    cam = CameraModel(fx, fy, cx, cy, np.array([1.0, 0, 0, 0]), np.zeros(3))
    lm_idx = np.asarray(family.default_landmarks().indices)
    q_base = quat_from_rotvec([np.pi, 0.0, 0.0])
    ks = np.arange(n_frames)

    def bump(center, width, amp):
        return amp * np.exp(-((ks - center) / width) ** 2)

    n = rig.n_expressions
    ws = np.zeros((n_frames, n))
    ws[:, 0] = bump(n_frames * 0.18, n_frames * 0.1, 0.5 * amplitude)
    ws[:, 9 % n] = bump(n_frames * 0.5, n_frames * 0.1, 0.45 * amplitude)
    ws[:, 36 % n] = bump(n_frames * 0.82, n_frames * 0.1, 0.4 * amplitude)
    yaw = np.radians(10.0) * np.sin(2 * np.pi * ks / n_frames)
    pitch = np.radians(4.0) * np.sin(2 * np.pi * ks / n_frames + 0.7)
    qs = [quat_normalize(quat_mul(quat_from_rotvec([p, y, 0.0]), q_base))
          for p, y in zip(pitch, yaw)]
    ts = np.stack([0.04 * np.sin(2 * np.pi * ks / n_frames),
                   0.03 * np.cos(2 * np.pi * ks / n_frames),
                   4.5 + 0.05 * np.sin(2 * np.pi * ks / n_frames + 0.3)], axis=1)

    albedo = vertex_albedo(rig.neutral)
    frames = []
    from .camera import quat_to_matrix
    for k in range(n_frames):
        mesh = rig.evaluate(ws[k])
        R = quat_to_matrix(qs[k])
        posed = mesh.with_vertices(mesh.vertices @ R.T + ts[k])
        img, _ = render(posed, cam, size, size, vertex_values=albedo, background=0.05)
        img = np.clip(img + 0.02 * np.sin(0.9 * k), 0.0, 1.0)  # per-frame bias
        p = lm_idx
        pos = mesh.vertices[p] @ R.T + ts[k]
        uv = np.column_stack([fx * pos[:, 0] / pos[:, 2] + cx,
                              fy * pos[:, 1] / pos[:, 2] + cy])
        frames.append({"image": img, "landmarks": uv, "index": k})
    truth = {"weights": ws, "quaternions": qs, "translations": ts, "q_base": q_base}
    return frames, truth
