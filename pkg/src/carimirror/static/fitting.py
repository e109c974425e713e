"""Coarse parametric fit to multi-view neutral captures.

Alternating minimization of a three-term energy (landmark alignment, photo
consistency under second-order SH shading, coefficient regularization) over
shape coefficients, per-view poses, shared lighting and per-vertex albedo.
Every block update is accepted only if the total energy does not increase,
so the outer iteration is monotone by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import CameraModel, quat_from_rotvec, quat_mul, quat_normalize, quat_to_matrix
from ..errors import ConvergenceError, MeshError
from ..lighting import AlbedoMap, SHLighting, sh_basis
from ..mesh import FaceFamily, TriMesh, vertex_normals
from ..raster import rasterize_view, sample_bilinear, vertex_visibility


@dataclass
class MultiViewCapture:
    """N same-convention images with per-image 2D landmarks."""

    images: list          # (H, W, 3) linear RGB in [0, 1]
    landmarks: list       # (L, 2) pixel positions per image

    def __post_init__(self):
        self.images = [np.asarray(im, dtype=np.float64) for im in self.images]
        self.landmarks = [np.asarray(lm, dtype=np.float64) for lm in self.landmarks]
        if len(self.images) != len(self.landmarks):
            raise MeshError("capture image/landmark counts disagree")
        counts = {lm.shape[0] for lm in self.landmarks}
        if len(counts) > 1:
            raise MeshError(f"landmark count mismatch across views: {sorted(counts)}")

    @property
    def n_views(self) -> int:
        return len(self.images)

    @property
    def image_size(self):
        h, w = self.images[0].shape[:2]
        return w, h


@dataclass
class FitConfig:
    outer_iters: int = 8
    photo_weight: float = 0.5
    reg_identity: float = 2.0
    reg_expression: float = 20.0
    gray_weights: tuple = (0.299, 0.587, 0.114)


@dataclass
class FitResult:
    coeffs: np.ndarray
    cameras: list
    lighting: SHLighting
    albedo: AlbedoMap
    coarse: TriMesh
    energies: list


class ParametricFitter:
    def __init__(self, family: FaceFamily, intrinsics, config: FitConfig = None):
        self.family = family
        self.cfg = config or FitConfig()
        self.fx, self.fy, self.cx, self.cy = intrinsics
        lm = family.default_landmarks()
        self.lm_vertex = np.asarray(lm.indices, dtype=np.int64)
        tmpl = family.template
        basis = np.hstack([family.identity_basis, family.expression_basis])
        self.n_coeff = basis.shape[1]
        self.basis = basis.reshape(-1, 3, self.n_coeff)       # (V, 3, n)
        self.template = tmpl
        reg = np.concatenate([
            np.full(10, self.cfg.reg_identity), np.full(self.n_coeff - 10, self.cfg.reg_expression)])
        self.reg = reg

    # --- model evaluation -------------------------------------------------

    def mesh_at(self, coeffs) -> TriMesh:
        v = self.template.vertices + np.einsum("vcn,n->vc", self.basis, coeffs)
        return self.template.with_vertices(v)

    def _gray(self, img):
        return img @ np.asarray(self.cfg.gray_weights)

    def _project(self, cam: CameraModel, pts):
        pc = pts @ cam.R.T + cam.t
        z = np.maximum(pc[:, 2], 1e-9)
        return np.column_stack([self.fx * pc[:, 0] / z + self.cx,
                                self.fy * pc[:, 1] / z + self.cy]), pc

    # --- energy -----------------------------------------------------------

    def total_energy(self, coeffs, cams, gamma, rho, capture, vis=None) -> float:
        mesh = self.mesh_at(coeffs)
        e = 0.0
        normals = vertex_normals(mesh)
        shade = sh_basis(normals) @ gamma
        w, h = capture.image_size
        for j, cam in enumerate(cams):
            uv, _ = self._project(cam, mesh.vertices[self.lm_vertex])
            d = uv - capture.landmarks[j]
            e += float((d * d).sum())
            vis_j = vis[j] if vis is not None else vertex_visibility(mesh, cam, w, h)
            uv_all, pc = self._project(cam, mesh.vertices)
            inb = vis_j & (pc[:, 2] > 0)
            gray = self._gray(capture.images[j])
            samp, ok = sample_bilinear(gray, uv_all[inb, 0], uv_all[inb, 1])
            r = samp[ok] - (rho[inb][ok] * shade[inb][ok])
            e += self.cfg.photo_weight * float(r @ r)
        e += float((self.reg * coeffs) @ coeffs)
        return e

    # --- block updates ------------------------------------------------------

    def _init_pose(self, capture, view_idx) -> CameraModel:
        """Coarse pose by yaw grid search + short landmark GN."""
        lm_obs = capture.landmarks[view_idx]
        best = None
        for yaw in np.radians([-45, -30, -15, 0, 15, 30, 45]):
            q0 = quat_normalize(quat_mul(quat_from_rotvec([0, yaw, 0]),
                                         quat_from_rotvec([np.pi, 0, 0])))
            cam = CameraModel(self.fx, self.fy, self.cx, self.cy, q0, [0, 0, 4.5])
            cam = self._pose_gn(cam, lm_obs, np.zeros(self.n_coeff), iters=15)
            uv, _ = self._project(cam, self.template.vertices[self.lm_vertex])
            err = float(((uv - lm_obs) ** 2).sum())
            if best is None or err < best[0]:
                best = (err, cam)
        return best[1]

    def _pose_gn(self, cam, lm_obs, coeffs, iters=10):
        mesh = self.mesh_at(coeffs)
        p = mesh.vertices[self.lm_vertex]
        q, t = cam.q, np.array(cam.t)

        def resid(qq, tt):
            R = quat_to_matrix(qq)
            pc = p @ R.T + tt
            z = np.maximum(pc[:, 2], 1e-9)
            uv = np.column_stack([self.fx * pc[:, 0] / z + self.cx,
                                  self.fy * pc[:, 1] / z + self.cy])
            return (uv - lm_obs).reshape(-1), pc

        r, pc = resid(q, t)
        energy = r @ r
        for _ in range(iters):
            R = quat_to_matrix(q)
            z = pc[:, 2]
            Jp = np.zeros((len(p), 2, 3))
            Jp[:, 0, 0] = self.fx / z
            Jp[:, 0, 2] = -self.fx * pc[:, 0] / z ** 2
            Jp[:, 1, 1] = self.fy / z
            Jp[:, 1, 2] = -self.fy * pc[:, 1] / z ** 2
            Rp = p @ R.T
            neg_sk = np.zeros((len(p), 3, 3))  # -skew(Rp)
            neg_sk[:, 0, 1] = Rp[:, 2]
            neg_sk[:, 0, 2] = -Rp[:, 1]
            neg_sk[:, 1, 0] = -Rp[:, 2]
            neg_sk[:, 1, 2] = Rp[:, 0]
            neg_sk[:, 2, 0] = Rp[:, 1]
            neg_sk[:, 2, 1] = -Rp[:, 0]
            Jrot = np.einsum("lij,ljk->lik", Jp, neg_sk)
            J = np.concatenate([Jrot, Jp], axis=2).reshape(-1, 6)
            try:
                delta = np.linalg.solve(J.T @ J + 1e-9 * np.eye(6), -(J.T @ r))
            except np.linalg.LinAlgError:
                break
            step = 1.0
            accepted = False
            for _ in range(6):
                q_new = quat_normalize(quat_mul(quat_from_rotvec(step * delta[:3]), q))
                t_new = t + step * delta[3:]
                r_new, pc_new = resid(q_new, t_new)
                if r_new @ r_new <= energy:
                    q, t, r, pc, energy = q_new, t_new, r_new, pc_new, r_new @ r_new
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
        return CameraModel(self.fx, self.fy, self.cx, self.cy, q, t)

    def _coeff_step(self, coeffs, cams, capture):
        """Gauss-Newton direction on landmark + regularization terms."""
        rows = []
        Js = []
        B_lm = self.basis[self.lm_vertex]          # (L, 3, n)
        mesh = self.mesh_at(coeffs)
        p = mesh.vertices[self.lm_vertex]
        for j, cam in enumerate(cams):
            R = cam.R
            pc = p @ R.T + cam.t
            z = np.maximum(pc[:, 2], 1e-9)
            uv = np.column_stack([self.fx * pc[:, 0] / z + self.cx,
                                  self.fy * pc[:, 1] / z + self.cy])
            rows.append((uv - capture.landmarks[j]).reshape(-1))
            Jp = np.zeros((len(p), 2, 3))
            Jp[:, 0, 0] = self.fx / z
            Jp[:, 0, 2] = -self.fx * pc[:, 0] / z ** 2
            Jp[:, 1, 1] = self.fy / z
            Jp[:, 1, 2] = -self.fy * pc[:, 1] / z ** 2
            J = np.einsum("lij,jk,lkn->lin", Jp, R, B_lm).reshape(-1, self.n_coeff)
            Js.append(J)
        r = np.concatenate(rows)
        J = np.vstack(Js)
        H = J.T @ J + np.diag(self.reg)
        g = J.T @ r + self.reg * coeffs
        return np.linalg.solve(H, -g)

    def _lighting_update(self, coeffs, cams, rho, capture, vis):
        mesh = self.mesh_at(coeffs)
        normals = vertex_normals(mesh)
        phi = sh_basis(normals)
        w, h = capture.image_size
        A_rows, b_rows = [], []
        for j, cam in enumerate(cams):
            uv, pc = self._project(cam, mesh.vertices)
            inb = vis[j] & (pc[:, 2] > 0)
            gray = self._gray(capture.images[j])
            samp, ok = sample_bilinear(gray, uv[inb, 0], uv[inb, 1])
            sel = np.nonzero(inb)[0][ok]
            A_rows.append(rho[sel, None] * phi[sel])
            b_rows.append(samp[ok])
        A = np.vstack(A_rows)
        b = np.concatenate(b_rows)
        return np.linalg.solve(A.T @ A + 1e-9 * np.eye(9), A.T @ b)

    def _albedo_update(self, coeffs, cams, gamma, capture, vis):
        mesh = self.mesh_at(coeffs)
        shade = sh_basis(vertex_normals(mesh)) @ gamma
        num = np.zeros(mesh.n_vertices)
        den = np.zeros(mesh.n_vertices)
        for j, cam in enumerate(cams):
            uv, pc = self._project(cam, mesh.vertices)
            inb = vis[j] & (pc[:, 2] > 0)
            gray = self._gray(capture.images[j])
            samp, ok = sample_bilinear(gray, uv[inb, 0], uv[inb, 1])
            sel = np.nonzero(inb)[0][ok]
            num[sel] += samp[ok] * shade[sel]
            den[sel] += shade[sel] ** 2
        rho = np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.6)
        return np.clip(rho, 0.0, 1.0)

    # --- driver -------------------------------------------------------------

    def fit(self, capture: MultiViewCapture) -> FitResult:
        if capture.n_views < 1:
            raise MeshError("fit needs at least one view")
        L = len(self.lm_vertex)
        for lm in capture.landmarks:
            if lm.shape[0] != L:
                raise MeshError(f"expected {L} landmarks per view, got {lm.shape[0]}")
        w, h = capture.image_size
        coeffs = np.zeros(self.n_coeff)
        cams = [self._init_pose(capture, j) for j in range(capture.n_views)]
        gamma = np.zeros(9)
        gamma[0] = 0.8 / 0.2820948
        rho = np.full(self.template.n_vertices, 0.6)

        def visibilities(cfs, cms):
            mesh = self.mesh_at(cfs)
            return [vertex_visibility(mesh, cam, w, h) for cam in cms]

        vis = visibilities(coeffs, cams)
        energy = self.total_energy(coeffs, cams, gamma, rho, capture, vis)
        energies = [energy]
        rises = 0
        for _ in range(self.cfg.outer_iters):
            # per-view pose refinement, accepted against the total energy
            for j in range(capture.n_views):
                cam_new = self._pose_gn(cams[j], capture.landmarks[j], coeffs)
                trial = list(cams)
                trial[j] = cam_new
                e_new = self.total_energy(coeffs, trial, gamma, rho, capture)
                if e_new <= energy + 1e-12:
                    cams, energy = trial, e_new
            # coefficient step with halving
            delta = self._coeff_step(coeffs, cams, capture)
            step = 1.0
            for _ in range(8):
                trial_c = coeffs + step * delta
                e_new = self.total_energy(trial_c, cams, gamma, rho, capture)
                if e_new <= energy + 1e-12:
                    coeffs, energy = trial_c, e_new
                    break
                step *= 0.5
            vis = visibilities(coeffs, cams)
            # lighting then albedo: exact minimizers of the photo term
            gamma_new = self._lighting_update(coeffs, cams, rho, capture, vis)
            e_new = self.total_energy(coeffs, cams, gamma_new, rho, capture, vis)
            if e_new <= energy + 1e-12:
                gamma, energy = gamma_new, e_new
            rho_new = self._albedo_update(coeffs, cams, gamma, capture, vis)
            e_new = self.total_energy(coeffs, cams, gamma, rho_new, capture, vis)
            if e_new <= energy + 1e-12:
                rho, energy = rho_new, e_new
            if energy > energies[-1] + 1e-6:
                rises += 1
                if rises >= 3:
                    raise ConvergenceError(
                        f"fit diverging: energy rose 3 consecutive iterations, last {energy}")
            else:
                rises = 0
            energies.append(energy)

        coarse = self.mesh_at(coeffs)
        albedo = AlbedoMap(rho)
        return FitResult(coeffs, cams, SHLighting(gamma), albedo, coarse, energies)


def fit_parametric_model(capture: MultiViewCapture, family: FaceFamily, intrinsics,
                         config: FitConfig = None) -> FitResult:
    return ParametricFitter(family, intrinsics, config).fit(capture)
