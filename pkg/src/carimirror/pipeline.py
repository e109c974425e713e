"""Pipeline commands behind the service endpoints.

Each command reads validated config + input paths, writes one run-artifact
directory (rig/, texture/, track/, caricature/, logs/, manifest.json) and
returns a manifest dictionary. Identical inputs and config produce
byte-identical artifacts; manifests carry config/input hashes, never
timestamps.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .camera import CameraModel, load_cameras_json, quat_to_matrix, save_cameras_json
from .config import PipelineConfig, config_hash, require_path
from .errors import ConfigError
from .fixtures import (
    render_capture,
    static_camera_ring,
    stylized_view_samples,
    video_sequence,
)
from .lighting import AlbedoMap, SHLighting
from .mesh import BlendshapeRig, FaceFamily, LandmarkSet, TriMesh, get_family
from .raster import chart_surface_samples, rasterize_chart, render
from .static import (
    build_blendshapes,
    bundle_adjust,
    fit_parametric_model,
    optimize_displacement,
    refine_neutral,
)
from .static.fitting import FitConfig, MultiViewCapture
from .texture import LabelMap, TextureAtlas, ViewSample, poisson_blend, solve_labeling
from .tracking import FlowModel, FrameObservation, LandmarkModel, TrackingWeights, initial_state, track_sequence
from .translate import StyleTranslator, load_weights, translate_sequence

ARTIFACT_DIRS = ("rig", "texture", "track", "caricature", "logs")


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()[:16]


def _hash_tree(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_file():
        return _hash_file(path)
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(path)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _save_png(path, array01):
    arr = np.clip(np.asarray(array01), 0.0, 1.0)
    if arr.ndim == 2:
        Image.fromarray((arr * 255).round().astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray((arr * 255).round().astype(np.uint8)).save(path)


def _load_png(path):
    return np.asarray(Image.open(path), dtype=np.float64) / 255.0


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True))


def save_point_cloud_ply(path, points):
    lines = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
             "property float x", "property float y", "property float z", "end_header"]
    for p in points:
        lines.append("%.9g %.9g %.9g" % (p[0], p[1], p[2]))
    Path(path).write_text("\n".join(lines) + "\n")


class RunArtifact:
    """Output directory layout plus the reproducibility manifest."""

    def __init__(self, out_dir, command, cfg: PipelineConfig):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        for d in ARTIFACT_DIRS:
            (self.root / d).mkdir(exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.inputs = {}
        self.outputs = []

    def record_input(self, name, path):
        self.inputs[name] = {"path": str(path), "hash": _hash_tree(Path(path))}

    def record_output(self, path):
        self.outputs.append(str(Path(path).relative_to(self.root)))

    def log(self, message):
        with open(self.root / "logs" / f"{self.command}.log", "a") as fh:
            fh.write(message + "\n")

    def finalize(self) -> dict:
        manifest = {
            "command": self.command,
            "schema_version": self.cfg.schema_version,
            "config_hash": config_hash(self.cfg),
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "versions": {
                "carimirror": __version__,
                "python": ".".join(str(v) for v in sys.version_info[:3]),
                "numpy": np.__version__,
            },
        }
        _write_json(self.root / "manifest.json", manifest)
        return manifest


def _family(cfg: PipelineConfig) -> FaceFamily:
    return get_family(tuple(cfg.synth.resolution))


# --- synth -----------------------------------------------------------------


def cmd_synth(cfg: PipelineConfig, out_dir) -> dict:
    art = RunArtifact(out_dir, "synth", cfg)
    family = _family(cfg)
    s = cfg.synth
    rng = np.random.default_rng(cfg.seed)
    root = art.root

    # template rig + landmarks
    rig = family.template_rig()
    rig.save_dir(root / "rig" / "template")
    family.default_landmarks().save_json(root / "rig" / "landmarks.json")
    art.record_output(root / "rig" / "landmarks.json")

    # neutral multi-view capture of a sampled identity
    ident = np.clip(rng.normal(0.0, 0.7, 10), -2, 2)
    cams = static_camera_ring(s.n_views, s.image_size, s.focal, max_yaw_deg=s.max_yaw_deg)
    capture, truth = render_capture(family, ident, cams, size=s.image_size)
    cap_dir = root / "capture"
    cap_dir.mkdir(exist_ok=True)
    for j in range(s.n_views):
        _save_png(cap_dir / f"view_{j:02d}.png", capture.images[j])
        _write_json(cap_dir / f"landmarks_{j:02d}.json",
                    {"points": [[float(x), float(y)] for x, y in capture.landmarks[j]]})
    _write_json(cap_dir / "capture.json", {
        "views": [{"image": f"view_{j:02d}.png", "landmarks": f"landmarks_{j:02d}.json"}
                  for j in range(s.n_views)],
        "intrinsics": "intrinsics.json",
    })
    save_cameras_json(cams, cap_dir / "cameras_gt.json")
    truth["lighting"].save_json(cap_dir / "lighting_gt.json")
    _write_json(cap_dir / "intrinsics.json",
                {"fx": s.focal, "fy": s.focal, "cx": s.image_size / 2, "cy": s.image_size / 2})
    _write_json(cap_dir / "identity_gt.json", {"identity_params": [float(v) for v in ident]})
    art.record_output(cap_dir / "intrinsics.json")

    # stylized views of the true neutral for the texture fuser
    sty_dir = root / "stylized"
    views, face_mask = stylized_view_samples(truth["mesh"], cams, atlas_size=s.atlas_size)
    for j, view in enumerate(views):
        view.save(sty_dir, f"view_{j:02d}")
    _save_png(sty_dir / "face_mask.png", face_mask.astype(float))
    truth["mesh"].save_obj(sty_dir / "neutral_gt.obj")
    art.record_output(sty_dir / "face_mask.png")

    # monocular frame sequence driven by the user's ground-truth rig
    user_rig = build_blendshapes(truth["mesh"], rig)
    frames, seq_truth = video_sequence(family, user_rig,
                                       (s.focal, s.focal, s.image_size / 2, s.image_size / 2),
                                       n_frames=s.n_frames, size=s.image_size, seed=cfg.seed)
    fr_dir = root / "frames"
    fr_dir.mkdir(exist_ok=True)
    for fr in frames:
        _save_png(fr_dir / f"frame_{fr['index']:03d}.png", fr["image"])
        _write_json(fr_dir / f"landmarks_{fr['index']:03d}.json",
                    {"points": [[float(x), float(y)] for x, y in fr["landmarks"]]})
    _write_json(fr_dir / "truth.json", {
        "weights": [[float(v) for v in w] for w in seq_truth["weights"]],
        "quaternions": [[float(v) for v in q] for q in seq_truth["quaternions"]],
        "translations": [[float(v) for v in t] for t in seq_truth["translations"]],
    })
    _write_json(fr_dir / "intrinsics.json",
                {"fx": s.focal, "fy": s.focal, "cx": s.image_size / 2, "cy": s.image_size / 2})
    art.record_output(fr_dir / "intrinsics.json")

    # two-style training corpora + manifest for the trainer
    corpus_dir = root / "corpus"
    manifest = {"schema_version": 1, "topology_id": family.topology_id,
                "resolution": list(family.resolution),
                "landmarks": "../rig/landmarks.json", "domains": {}}
    for domain, style in (("regular", "regular"), ("caricature", "exaggerated")):
        dom_dir = corpus_dir / domain
        dom_dir.mkdir(parents=True, exist_ok=True)
        entries = {"meshes": [], "identity": [], "expression": []}
        samples = family.sample_corpus(s.corpus_identities, s.corpus_expressions, style,
                                       seed=cfg.seed + (0 if domain == "regular" else 1))
        for k, (mesh, ident_label, expr_tag) in enumerate(samples):
            name = f"{domain}/mesh_{k:04d}.obj"
            mesh.save_obj(corpus_dir / name)
            entries["meshes"].append(name)
            entries["identity"].append(int(ident_label))
            entries["expression"].append(int(expr_tag))
        manifest["domains"][domain] = entries
    _write_json(corpus_dir / "manifest.json", manifest)
    art.record_output(corpus_dir / "manifest.json")
    art.log(f"synth: corpus {s.corpus_identities}x{s.corpus_expressions} per domain")
    return art.finalize()


# --- static ------------------------------------------------------------------


def load_capture(capture_dir: Path):
    """Read a capture via its manifest (capture.json) or by file convention."""
    manifest_path = capture_dir / "capture.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        image_paths = [capture_dir / v["image"] for v in manifest["views"]]
        lm_paths = [capture_dir / v["landmarks"] for v in manifest["views"]]
        intr_path = capture_dir / manifest.get("intrinsics", "intrinsics.json")
    else:
        image_paths = sorted(capture_dir.glob("view_*.png"))
        lm_paths = [capture_dir / f"landmarks_{j:02d}.json" for j in range(len(image_paths))]
        intr_path = capture_dir / "intrinsics.json"
    images = [_load_png(p)[:, :, :3] for p in image_paths]
    landmarks = [np.array(json.loads(p.read_text())["points"]) for p in lm_paths]
    intr = json.loads(intr_path.read_text())
    return MultiViewCapture(images, landmarks), (intr["fx"], intr["fy"], intr["cx"], intr["cy"])


def bake_albedo_texture(mesh: TriMesh, per_vertex, size):
    maps = rasterize_chart(mesh, size)
    covered = maps.face >= 0
    tri = mesh.faces[maps.face[covered]]
    bary = maps.bary[covered]
    tex = np.full((size, size), np.nan)
    tex[covered] = (bary * np.asarray(per_vertex)[tri]).sum(axis=1)
    return tex, covered


def cmd_static(cfg: PipelineConfig, out_dir) -> dict:
    art = RunArtifact(out_dir, "static", cfg)
    capture_dir = require_path(cfg, "capture_dir")
    art.record_input("capture", capture_dir)
    family = _family(cfg)
    capture, intrinsics = load_capture(capture_dir)
    st = cfg.static

    fit = fit_parametric_model(capture, family, intrinsics, FitConfig(
        outer_iters=st.outer_iters, photo_weight=st.photo_weight,
        reg_identity=st.reg_identity, reg_expression=st.reg_expression))
    art.log(f"fit energies: {['%.4g' % e for e in fit.energies]}")

    field = optimize_displacement(capture, fit.coarse, fit.cameras,
                                  lambda_reg=st.lambda_reg, iters=st.gn_iters)
    ba = bundle_adjust(field, fit.cameras, capture, fit.coarse,
                       optimize_intrinsics=st.optimize_intrinsics)
    art.log(f"bundle: mean reprojection {ba.mean_reprojection:.6f} px in {ba.iterations} iters")

    b0 = refine_neutral(fit.coarse, ba.points, weight=st.refine_weight,
                        rounds=st.refine_rounds, point_indices=ba.point_indices)
    rig = build_blendshapes(b0, family.template_rig())

    root = art.root
    rig.save_dir(root / "rig" / "shapes")
    family.default_landmarks().save_json(root / "rig" / "landmarks.json")
    save_cameras_json(ba.cameras, root / "rig" / "cameras.json")
    fit.lighting.save_json(root / "rig" / "lighting.json")
    _write_json(root / "rig" / "intrinsics.json",
                {"fx": ba.intrinsics[0], "fy": ba.intrinsics[1],
                 "cx": ba.intrinsics[2], "cy": ba.intrinsics[3]})
    tex, valid = bake_albedo_texture(b0, fit.albedo.per_vertex, st.atlas_size)
    albedo = AlbedoMap(fit.albedo.per_vertex, tex, valid)
    albedo.save_npz(root / "rig" / "albedo.npz")
    save_point_cloud_ply(root / "rig" / "pointcloud.ply", ba.points)
    _write_json(root / "rig" / "fit_stats.json", {
        "energies": [float(e) for e in fit.energies],
        "bundle_mean_reprojection_px": ba.mean_reprojection,
        "refined_vertices": int(field.refined.sum()),
    })
    for name in ("rig/landmarks.json", "rig/cameras.json", "rig/lighting.json",
                 "rig/albedo.npz", "rig/pointcloud.ply", "rig/intrinsics.json",
                 "rig/fit_stats.json"):
        art.record_output(root / name)
    return art.finalize()


# --- texture -----------------------------------------------------------------


def load_rig_dir(rig_dir: Path):
    rig = BlendshapeRig.load_dir(rig_dir / "shapes")
    landmarks = LandmarkSet.load_json(rig_dir / "landmarks.json")
    albedo = AlbedoMap.load_npz(rig_dir / "albedo.npz")
    intr = json.loads((rig_dir / "intrinsics.json").read_text())
    return rig, landmarks, albedo, (intr["fx"], intr["fy"], intr["cx"], intr["cy"])


def cmd_texture(cfg: PipelineConfig, out_dir) -> dict:
    art = RunArtifact(out_dir, "texture", cfg)
    sty_dir = require_path(cfg, "stylized_dir")
    rig_dir = require_path(cfg, "rig_dir")
    art.record_input("stylized", sty_dir)
    art.record_input("rig", rig_dir)
    rig, _, albedo, _ = load_rig_dir(rig_dir)

    names = sorted({p.name.rsplit("_", 1)[0] for p in sty_dir.glob("view_*_color.png")})
    views = [ViewSample.load(sty_dir, n) for n in names]
    face_mask = _load_png(sty_dir / "face_mask.png") > 0.5

    labels, stats = solve_labeling(views, data_weight=cfg.texture.data_weight,
                                   face_mask=face_mask, max_sweeps=cfg.texture.alpha_sweeps,
                                   return_stats=True)
    art.log(f"labeling energies: {stats.initial_energy:.4f} -> {stats.final_energy:.4f}")

    size = labels.labels.shape[0]
    if albedo.texture is not None and albedo.texture.shape[0] == size:
        base = np.nan_to_num(albedo.texture, nan=0.4)
    else:
        tex, _ = bake_albedo_texture(rig.neutral, albedo.per_vertex, size)
        base = np.nan_to_num(tex, nan=0.4)
    template = TextureAtlas(np.repeat(base[:, :, None], 3, axis=2), face_mask)
    atlas = poisson_blend(labels, views, template).clamped()

    root = art.root
    atlas.save_png(root / "texture" / "atlas.png")
    labels.save_png(root / "texture" / "labels.png")
    rig.neutral.save_obj(root / "texture" / "chart.obj")
    for name in ("texture/atlas.png", "texture/labels.png", "texture/chart.obj"):
        art.record_output(root / name)
    return art.finalize()


# --- track ---------------------------------------------------------------------


def load_frames(frames_dir: Path):
    frames = []
    for img_path in sorted(frames_dir.glob("frame_*.png")):
        idx = int(img_path.stem.split("_")[1])
        lm = json.loads((frames_dir / f"landmarks_{idx:03d}.json").read_text())
        frames.append(FrameObservation(_load_png(img_path), np.array(lm["points"]), index=idx))
    intr = json.loads((frames_dir / "intrinsics.json").read_text())
    return frames, (intr["fx"], intr["fy"], intr["cx"], intr["cy"])


def cmd_track(cfg: PipelineConfig, out_dir) -> dict:
    art = RunArtifact(out_dir, "track", cfg)
    frames_dir = require_path(cfg, "frames_dir")
    rig_dir = require_path(cfg, "rig_dir")
    art.record_input("frames", frames_dir)
    art.record_input("rig", rig_dir)
    rig, landmarks, albedo, _ = load_rig_dir(rig_dir)
    frames, intr = load_frames(frames_dir)
    if not frames:
        raise ConfigError("frames directory holds no frame_*.png images")

    cam = CameraModel(intr[0], intr[1], intr[2], intr[3], np.array([1.0, 0, 0, 0]), np.zeros(3))
    lm_model = LandmarkModel(rig, landmarks.indices)
    flow_model = None
    if albedo.texture is not None and cfg.track.mu_flow > 0:
        tex = albedo.texture
        valid = albedo.texel_valid if albedo.texel_valid is not None else np.isfinite(tex)
        flow_model = FlowModel(rig, np.nan_to_num(tex, nan=0.0), valid,
                               stride=cfg.track.flow_stride)
    weights = TrackingWeights(cfg.track.mu_flow, cfg.track.mu_spa, cfg.track.mu_sm)

    # initial pose: frontal base orientation at a depth set by the landmark spread
    from .camera import quat_from_rotvec
    fx = intr[0]
    spread_px = np.ptp(frames[0].landmarks[:, 1])
    model_h = np.ptp(rig.neutral.vertices[:, 1])
    z0 = float(np.clip(fx * model_h / max(spread_px, 1e-6), 1.0, 50.0))
    state = initial_state(rig.n_expressions, q=quat_from_rotvec([np.pi, 0, 0]), t=[0, 0, z0])

    states, traces = track_sequence(frames, cam, lm_model, flow_model, weights, state,
                                    collect_energies=True)
    records = []
    for fr, st in zip(frames, states):
        records.append({"frame": fr.index,
                        "q": [float(x) for x in st.q],
                        "t": [float(x) for x in st.t],
                        "w": [float(x) for x in st.w]})
    (art.root / "track").mkdir(exist_ok=True)
    _write_json(art.root / "track" / "track.json", records)
    art.record_output(art.root / "track" / "track.json")
    art.log("energy traces non-increasing: "
            + str(all((np.diff(tr) <= 1e-9).all() for tr in traces)))
    return art.finalize()


# --- translate -------------------------------------------------------------------


def cmd_translate(cfg: PipelineConfig, out_dir) -> dict:
    art = RunArtifact(out_dir, "translate", cfg)
    bundle_file = require_path(cfg, "bundle_file")
    art.record_input("bundle", bundle_file)
    bundle = load_weights(bundle_file)

    meshes = []
    if cfg.paths.track_file and cfg.paths.rig_dir:
        rig_dir = require_path(cfg, "rig_dir")
        art.record_input("rig", rig_dir)
        track_file = require_path(cfg, "track_file")
        art.record_input("track", track_file)
        rig, _, _, _ = load_rig_dir(rig_dir)
        records = json.loads(Path(track_file).read_text())
        for rec in records:
            meshes.append(rig.evaluate(np.array(rec["w"])))
        reference = rig.neutral
    elif cfg.paths.meshes_dir:
        meshes_dir = require_path(cfg, "meshes_dir")
        art.record_input("meshes", meshes_dir)
        for p in sorted(Path(meshes_dir).glob("*.obj")):
            meshes.append(TriMesh.load_obj(p))
        if not meshes:
            raise ConfigError("meshes_dir holds no OBJ files")
        reference = meshes[0]
    else:
        raise ConfigError("translate needs paths.track_file+paths.rig_dir or paths.meshes_dir",
                          key="paths.track_file")

    translator = StyleTranslator(bundle, reference)
    out, times = translate_sequence(meshes, translator, mu_smo=cfg.translate.mu_smo,
                                    source_domain=cfg.translate.source_domain,
                                    return_timing=True)
    cari_dir = art.root / "caricature"
    for k, mesh in enumerate(out):
        mesh.save_obj(cari_dir / f"frame_{k:03d}.obj")
    art.record_output(cari_dir / "frame_000.obj")
    _write_json(art.root / "caricature" / "timing.json",
                {"per_frame_seconds": [float(t) for t in times],
                 "median_seconds": float(np.median(times))})
    art.record_output(art.root / "caricature" / "timing.json")
    return art.finalize()


# --- render ----------------------------------------------------------------------


def cmd_render(cfg: PipelineConfig, out_dir) -> dict:
    art = RunArtifact(out_dir, "render", cfg)
    meshes_dir = require_path(cfg, "meshes_dir")
    art.record_input("meshes", meshes_dir)
    atlas_file = cfg.paths.atlas_file
    atlas = TextureAtlas.load_png(atlas_file) if atlas_file else None
    if atlas_file:
        art.record_input("atlas", atlas_file)
    size = cfg.render.image_size
    cam = CameraModel(1.1 * size, 1.1 * size, size / 2, size / 2,
                      np.array([1.0, 0, 0, 0]), np.zeros(3))

    track = None
    if cfg.paths.track_file:
        track = {rec["frame"]: rec for rec in json.loads(Path(cfg.paths.track_file).read_text())}

    mesh_paths = sorted(Path(meshes_dir).glob("*.obj"))
    if not mesh_paths:
        raise ConfigError("meshes_dir holds no OBJ files")
    from .camera import quat_from_rotvec
    q_base = quat_from_rotvec([np.pi, 0.0, 0.0])
    out_names = []
    for k, p in enumerate(mesh_paths[::cfg.render.frame_stride]):
        mesh = TriMesh.load_obj(p)
        if track is not None and k in track:
            R = quat_to_matrix(np.array(track[k]["q"]))
            t = np.array(track[k]["t"])
        else:
            R = quat_to_matrix(q_base)
            t = np.array([0.0, 0.0, 2.2 * mesh.bbox_diagonal()])
        posed = mesh.with_vertices(mesh.vertices @ R.T + t)
        if atlas is not None and posed.uv is not None:
            img, _ = render(posed, cam, size, size, texture=atlas.colors, background=0.08)
        else:
            shade = np.full(posed.n_vertices, 0.75)
            img, _ = render(posed, cam, size, size, vertex_values=shade, background=0.08)
        name = art.root / "caricature" / f"preview_{k:03d}.png"
        _save_png(name, img)
        out_names.append(name)
    art.record_output(out_names[0])
    return art.finalize()


COMMANDS = {
    "synth": cmd_synth,
    "static": cmd_static,
    "texture": cmd_texture,
    "track": cmd_track,
    "translate": cmd_translate,
    "render": cmd_render,
}
