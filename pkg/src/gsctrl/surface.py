"""Linear blendshape head surface with a rigid pose and a texel-grid UV lookup."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .errors import CoefficientLengthMismatch, InvalidDimension, MalformedContainer

SURFACE_MAGIC = b"GSRF0001"
UVMAP_MAGIC = b"GSUV0001"

# Tolerance for a texel center lying on a UV triangle edge.
EDGE_TOL = 1e-9

DEMO_ASSET = Path(__file__).with_name("data") / "demo_head.gsrf"


@dataclass(frozen=True)
class SurfaceModel:
    template_vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int64
    shape_basis: np.ndarray  # (V, 3, n_shape)
    expr_basis: np.ndarray  # (V, 3, n_expr)
    uv_coords: np.ndarray  # (F, 3, 2)

    def __post_init__(self):
        validate_surface(self)

    @property
    def num_vertices(self):
        return self.template_vertices.shape[0]

    @property
    def num_faces(self):
        return self.faces.shape[0]

    @property
    def n_shape(self):
        return self.shape_basis.shape[2]

    @property
    def n_expr(self):
        return self.expr_basis.shape[2]

    def median_edge_length(self):
        v = self.template_vertices
        f = self.faces
        edges = np.concatenate([v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 1]], v[f[:, 0]] - v[f[:, 2]]])
        return float(np.median(np.linalg.norm(edges, axis=1)))


def validate_surface(model):
    v = model.template_vertices
    if v.ndim != 2 or v.shape[1] != 3:
        raise MalformedContainer("template_vertices", f"expected shape (V, 3), got {v.shape}")
    nv = v.shape[0]
    f = model.faces
    if f.ndim != 2 or f.shape[1] != 3:
        raise MalformedContainer("faces", f"expected shape (F, 3), got {f.shape}")
    if f.size and (f.min() < 0 or f.max() >= nv):
        raise MalformedContainer("faces", f"vertex index out of range [0, {nv})")
    if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
        raise MalformedContainer("faces", "face with repeated vertex index")
    for name in ("shape_basis", "expr_basis"):
        b = getattr(model, name)
        if b.ndim != 3 or b.shape[0] != nv or b.shape[1] != 3:
            raise MalformedContainer(name, f"expected shape ({nv}, 3, n), got {b.shape}")
    uv = model.uv_coords
    if uv.shape != (f.shape[0], 3, 2):
        raise MalformedContainer("uv_coords", f"expected shape ({f.shape[0]}, 3, 2), got {uv.shape}")
    if uv.size and not (np.all(uv >= 0.0) and np.all(uv <= 1.0)):
        raise MalformedContainer("uv_coords", "coordinates outside [0, 1]^2")
    for name in ("template_vertices", "shape_basis", "expr_basis"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise MalformedContainer(name, "non-finite values")


@dataclass(frozen=True)
class RigidPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidDimension("pose needs a 3x3 rotation and a 3-vector translation")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise InvalidDimension("pose rotation must be a proper rotation matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class DeformedMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray


@dataclass(frozen=True)
class UVMapping:
    """Texel grid lookup. Texel (i, j) has flat index ``i * resolution + j`` and
    center ``((i + 0.5) / res, (j + 0.5) / res)``; ``face_id`` is -1 when unmapped."""

    resolution: int
    face_id: np.ndarray  # (res, res) int64
    barycentric: np.ndarray  # (res, res, 3)

    @property
    def mapped(self):
        return self.face_id >= 0

    @property
    def num_mapped(self):
        return int(np.count_nonzero(self.face_id >= 0))

    def mapped_texels(self):
        """Flat indices of mapped texels in row-major order."""
        return np.flatnonzero(self.face_id.ravel() >= 0)

    def entry(self, i, j):
        f = int(self.face_id[i, j])
        if f < 0:
            return None
        return f, self.barycentric[i, j].copy()


def deform(model, beta, psi, pose=None):
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    if beta.shape[0] != model.n_shape:
        raise CoefficientLengthMismatch(f"beta: expected {model.n_shape} coefficients, got {beta.shape[0]}")
    if psi.shape[0] != model.n_expr:
        raise CoefficientLengthMismatch(f"psi: expected {model.n_expr} coefficients, got {psi.shape[0]}")
    pose = pose or RigidPose.identity()
    rest = model.template_vertices + model.shape_basis @ beta + model.expr_basis @ psi
    return DeformedMesh(vertices=rigid_transform(pose.rotation, pose.translation, rest), faces=model.faces)


def rigid_transform(rotation, translation, points):
    """``rotation @ p + translation`` per row, written out so each output row
    depends only on its own input row (no BLAS blocking effects)."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    r, t = rotation, translation
    return np.stack(
        [
            r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0],
            r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1],
            r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2],
        ],
        axis=1,
    )


def build_uv_mapping(model, resolution):
    if resolution < 1:
        raise InvalidDimension("resolution must be >= 1")
    res = int(resolution)
    face_id = np.full((res, res), -1, dtype=np.int64)
    bary = np.zeros((res, res, 3))
    centers = (np.arange(res) + 0.5) / res
    # faces are visited in index order and never overwrite, so shared edges go to the lower id
    for f, (a, b, c) in enumerate(model.uv_coords):
        e1 = b - a
        e2 = c - a
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if det == 0.0:
            continue
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        i0 = max(int(np.floor(lo[0] * res - 0.5)), 0)
        i1 = min(int(np.ceil(hi[0] * res - 0.5)), res - 1)
        j0 = max(int(np.floor(lo[1] * res - 0.5)), 0)
        j1 = min(int(np.ceil(hi[1] * res - 0.5)), res - 1)
        if i0 > i1 or j0 > j1:
            continue
        pu, pv = np.meshgrid(centers[i0 : i1 + 1], centers[j0 : j1 + 1], indexing="ij")
        du = pu - a[0]
        dv = pv - a[1]
        b1 = (du * e2[1] - dv * e2[0]) / det
        b2 = (e1[0] * dv - e1[1] * du) / det
        b0 = 1.0 - b1 - b2
        inside = (b0 >= -EDGE_TOL) & (b1 >= -EDGE_TOL) & (b2 >= -EDGE_TOL)
        free = face_id[i0 : i1 + 1, j0 : j1 + 1] < 0
        take = inside & free
        if not take.any():
            continue
        ii, jj = np.nonzero(take)
        face_id[ii + i0, jj + j0] = f
        bary[ii + i0, jj + j0] = np.stack([b0[take], b1[take], b2[take]], axis=1)
    return UVMapping(resolution=res, face_id=face_id, barycentric=bary)


def surface_point(mesh, entry):
    face, bary = entry
    v = mesh.vertices[mesh.faces[face]]
    return bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2]


def surface_points(mesh, mapping, texels=None):
    """Vectorized ``surface_point`` for the given flat texel indices."""
    if texels is None:
        texels = mapping.mapped_texels()
    faces = mapping.face_id.ravel()[texels]
    bary = mapping.barycentric.reshape(-1, 3)[texels]
    v = mesh.vertices[mesh.faces[faces]]  # (N, 3, 3)
    return bary[:, 0:1] * v[:, 0] + bary[:, 1:2] * v[:, 1] + bary[:, 2:3] * v[:, 2]


# -- containers ---------------------------------------------------------------


def save_surface(model, path):
    nv, nf = model.num_vertices, model.num_faces
    blocks = [
        np.ascontiguousarray(model.template_vertices, dtype="<f8"),
        np.ascontiguousarray(model.shape_basis, dtype="<f8"),
        np.ascontiguousarray(model.expr_basis, dtype="<f8"),
        np.ascontiguousarray(model.uv_coords, dtype="<f8"),
        np.ascontiguousarray(model.faces, dtype="<u4"),
    ]
    offsets = np.cumsum([0] + [b.nbytes for b in blocks])[:-1]
    header = {
        "num_vertices": nv,
        "num_faces": nf,
        "n_shape": model.n_shape,
        "n_expr": model.n_expr,
        "offsets": {
            name: int(o)
            for name, o in zip(["template_vertices", "shape_basis", "expr_basis", "uv_coords", "faces"], offsets)
        },
    }
    formats.write_container(path, SURFACE_MAGIC, header, [b.tobytes() for b in blocks])


def load_surface(path):
    header, payload = formats.read_container(path, SURFACE_MAGIC)
    try:
        nv = formats.header_int(header, "num_vertices", 3)
        nf = formats.header_int(header, "num_faces", 1)
        ns = formats.header_int(header, "n_shape", 0)
        ne = formats.header_int(header, "n_expr", 0)
    except formats.FormatError as exc:
        raise MalformedContainer("header", str(exc)) from None
    specs = [
        ("template_vertices", "<f8", (nv, 3)),
        ("shape_basis", "<f8", (nv, 3, ns)),
        ("expr_basis", "<f8", (nv, 3, ne)),
        ("uv_coords", "<f8", (nf, 3, 2)),
        ("faces", "<u4", (nf, 3)),
    ]
    expected = sum(np.dtype(d).itemsize * int(np.prod(s)) for _, d, s in specs)
    if len(payload) != expected:
        raise MalformedContainer("payload", f"expected {expected} bytes for declared counts, found {len(payload)}")
    offsets = header.get("offsets")
    if offsets is not None:
        pos = 0
        if not isinstance(offsets, dict):
            raise MalformedContainer("offsets", "expected an object")
        for name, d, s in specs:
            if offsets.get(name) != pos:
                raise MalformedContainer("offsets", f"{name} expected at byte {pos}, header says {offsets.get(name)!r}")
            pos += np.dtype(d).itemsize * int(np.prod(s))
    tv, sb, eb, uv, faces = formats.split_blocks(payload, [(d, s) for _, d, s in specs])
    return SurfaceModel(
        template_vertices=tv.astype(np.float64),
        faces=faces.astype(np.int64),
        shape_basis=sb.astype(np.float64),
        expr_basis=eb.astype(np.float64),
        uv_coords=uv.astype(np.float64),
    )


def save_uv_mapping(mapping, path):
    formats.write_container(
        path,
        UVMAP_MAGIC,
        {"resolution": mapping.resolution},
        [
            np.ascontiguousarray(mapping.face_id, dtype="<i8").tobytes(),
            np.ascontiguousarray(mapping.barycentric, dtype="<f8").tobytes(),
        ],
    )


def load_uv_mapping(path):
    header, payload = formats.read_container(path, UVMAP_MAGIC)
    res = formats.header_int(header, "resolution", 1)
    formats.check_payload_size(payload, res * res * 8 * 4)
    face_id, bary = formats.split_blocks(payload, [("<i8", (res, res)), ("<f8", (res, res, 3))])
    if face_id.min() < -1:
        raise MalformedContainer("face_id", "entries must be a face index or -1")
    if not np.all(np.isfinite(bary)):
        raise MalformedContainer("barycentric", "non-finite values")
    return UVMapping(resolution=res, face_id=face_id.astype(np.int64), barycentric=bary.astype(np.float64))


def load_demo_surface():
    return load_surface(DEMO_ASSET)
