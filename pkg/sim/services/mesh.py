# sim/services/mesh.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np

from sim.services.geometry import SuperquadricShape, surface_normals, surface_point

logger = logging.getLogger(__name__)

SWEEP_EPS2: Tuple[float, ...] = (0.1, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class TriangleMesh:
    shape: SuperquadricShape
    n_eta: int
    n_omega: int
    vertices: np.ndarray   # (V, 3)
    normals: np.ndarray    # (V, 3)
    faces: np.ndarray      # (F, 3) zero-based

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    def ring(self, i: int) -> np.ndarray:
        return self.vertices[i * self.n_omega:(i + 1) * self.n_omega]


def _grid_angles(n_eta: int, n_omega: int) -> Tuple[np.ndarray, np.ndarray]:
    eta = -math.pi / 2.0 + np.arange(n_eta + 1) * math.pi / n_eta
    omega = -math.pi + np.arange(n_omega) * 2.0 * math.pi / n_omega
    return eta, omega


def export_mesh(shape: SuperquadricShape, n_eta: int = 32, n_omega: int = 64) -> TriangleMesh:
    """
    (n_eta + 1) * n_omega vertices on the eta x omega grid, row-major in eta.
    The two pole rows collapse to one point each; faces next to a pole fan
    around the first vertex of that row so the surface is closed.
    """
    if n_eta < 4 or n_omega < 4:
        raise ValueError(f"mesh resolution must be >= 4 per parameter, got {n_eta}x{n_omega}")

    eta, omega = _grid_angles(n_eta, n_omega)
    ee, ww = np.meshgrid(eta, omega, indexing="ij")
    verts = surface_point(ee, ww, shape).reshape(-1, 3)

    normals = surface_normals(verts, shape)
    # fallback for any vertex whose gradient vanished: radial direction
    bad = np.linalg.norm(normals, axis=1) < 0.5
    if np.any(bad):
        radial = verts[bad] / np.maximum(np.linalg.norm(verts[bad], axis=1, keepdims=True), 1e-300)
        normals[bad] = radial

    def vid(i: int, j: int) -> int:
        return i * n_omega + (j % n_omega)

    faces: List[Tuple[int, int, int]] = []
    bottom, top = vid(0, 0), vid(n_eta, 0)
    for j in range(n_omega):
        faces.append((bottom, vid(1, j + 1), vid(1, j)))
    for i in range(1, n_eta - 1):
        for j in range(n_omega):
            faces.append((vid(i, j), vid(i, j + 1), vid(i + 1, j + 1)))
            faces.append((vid(i, j), vid(i + 1, j + 1), vid(i + 1, j)))
    for j in range(n_omega):
        faces.append((vid(n_eta - 1, j), vid(n_eta - 1, j + 1), top))

    return TriangleMesh(
        shape=shape,
        n_eta=n_eta,
        n_omega=n_omega,
        vertices=verts,
        normals=normals,
        faces=np.asarray(faces, dtype=np.int64),
    )


def write_obj(mesh: TriangleMesh, path: Union[str, Path]) -> Path:
    """ASCII Wavefront OBJ, 1-indexed, triangles only."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    s = mesh.shape
    lines = [
        "# graspforge superquadric",
        f"# phi {s.a1:.6g} {s.a2:.6g} {s.a3:.6g} {s.eps1:.6g} {s.eps2:.6g}",
        f"# grid {mesh.n_eta}x{mesh.n_omega}",
    ]
    lines.extend(f"v {x:.9f} {y:.9f} {z:.9f}" for x, y, z in mesh.vertices)
    lines.extend(f"vn {x:.9f} {y:.9f} {z:.9f}" for x, y, z in mesh.normals)
    lines.extend(f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.faces)
    p.write_text("\n".join(lines) + "\n", encoding="ascii")
    logger.debug("wrote %s (%d vertices, %d faces)", p, mesh.vertex_count, len(mesh.faces))
    return p


def corner_metric(obj: Union[TriangleMesh, SuperquadricShape], samples: int = 4096) -> float:
    """
    max(|x| + |y|) over the z = 0 cross-section divided by max(a1, a2).
    sqrt(2) for a circle, ~2 for a square, 1 for a diamond.
    """
    if isinstance(obj, TriangleMesh) and obj.n_eta % 2 == 0:
        ring = obj.ring(obj.n_eta // 2)
        shape = obj.shape
    else:
        shape = obj.shape if isinstance(obj, TriangleMesh) else obj
        omega = np.linspace(-math.pi, math.pi, samples, endpoint=False)
        ring = surface_point(0.0, omega, shape)
    return float(np.max(np.abs(ring[:, 0]) + np.abs(ring[:, 1])) / max(shape.a1, shape.a2))


def sweep_meshes(
    base: SuperquadricShape,
    eps2_values: Iterable[float] = SWEEP_EPS2,
    n_eta: int = 32,
    n_omega: int = 64,
) -> List[TriangleMesh]:
    """One mesh per eps2 value, everything else taken from `base`."""
    out = []
    for e2 in eps2_values:
        shape = SuperquadricShape(base.a1, base.a2, base.a3, base.eps1, float(e2))
        out.append(export_mesh(shape, n_eta, n_omega))
    return out


__all__ = ["TriangleMesh", "export_mesh", "write_obj", "corner_metric", "sweep_meshes", "SWEEP_EPS2"]
