# sim/management/commands/render.py
from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandError

from core.management.base import GraspforgeCommand
from core.services.charting import render_cross_sections_png
from sim.services.camera import CameraSpec, render_depth, write_pgm
from sim.services.geometry import Pose, SuperquadricShape, support_height
from sim.services.mesh import SWEEP_EPS2, corner_metric, export_mesh, sweep_meshes, write_obj


def _parse_phi(text: str) -> SuperquadricShape:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise CommandError(f"--phi must be five comma-separated numbers, got {text!r}", returncode=1) from e
    if len(values) != 5:
        raise CommandError(f"--phi needs a1,a2,a3,eps1,eps2 (5 values), got {len(values)}", returncode=1)
    return SuperquadricShape.from_vector(values)


class Command(GraspforgeCommand):
    help = "Export a superquadric as OBJ, the eps2 sweep (one OBJ per value plus a PNG), or a depth PGM."

    def add_command_arguments(self, parser):
        parser.add_argument("--phi", required=True, help="a1,a2,a3,eps1,eps2 (metres, exponents)")
        parser.add_argument("--out", required=True,
                            help="OBJ file, or a directory with --sweep")
        parser.add_argument("--n-eta", type=int, default=32)
        parser.add_argument("--n-omega", type=int, default=64)
        parser.add_argument("--sweep", action="store_true",
                            help=f"sweep eps2 over {', '.join(f'{v:g}' for v in SWEEP_EPS2)}")
        parser.add_argument("--depth-pgm", help="also write a depth image from the nominal camera")

    def artifact_dir(self, options):
        out = Path(options["out"])
        return out if options.get("sweep") else self.dir_of(out)

    def run(self, cfg, recorder, **options):
        shape = _parse_phi(options["phi"])
        n_eta, n_omega = options["n_eta"], options["n_omega"]
        if n_eta < 4 or n_omega < 4:
            raise CommandError("--n-eta and --n-omega must be >= 4", returncode=1)
        out = Path(options["out"])

        if options.get("sweep"):
            meshes = sweep_meshes(shape, SWEEP_EPS2, n_eta, n_omega)
            out.mkdir(parents=True, exist_ok=True)
            metrics = {}
            for mesh in meshes:
                path = write_obj(mesh, out / f"sweep_eps2_{mesh.shape.eps2:.1f}.obj")
                metrics[f"{mesh.shape.eps2:g}"] = corner_metric(mesh)
                self.stdout.write(f"eps2={mesh.shape.eps2:<4g} corner={metrics[f'{mesh.shape.eps2:g}']:.4f}  {path.name}")
            (out / "sweep_cross_sections.png").write_bytes(render_cross_sections_png(meshes))
            if recorder is not None:
                recorder.extra["corner_metric"] = metrics
            self.stdout.write(self.style.SUCCESS(f"Wrote {len(meshes)} meshes and sweep_cross_sections.png to {out}"))
        else:
            mesh = export_mesh(shape, n_eta, n_omega)
            write_obj(mesh, out)
            self.stdout.write(self.style.SUCCESS(
                f"Wrote {out} ({mesh.vertex_count} vertices, {len(mesh.faces)} faces)"))

        if options.get("depth_pgm"):
            cam = CameraSpec.looking_at(cfg.camera.nominal_eye, cfg.camera.nominal_target, cfg.camera.fov)
            pose = Pose(position=(0.0, 0.0, support_height(shape, Pose().quat)))
            depth = render_depth(cam, shape, pose)
            path = write_pgm(depth, options["depth_pgm"])
            self.stdout.write(self.style.SUCCESS(f"Wrote depth image {path}"))
