"""Hex-mesh four sampled planes: three orthogonal ones and a parallel offset copy.

Two triple intersections give two hexahedra glued along one quad face.
"""
import numpy as np

from streamlam.hexer import hexmesh, mesh_quality_report
from streamlam.tracer import StreamSurface


def plane(sid, axis, c, lo=-6.0, hi=12.0):
    u = np.arange(lo, hi + 1e-9)
    a, b = np.meshgrid(u, u, indexing="ij")
    pts = np.zeros((a.size, 3))
    others = [d for d in range(3) if d != axis]
    pts[:, axis] = c
    pts[:, others[0]], pts[:, others[1]] = a.ravel(), b.ravel()
    nrm = np.zeros_like(pts)
    nrm[:, axis] = 1.0
    return StreamSurface(sid, pts, nrm, 1.0)


def main():
    surfaces = [plane(0, 0, 0.0), plane(1, 1, 0.0), plane(2, 2, 0.0), plane(3, 0, 6.0)]
    mesh, stc = hexmesh(surfaces, 1.0)
    print(f"STC: {len(stc)} vertices at\n{np.round(stc.positions, 2)}")
    print(f"hex mesh: {len(mesh)} cells sharing {len(set(mesh.cells[0]) & set(mesh.cells[1]))} vertices")
    print(mesh_quality_report(mesh))


if __name__ == "__main__":
    main()
