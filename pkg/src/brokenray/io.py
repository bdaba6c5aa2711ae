"""Plain-text file formats for images, sinograms and prediction CSVs.

GridImage: header ``n x_min x_max y_min y_max``, then n rows of n floats,
top row = largest y.  Sinogram: header ``n_s n_alpha s_max``, then n_alpha
rows of n_s floats with masked bins as nan.  PGM export is 16-bit binary
with the affine scaling recorded in a sidecar.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .conjugate import CausticCurve, ConjugateChain, TangentLocus
from .transforms import GridImage, Sinogram


def save_image(path, img: GridImage) -> None:
    with open(path, "w") as fh:
        fh.write(f"{img.n} {img.x_min:.17g} {img.x_max:.17g} "
                 f"{img.y_min:.17g} {img.y_max:.17g}\n")
        np.savetxt(fh, img.data[::-1], fmt="%.17g")


def load_image(path) -> GridImage:
    with open(path) as fh:
        header = fh.readline().split()
        n = int(header[0])
        x_min, x_max, y_min, y_max = map(float, header[1:5])
        data = np.loadtxt(fh)
    data = np.atleast_2d(data)
    if data.shape != (n, n):
        raise ValueError(f"expected {n}x{n} samples, found {data.shape}")
    return GridImage(data[::-1].copy(), x_min, x_max, y_min, y_max)


def save_sinogram(path, g: Sinogram) -> None:
    with open(path, "w") as fh:
        fh.write(f"{g.n_s} {g.n_alpha} {g.s_max:.17g}\n")
        np.savetxt(fh, g.data, fmt="%.17g")


def load_sinogram(path) -> Sinogram:
    with open(path) as fh:
        header = fh.readline().split()
        n_s, n_alpha = int(header[0]), int(header[1])
        s_max = float(header[2])
        data = np.loadtxt(fh)
    data = np.atleast_2d(data)
    if data.shape != (n_alpha, n_s):
        raise ValueError(f"expected {n_alpha}x{n_s} samples, found {data.shape}")
    return Sinogram(data, s_max)


def save_pgm(path, img: GridImage) -> None:
    """16-bit binary PGM, min-max scaled; scaling goes to ``<path>.scale``."""
    lo = float(np.nanmin(img.data))
    hi = float(np.nanmax(img.data))
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((img.data[::-1] - lo) / span, 0.0, 1.0)
    pixels = (scaled * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.n} {img.n}\n65535\n".encode())
        fh.write(pixels.tobytes())
    with open(str(path) + ".scale", "w") as fh:
        fh.write(f"min {lo:.17g}\nmax {hi:.17g}\n")


def save_caustic_csv(path, curve: CausticCurve) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,t,x,y,flag\n")
        for cp in curve.points:
            flag = "outside_domain" if cp.outside_domain else "ok"
            fh.write(
                f"{cp.alpha:.12g},{cp.t:.12g},{cp.point[0]:.12g},"
                f"{cp.point[1]:.12g},{flag}\n"
            )


def save_locus_csv(path, locus: TangentLocus) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,t,x,y,flag\n")
        for a, t, (x, y) in zip(locus.alpha, locus.t, locus.points):
            fh.write(f"{a:.12g},{t:.12g},{x:.12g},{y:.12g},ok\n")
        for z in locus.zeros:
            kind = f"zero:{z.kind}:{'simple' if z.simple else 'degenerate'}"
            fh.write(f"{z.alpha:.12g},{z.t:.12g},nan,nan,{kind}\n")


def save_chain_csv(path, chain: ConjugateChain) -> None:
    with open(path, "w") as fh:
        fh.write("index,x,y,xi_x,xi_y,status\n")
        for e in chain.entries:
            status = "outside_domain" if e.outside_domain else "ok"
            fh.write(
                f"{e.index},{e.covector.x[0]:.12g},{e.covector.x[1]:.12g},"
                f"{e.covector.xi[0]:.12g},{e.covector.xi[1]:.12g},{status}\n"
            )
        fh.write(f"# status_positive,{chain.status_positive.kind},"
                 f"{chain.status_positive.index}\n")
        fh.write(f"# status_negative,{chain.status_negative.kind},"
                 f"{chain.status_negative.index}\n")


def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
