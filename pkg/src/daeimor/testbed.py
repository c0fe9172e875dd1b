"""Generators for index-2 test systems.

* a staggered-grid (MAC) Oseen-type channel flow past a rectangular obstacle,
  with rotation of the obstacle as the single input and patch-averaged
  velocities as outputs,
* random well-posed systems,
* systems whose finite spectrum contains prescribed ("planted") poles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from daeimor.errors import ConfigError, GeometryError
from daeimor.systems import Index2System, validate_index2

# output patches downstream of the unit obstacle at the origin, three above and
# three below the centerline
DEFAULT_PATCHES = [
    (1.0, 2.5, 0.0, 2.0), (2.5, 4.0, 0.0, 2.0), (4.0, 5.5, 0.0, 2.0),
    (1.0, 2.5, -2.0, 0.0), (2.5, 4.0, -2.0, 0.0), (4.0, 5.5, -2.0, 0.0),
]
# smallest admissible viscosity 1/Re
MIN_VISCOSITY = 1e-8


@dataclass(frozen=True, eq=False)
class GridGeometry:
    """Uniform MAC grid on a rectangle with an optional solid cell mask.

    ``u_index[j, i]`` numbers the x-velocity on the vertical face at
    ``x0 + i*hx`` in cell row ``j`` (``-1`` where the face is not an
    unknown); ``v_index[j, i]`` the y-velocity on the horizontal face at
    ``y0 + j*hy``; ``p_index[j, i]`` the pressure in cell ``(j, i)``. Velocity
    unknowns are numbered u-first. One pressure (the first fluid cell) is
    pinned to remove the constant mode.
    """

    nx: int
    ny: int
    extent: tuple = (0.0, 1.0, 0.0, 1.0)
    solid: np.ndarray | None = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise GeometryError("grid needs at least 2x2 cells")
        x0, x1, y0, y1 = map(float, self.extent)
        if not (x1 > x0 and y1 > y0):
            raise GeometryError("empty domain extent")
        solid = np.zeros((self.ny, self.nx), bool) if self.solid is None \
            else np.asarray(self.solid, bool)
        if solid.shape != (self.ny, self.nx):
            raise GeometryError(f"solid mask shape {solid.shape} != {(self.ny, self.nx)}")
        if solid.all():
            raise GeometryError("no fluid cells")
        fluid = ~solid
        u_idx = -np.ones((self.ny, self.nx + 1), int)
        v_idx = -np.ones((self.ny + 1, self.nx), int)
        k = 0
        for j in range(self.ny):
            for i in range(1, self.nx):
                if fluid[j, i - 1] and fluid[j, i]:
                    u_idx[j, i] = k
                    k += 1
        for j in range(1, self.ny):
            for i in range(self.nx):
                if fluid[j - 1, i] and fluid[j, i]:
                    v_idx[j, i] = k
                    k += 1
        p_idx = -np.ones((self.ny, self.nx), int)
        cells = np.argwhere(fluid)
        pinned = tuple(cells[0])
        q = 0
        for j, i in cells:
            if (j, i) != pinned:
                p_idx[j, i] = q
                q += 1
        object.__setattr__(self, "extent", (x0, x1, y0, y1))
        object.__setattr__(self, "solid", solid)
        object.__setattr__(self, "u_index", u_idx)
        object.__setattr__(self, "v_index", v_idx)
        object.__setattr__(self, "p_index", p_idx)
        object.__setattr__(self, "pinned_cell", pinned)

    @property
    def hx(self) -> float:
        return (self.extent[1] - self.extent[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.extent[3] - self.extent[2]) / self.ny

    @property
    def n_u(self) -> int:
        return int((self.u_index >= 0).sum())

    @property
    def n1(self) -> int:
        return self.n_u + int((self.v_index >= 0).sum())

    @property
    def n2(self) -> int:
        return int((self.p_index >= 0).sum())

    def u_coords(self):
        """(x, y) of every u unknown, in unknown order."""
        j, i = np.nonzero(self.u_index >= 0)
        order = np.argsort(self.u_index[j, i])
        x0, _, y0, _ = self.extent
        return np.column_stack([x0 + i[order] * self.hx, y0 + (j[order] + 0.5) * self.hy])

    def v_coords(self):
        j, i = np.nonzero(self.v_index >= 0)
        order = np.argsort(self.v_index[j, i])
        x0, _, y0, _ = self.extent
        return np.column_stack([x0 + (i[order] + 0.5) * self.hx, y0 + j[order] * self.hy])


def channel_geometry(nx=24, ny=12, extent=(-2.0, 6.0, -2.0, 2.0),
                     obstacle=(-0.5, 0.5, -0.5, 0.5)) -> GridGeometry:
    """Channel with a rectangular obstacle; cells whose centers lie inside it are solid."""
    x0, x1, y0, y1 = extent
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xc = x0 + (np.arange(nx) + 0.5) * hx
    yc = y0 + (np.arange(ny) + 0.5) * hy
    solid = np.zeros((ny, nx), bool)
    if obstacle is not None:
        ox0, ox1, oy0, oy1 = obstacle
        solid = (yc[:, None] > oy0) & (yc[:, None] < oy1) & (xc[None, :] > ox0) & (xc[None, :] < ox1)
        if not solid.any():
            raise GeometryError("obstacle covers no cell centers; refine the grid")
        rows, cols = np.nonzero(solid)
        if rows.min() == 0 or cols.min() == 0 or rows.max() == ny - 1 or cols.max() == nx - 1:
            raise GeometryError("obstacle touches the domain boundary")
    return GridGeometry(nx, ny, extent, solid)


def _base_velocity(geom, y, kind, speed):
    if kind == "zero":
        return np.zeros_like(y), np.zeros_like(y)
    if kind == "uniform":
        return np.full_like(y, speed), np.zeros_like(y)
    if kind == "parabolic":
        y0, y1 = geom.extent[2], geom.extent[3]
        L = y1 - y0
        return 4 * speed * (y - y0) * (y1 - y) / L**2, 4 * speed * (y1 + y0 - 2 * y) / L**2
    raise ConfigError(f"unknown base flow {kind!r}")


def generate_oseen(geom: GridGeometry, reynolds: float, base_flow="parabolic", speed=1.0,
                   patches=None) -> Index2System:
    """Linearized (Oseen-type) channel flow on a MAC grid.

    ``E11`` is the lumped (cell-area) mass, ``A11`` the area-weighted
    ``(1/Re) Laplacian - (U . grad) v' - (v' . grad) U`` for a base flow
    ``U = (U(y), 0)``, ``A21`` the cell-integrated divergence with one pressure
    pinned. The single input is a unit counter-clockwise rotation of the
    obstacle entering through the tangential wall velocity; ``B2 = 0``.
    Outputs are patch averages (see :func:`generate_output_patches`).
    """
    if not np.isfinite(reynolds) or reynolds <= 0:
        raise ConfigError("reynolds must be positive and finite")
    nu = 1.0 / reynolds
    if nu < MIN_VISCOSITY:
        raise ConfigError(f"viscosity 1/Re = {nu:.1e} is below {MIN_VISCOSITY:.0e}; "
                          "the velocity operator would be too ill-conditioned")
    nx, ny, hx, hy = geom.nx, geom.ny, geom.hx, geom.hy
    area = hx * hy
    x0, _, y0, _ = geom.extent
    uI, vI, pI = geom.u_index, geom.v_index, geom.p_index
    n1, n2 = geom.n1, geom.n2
    solid = geom.solid
    if solid.any():
        rows, cols = np.nonzero(solid)
        xc = x0 + (cols.min() + cols.max() + 1) / 2 * hx
        yc = y0 + (rows.min() + rows.max() + 1) / 2 * hy
    else:
        xc = yc = 0.0

    rows, cols, vals = [], [], []
    B = np.zeros(n1)

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    def is_obstacle(j, i):
        return 0 <= j < ny and 0 <= i < nx and solid[j, i]

    # x-momentum
    for j in range(ny):
        y = y0 + (j + 0.5) * hy
        U, dU = _base_velocity(geom, np.array(y), base_flow, speed)
        for i in range(1, nx):
            k = uI[j, i]
            if k < 0:
                continue
            diag = -2 * nu / hx**2 - 2 * nu / hy**2
            # normal-direction neighbours: Dirichlet (zero normal velocity)
            for di, sgn in ((1, 1), (-1, -1)):
                kk = uI[j, i + di]
                if kk >= 0:
                    add(k, kk, area * (nu / hx**2 - sgn * U / (2 * hx)))
            # tangential neighbours: ghost value 2*u_wall - u
            for dj in (1, -1):
                jj = j + dj
                kk = uI[jj, i] if 0 <= jj < ny else -1
                if kk >= 0:
                    add(k, kk, area * nu / hy**2)
                else:
                    diag -= nu / hy**2
                    if is_obstacle(jj, i - 1) or is_obstacle(jj, i):
                        y_wall = y + dj * hy / 2
                        B[k] += area * nu / hy**2 * 2 * (-(y_wall - yc))
            add(k, k, area * diag)
            # -(v' dU/dy): v averaged from the four surrounding faces
            for jj in (j, j + 1):
                for ii in (i - 1, i):
                    kk = vI[jj, ii]
                    if kk >= 0 and dU != 0:
                        add(k, kk, -area * dU / 4)
    # y-momentum
    for j in range(1, ny):
        y = y0 + j * hy
        U, _ = _base_velocity(geom, np.array(y), base_flow, speed)
        for i in range(nx):
            k = vI[j, i]
            if k < 0:
                continue
            diag = -2 * nu / hx**2 - 2 * nu / hy**2
            for dj in (1, -1):
                kk = vI[j + dj, i]
                if kk >= 0:
                    add(k, kk, area * nu / hy**2)
            for di in (1, -1):
                ii = i + di
                kk = vI[j, ii] if 0 <= ii < nx else -1
                conv = -di * U / (2 * hx)
                if kk >= 0:
                    add(k, kk, area * (nu / hx**2 + conv))
                else:
                    diag += -nu / hx**2 - conv
                    if is_obstacle(j - 1, ii) or is_obstacle(j, ii):
                        x_wall = x0 + (i + 0.5 + di / 2) * hx
                        B[k] += area * (nu / hx**2 + conv) * 2 * (x_wall - xc)
            add(k, k, area * diag)
    A11 = sp.csr_matrix((vals, (rows, cols)), shape=(n1, n1))

    drows, dcols, dvals = [], [], []
    for j in range(ny):
        for i in range(nx):
            q = pI[j, i]
            if q < 0:
                continue
            for k, v in ((uI[j, i + 1], hy), (uI[j, i], -hy), (vI[j + 1, i], hx), (vI[j, i], -hx)):
                if k >= 0:
                    drows.append(q)
                    dcols.append(k)
                    dvals.append(v)
    A21 = sp.csr_matrix((dvals, (drows, dcols)), shape=(n2, n1))
    E11 = sp.identity(n1, format="csr") * area

    if patches is None:
        x0_, x1_, y0_, y1_ = geom.extent
        inside = all(x0_ <= a and b <= x1_ and y0_ <= c and d <= y1_ for a, b, c, d in DEFAULT_PATCHES)
        patches = DEFAULT_PATCHES if inside else [geom.extent]
    C1 = generate_output_patches(geom, patches)
    sys = Index2System(E11, A11, A21, B.reshape(-1, 1), C1)
    validate_index2(sys)
    return sys


def generate_output_patches(geom: GridGeometry, patches) -> np.ndarray:
    """Rows averaging the u and v unknowns over each rectangle ``(xa, xb, ya, yb)``.

    Each patch yields two rows; a location belongs to a patch when
    ``xa <= x < xb`` and ``ya <= y < yb``.
    """
    x0, x1, y0, y1 = geom.extent
    uc, vc = geom.u_coords(), geom.v_coords()
    nu_ = geom.n_u
    C = np.zeros((2 * len(patches), geom.n1))
    for k, (xa, xb, ya, yb) in enumerate(patches):
        if not (x0 <= xa < xb <= x1 and y0 <= ya < yb <= y1):
            raise GeometryError(f"patch {(xa, xb, ya, yb)} is not inside the domain")
        for row, (coords, offset) in enumerate(((uc, 0), (vc, nu_))):
            inside = (coords[:, 0] >= xa) & (coords[:, 0] < xb) & \
                (coords[:, 1] >= ya) & (coords[:, 1] < yb)
            count = int(inside.sum())
            if count == 0:
                raise GeometryError(f"patch {(xa, xb, ya, yb)} contains no velocity unknowns")
            # cell-area weights over the patch area covered by unknowns
            cell = geom.hx * geom.hy
            C[2 * k + row, offset + np.flatnonzero(inside)] = cell / (count * cell)
    return C


def generate_random(n1, n2, m=1, p=1, seed=0, c2=False, d=False, b2=False) -> Index2System:
    """Random well-posed index-2 system with stable finite spectrum.

    ``A11`` has a negative definite symmetric part, so the finite poles (the
    spectrum of the pencil restricted to ker(A21)) lie in the open left half-plane.
    """
    if not 0 <= n2 < n1:
        raise ConfigError("need 0 <= n2 < n1")
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n1, n1))
    K = rng.standard_normal((n1, n1))
    A11 = -(M @ M.T / n1 + np.eye(n1)) + (K - K.T) / np.sqrt(n1)
    E11 = np.diag(rng.uniform(1.0, 2.0, n1))
    A21 = rng.standard_normal((n2, n1))
    B1 = rng.standard_normal((n1, m))
    C1 = rng.standard_normal((p, n1))
    B2 = rng.standard_normal((n2, m)) if b2 else None
    C2 = rng.standard_normal((p, n2)) if c2 else None
    D = rng.standard_normal((p, m)) if d else None
    sys = Index2System(sp.csr_matrix(E11), sp.csr_matrix(A11), sp.csr_matrix(A21),
                       B1, C1, B2, C2, D)
    validate_index2(sys)
    return sys


def _planted_block(poles):
    """Real block-diagonal matrix with exactly the given conjugate-closed eigenvalues.

    Returns the matrix and the block id of every row.
    """
    poles = [complex(z) for z in poles]
    blocks, used = [], [False] * len(poles)
    for i, z in enumerate(poles):
        if used[i]:
            continue
        used[i] = True
        if z.imag == 0:
            blocks.append(np.array([[z.real]]))
            continue
        for j in range(i + 1, len(poles)):
            if not used[j] and poles[j] == z.conjugate():
                used[j] = True
                break
        else:
            raise ConfigError(f"planted pole {z} has no conjugate partner")
        blocks.append(np.array([[z.real, abs(z.imag)], [-abs(z.imag), z.real]]))
    ids = np.concatenate([[k] * len(b) for k, b in enumerate(blocks)]) if blocks else np.zeros(0)
    return (la.block_diag(*blocks) if blocks else np.zeros((0, 0))), ids


def generate_planted(n1, n2, planted_poles, m=1, p=2, seed=0) -> Index2System:
    """Index-2 system whose finite spectrum contains ``planted_poles`` exactly.

    The restriction of the pencil to ker(A21) is ``(Er T, Er)`` with ``T``
    block upper triangular, carrying the planted poles and a stable fill on its
    diagonal blocks; a random orthogonal similarity mixes the velocity block.
    """
    k = n1 - n2
    if n2 < 0 or k < len(planted_poles):
        raise ConfigError(f"cannot plant {len(planted_poles)} poles in {k} finite modes")
    rng = np.random.default_rng(seed)
    n_fill = k - len(planted_poles)
    fill = []
    while len(fill) < n_fill:
        a = -rng.uniform(0.5, 4.0)
        if n_fill - len(fill) >= 2 and rng.random() < 0.5:
            b = rng.uniform(0.1, 3.0)
            fill += [complex(a, b), complex(a, -b)]
        else:
            fill.append(complex(a, 0))
    T, ids = _planted_block(list(planted_poles) + fill)
    # coupling strictly above the block diagonal leaves the spectrum unchanged
    T = T + 0.1 * rng.standard_normal((k, k)) * (ids[:, None] < ids[None, :])

    Q, _ = np.linalg.qr(rng.standard_normal((n1, n1)))
    Q1, Q2 = Q[:, :k], Q[:, k:]
    E11 = np.diag(rng.uniform(1.0, 2.0, n1))
    Ek = Q1.T @ E11 @ Q1
    Mx = 0.3 * rng.standard_normal((n1, n1))
    Mx[:k, :k] = Ek @ T
    A11 = Q @ Mx @ Q.T
    G, _ = np.linalg.qr(rng.standard_normal((n2, n2)))
    A21 = (G * rng.uniform(1.0, 2.0, n2)) @ Q2.T if n2 else np.zeros((0, n1))
    B1 = rng.standard_normal((n1, m))
    C1 = rng.standard_normal((p, n1))
    sys = Index2System(sp.csr_matrix(E11), sp.csr_matrix(A11), sp.csr_matrix(A21), B1, C1)
    validate_index2(sys)
    return sys
