"""Trigonometric Galerkin bases on a rectangle with tensor Gauss-Legendre quadrature.

Scalar fields (b, e) use cosine modes, which have zero normal derivative on
every edge. Velocities use curls of sine streamfunctions, so each mode is
solenoidal and tangent to the boundary. Everything is separable: synthesis
and projection are small matrix products of 1D tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "ResolutionError",
    "Rectangle",
    "Quadrature",
    "ScalarBasis",
    "VelocityBasis",
    "Discretization",
    "cos_tables",
    "sin_tables",
    "auto_nodes",
]


class ResolutionError(ValueError):
    """Quadrature too coarse for the requested modes."""


@dataclass(frozen=True)
class Rectangle:
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        for v in (self.Lx, self.Ly):
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"rectangle sides must be positive and finite, got {v!r}")

    @property
    def area(self) -> float:
        return self.Lx * self.Ly


def cos_tables(x, L, M):
    """cos(i pi x / L) and its first two derivatives for i = 0..M-1; shape (len(x), M)."""
    k = np.arange(M) * np.pi / L
    arg = np.outer(np.asarray(x, dtype=float), k)
    c, s = np.cos(arg), np.sin(arg)
    return c, -k * s, -(k * k) * c


def sin_tables(x, L, N):
    """sin(i pi x / L) and derivatives for i = 1..N; shape (len(x), N)."""
    k = np.arange(1, N + 1) * np.pi / L
    arg = np.outer(np.asarray(x, dtype=float), k)
    s, c = np.sin(arg), np.cos(arg)
    return s, k * c, -(k * k) * s


def auto_nodes(kmax: int) -> int:
    # products of three modes reach frequency ~3 kmax; this keeps their
    # quadrature error near round-off for the mode counts used here
    return max(int(np.ceil(3.5 * kmax)) + 4, 2 * kmax + 2)


@dataclass(frozen=True)
class Quadrature:
    rect: Rectangle
    nx: int
    ny: int
    x: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)
    wx: np.ndarray = field(init=False, repr=False)
    wy: np.ndarray = field(init=False, repr=False)
    W: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ResolutionError("need at least one node per direction")
        for name, n, L in (("x", self.nx, self.rect.Lx), ("y", self.ny, self.rect.Ly)):
            t, w = leggauss(n)
            object.__setattr__(self, name, 0.5 * L * (t + 1.0))
            object.__setattr__(self, "w" + name, 0.5 * L * w)
        object.__setattr__(self, "W", np.outer(self.wx, self.wy))

    def integrate(self, f):
        """Interior integral of nodal values with shape (..., nx, ny)."""
        return np.einsum("...ij,ij->...", f, self.W)

    @property
    def shape(self):
        return (self.nx, self.ny)


@dataclass
class ScalarBasis:
    """Cosine modes u_ij = cos(i pi x/Lx) cos(j pi y/Ly), 0 <= i < Mx, 0 <= j < My."""

    quad: Quadrature
    Mx: int
    My: int

    def __post_init__(self):
        if self.Mx < 1 or self.My < 1:
            raise ValueError("scalar basis needs at least one mode per direction")
        r = self.quad.rect
        self.Cx, self.dCx, _ = cos_tables(self.quad.x, r.Lx, self.Mx)
        self.Cy, self.dCy, _ = cos_tables(self.quad.y, r.Ly, self.My)
        nx_ = np.where(np.arange(self.Mx) == 0, 1.0, 0.5)
        ny_ = np.where(np.arange(self.My) == 0, 1.0, 0.5)
        self.mass = r.area * np.outer(nx_, ny_)
        self.eigen = (np.arange(self.Mx)[:, None] * np.pi / r.Lx) ** 2 + \
                     (np.arange(self.My)[None, :] * np.pi / r.Ly) ** 2

    @property
    def shape(self):
        return (self.Mx, self.My)

    @property
    def size(self):
        return self.Mx * self.My

    def check_resolution(self):
        if self.quad.nx < 2 * (self.Mx - 1) + 2 or self.quad.ny < 2 * (self.My - 1) + 2:
            raise ResolutionError(
                f"quadrature {self.quad.shape} too coarse for scalar modes {self.shape}: "
                f"need at least {2 * (self.Mx - 1) + 2} x {2 * (self.My - 1) + 2} nodes")

    def _coef(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape != self.shape:
            if a.size != self.size:
                raise ValueError(f"expected {self.size} scalar coefficients, got {a.size}")
            a = a.reshape(self.shape)
        return a

    def synthesize(self, a, grad: bool = False):
        a = self._coef(a)
        t = a @ self.Cy.T
        f = self.Cx @ t
        if not grad:
            return f
        return f, self.dCx @ t, self.Cx @ (a @ self.dCy.T)

    def rows(self, g):
        """Weak-form rows Q[g u_ij]."""
        return self.Cx.T @ (self.quad.W * g) @ self.Cy

    def grad_rows(self, qx, qy):
        """Weak-form rows Q[q . grad u_ij]."""
        W = self.quad.W
        return self.dCx.T @ (W * qx) @ self.Cy + self.Cx.T @ (W * qy) @ self.dCy

    def project(self, values):
        self.check_resolution()
        return self.rows(values) / self.mass

    def at_points(self, a, xs, ys):
        r = self.quad.rect
        cx = cos_tables(xs, r.Lx, self.Mx)[0]
        cy = cos_tables(ys, r.Ly, self.My)[0]
        return cx @ self._coef(a) @ cy.T

    def normal_derivative_on_boundary(self, a):
        """Largest |du/dn| on the four edges at the quadrature abscissae."""
        a = self._coef(a)
        r = self.quad.rect
        out = 0.0
        for edge_x in (0.0, r.Lx):
            d = cos_tables([edge_x], r.Lx, self.Mx)[1]
            out = max(out, float(np.max(np.abs(d @ a @ self.Cy.T))))
        for edge_y in (0.0, r.Ly):
            d = cos_tables([edge_y], r.Ly, self.My)[1]
            out = max(out, float(np.max(np.abs(self.Cx @ a @ d.T))))
        return out


@dataclass
class VelocityBasis:
    """Velocity modes w_ij = (d phi/dy, -d phi/dx) with phi = sin(i pi x/Lx) sin(j pi y/Ly)."""

    quad: Quadrature
    Nx: int
    Ny: int

    def __post_init__(self):
        if self.Nx < 1 or self.Ny < 1:
            raise ValueError("velocity basis needs at least one mode per direction")
        r = self.quad.rect
        self.Sx, self.dSx, self.ddSx = sin_tables(self.quad.x, r.Lx, self.Nx)
        self.Sy, self.dSy, self.ddSy = sin_tables(self.quad.y, r.Ly, self.Ny)
        # values at the edges
        self.ex = [sin_tables([v], r.Lx, self.Nx) for v in (0.0, r.Lx)]
        self.ey = [sin_tables([v], r.Ly, self.Ny) for v in (0.0, r.Ly)]
        wx, wy = self.quad.wx, self.quad.wy
        gx0 = self.Sx.T @ (wx[:, None] * self.Sx)
        gx1 = self.dSx.T @ (wx[:, None] * self.dSx)
        gy0 = self.Sy.T @ (wy[:, None] * self.Sy)
        gy1 = self.dSy.T @ (wy[:, None] * self.dSy)
        self.gram = np.kron(gx0, gy1) + np.kron(gx1, gy0)
        self.gram = 0.5 * (self.gram + self.gram.T)
        self._cho = cho_factor(self.gram)

    @property
    def shape(self):
        return (self.Nx, self.Ny)

    @property
    def size(self):
        return self.Nx * self.Ny

    def check_resolution(self):
        if self.quad.nx < 2 * self.Nx + 2 or self.quad.ny < 2 * self.Ny + 2:
            raise ResolutionError(
                f"quadrature {self.quad.shape} too coarse for velocity modes {self.shape}: "
                f"need at least {2 * self.Nx + 2} x {2 * self.Ny + 2} nodes")

    def analytic_gram_diagonal(self):
        r = self.quad.rect
        kx = np.arange(1, self.Nx + 1)[:, None] * np.pi / r.Lx
        ky = np.arange(1, self.Ny + 1)[None, :] * np.pi / r.Ly
        return (0.25 * r.area * (kx ** 2 + ky ** 2)).ravel()

    def _coef(self, c):
        c = np.asarray(c, dtype=float)
        if c.shape != self.shape:
            if c.size != self.size:
                raise ValueError(f"expected {self.size} velocity coefficients, got {c.size}")
            c = c.reshape(self.shape)
        return c

    def synthesize(self, c, grad: bool = False):
        """Velocity components and, on request, the four gradient entries
        (dvx/dx, dvx/dy, dvy/dx, dvy/dy)."""
        c = self._coef(c)
        vx = self.Sx @ c @ self.dSy.T
        vy = -(self.dSx @ c @ self.Sy.T)
        if not grad:
            return vx, vy
        cdy = c @ self.dSy.T
        dxvx = self.dSx @ cdy
        dyvx = self.Sx @ c @ self.ddSy.T
        dxvy = -(self.ddSx @ c @ self.Sy.T)
        dyvy = -dxvx
        return vx, vy, (dxvx, dyvx, dxvy, dyvy)

    def divergence(self, c):
        # the two terms are evaluated along different association orders
        c = self._coef(c)
        dxvx = self.dSx @ (c @ self.dSy.T)
        dyvy = -((self.dSx @ c) @ self.dSy.T)
        return dxvx + dyvy

    def vector_rows(self, fx, fy):
        """Rows Q[f . w_ij]."""
        W = self.quad.W
        return self.Sx.T @ (W * fx) @ self.dSy - self.dSx.T @ (W * fy) @ self.Sy

    def tensor_rows(self, t11, t12, t22):
        """Rows Q[T : grad w_ij] for a symmetric tensor T."""
        W = self.quad.W
        return (self.dSx.T @ (W * (t11 - t22)) @ self.dSy
                + self.Sx.T @ (W * t12) @ self.ddSy
                - self.ddSx.T @ (W * t12) @ self.Sy)

    def solve(self, rows):
        return cho_solve(self._cho, np.asarray(rows, dtype=float).ravel()).reshape(self.shape)

    def project(self, fx, fy):
        self.check_resolution()
        return self.solve(self.vector_rows(fx, fy))

    def kinetic(self, c):
        c = self._coef(c).ravel()
        return 0.5 * float(c @ (self.gram @ c))

    def boundary_trace(self, c):
        """Tangential velocity at the edge quadrature nodes.

        Returns a dict edge -> (samples, weights); edges 'bottom', 'top' carry
        v_x along x, edges 'left', 'right' carry v_y along y. The normal
        component vanishes identically for these modes.
        """
        c = self._coef(c)
        out = {}
        for name, (S, dS, _) in zip(("bottom", "top"), self.ey):
            out[name] = (self.Sx @ c @ dS[0], self.quad.wx)
        for name, (S, dS, _) in zip(("left", "right"), self.ex):
            out[name] = (-(dS[0] @ c @ self.Sy.T), self.quad.wy)
        return out

    def boundary_normal(self, c):
        """Normal velocity at the edge nodes (identically zero up to round-off)."""
        c = self._coef(c)
        vals = []
        for S, dS, _ in self.ey:
            vals.append(-(self.dSx @ c @ S[0]))
        for S, dS, _ in self.ex:
            vals.append(S[0] @ c @ self.dSy.T)
        return np.concatenate(vals)

    def boundary_rows(self, traction):
        """Rows of the boundary integral of s . w_ij given tractions per edge."""
        rows = np.zeros(self.shape)
        for name, (S, dS, _) in zip(("bottom", "top"), self.ey):
            rows += np.outer(self.Sx.T @ (self.quad.wx * traction[name]), dS[0])
        for name, (S, dS, _) in zip(("left", "right"), self.ex):
            rows -= np.outer(dS[0], self.Sy.T @ (self.quad.wy * traction[name]))
        return rows

    def at_points(self, c, xs, ys):
        r = self.quad.rect
        sx, dsx, _ = sin_tables(xs, r.Lx, self.Nx)
        sy, dsy, _ = sin_tables(ys, r.Ly, self.Ny)
        c = self._coef(c)
        return sx @ c @ dsy.T, -(dsx @ c @ sy.T)


@dataclass
class Discretization:
    rect: Rectangle
    velocity_modes: tuple
    scalar_modes: tuple
    nodes: tuple | None = None

    def __post_init__(self):
        Nx, Ny = (int(v) for v in self.velocity_modes)
        Mx, My = (int(v) for v in self.scalar_modes)
        if self.nodes is None:
            self.nodes = (auto_nodes(max(Nx, Mx - 1)), auto_nodes(max(Ny, My - 1)))
        self.quad = Quadrature(self.rect, int(self.nodes[0]), int(self.nodes[1]))
        self.scalar = ScalarBasis(self.quad, Mx, My)
        self.velocity = VelocityBasis(self.quad, Nx, Ny)
        self.scalar.check_resolution()
        self.velocity.check_resolution()

    @property
    def sizes(self):
        return self.velocity.size, self.scalar.size
