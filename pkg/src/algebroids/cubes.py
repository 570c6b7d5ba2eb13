"""Grid cubes over an algebroid chart: construction, calculus and surgery.

A cube of dimension n is a uniform (N+1)-node grid on [0, 1]^n carrying
a base path ``gamma`` into the chart and, for each time axis, a field of
frame coefficients.  The morphism residual measures how far the data is
from an algebroid morphism out of the tangent algebroid of the cube; all
higher operations (faces, degeneracies, reversal, reparametrization and
concatenation) preserve that property up to grid error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .core import Algebroid, Chart, Section, eval_exprs, make_cotangent_poisson, make_tangent
from .expr import as_expr

__all__ = [
    "Cube",
    "ChartEscapeError",
    "MorphismResidual",
    "morphism_residual",
    "sphere_defect",
    "is_sphere",
    "homotopy_defect",
    "is_homotopy",
    "face",
    "degeneracy",
    "reverse",
    "cutoff",
    "cutoff_prime",
    "reparam_cutoff",
    "concat",
    "commutation_residual",
    "cube_from_sections",
    "tangent_lift",
    "cotangent_lift",
    "path_cube",
    "grid_times",
    "save_cube",
    "load_cube",
]


class ChartEscapeError(ValueError):
    """A constructed base path left the chart box."""


def default_time_names(n: int) -> tuple[str, ...]:
    return tuple(f"t{i + 1}" for i in range(n))


def grid_times(n: int, N: int) -> list[np.ndarray]:
    """Node-value meshes for each time axis, each of shape (N+1,)*n."""
    return [idx / N for idx in np.indices((N + 1,) * n).astype(float)]


@dataclass(frozen=True, eq=False)
class Cube:
    """Sampled cube: base points and per-axis frame coefficients.

    ``gamma`` has shape (N+1,)*n + (dim,), ``coeffs`` has shape
    (n,) + (N+1,)*n + (rank,) with ``coeffs[i]`` the coefficient field of
    time axis i.  Arrays are copied and frozen on construction.
    """

    algebroid: Algebroid
    gamma: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        c = np.array(self.coeffs, dtype=float)
        n = c.shape[0] if c.ndim > 0 else 0
        if n < 1 or c.ndim != n + 2 or g.ndim != n + 1:
            raise ValueError("gamma must be grid + point, coeffs must be (axes,) + grid + frame")
        axis_sizes = set(g.shape[:-1]) | set(c.shape[1:-1])
        if len(axis_sizes) != 1:
            raise ValueError("all grid axes must have the same node count")
        if axis_sizes.pop() < 3:
            raise ValueError("need at least three nodes per axis")
        if g.shape[-1] != self.algebroid.chart.dim:
            raise ValueError("gamma points do not match the chart dimension")
        if c.shape[-1] != self.algebroid.rank:
            raise ValueError("coefficient fields do not match the algebroid rank")
        if not self.algebroid.chart.contains(g, tol=1e-8):
            raise ChartEscapeError("cube base points leave the chart box")
        g.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def N(self) -> int:
        return self.gamma.shape[0] - 1

    @property
    def basepoint(self) -> np.ndarray:
        return self.gamma[(0,) * self.n]


class MorphismResidual(NamedTuple):
    structure: float
    base: float


def morphism_residual(cube: Cube) -> MorphismResidual:
    """Sup-norm defect of the morphism equations on the grid.

    The base part compares each grid derivative of gamma with the anchor
    image of the matching coefficient field; the structure part compares
    the antisymmetrized grid derivatives of the coefficient fields with
    their pointwise bracket.  Derivatives are second-order differences,
    so exact data shows an O(N^-2) residual.
    """
    n, N = cube.n, cube.N
    h = 1.0 / N
    A = cube.algebroid
    rho = A.anchor_values(cube.gamma)
    base = 0.0
    for i in range(n):
        dgamma = np.gradient(cube.gamma, h, axis=i, edge_order=2)
        img = np.einsum("...p,...pm->...m", cube.coeffs[i], rho)
        if dgamma.size:
            base = max(base, float(np.max(np.abs(dgamma - img))))
    structure = 0.0
    if n >= 2:
        cvals = A.structure_values(cube.gamma)
        for i in range(n):
            for j in range(i + 1, n):
                res = (
                    np.gradient(cube.coeffs[i], h, axis=j, edge_order=2)
                    - np.gradient(cube.coeffs[j], h, axis=i, edge_order=2)
                    - np.einsum("...p,...q,...pql->...l", cube.coeffs[i], cube.coeffs[j], cvals)
                )
                structure = max(structure, float(np.max(np.abs(res))))
    return MorphismResidual(structure=structure, base=base)


# --- boundary classification -------------------------------------------------


def sphere_defect(cube: Cube) -> float:
    """How far the cube is from having a fully collapsed boundary.

    Measures every coefficient field on the boundary slabs of the other
    axes, plus the spread of gamma over the whole boundary relative to
    the basepoint.
    """
    n, N = cube.n, cube.N
    worst = 0.0
    for k in range(n):
        for l in range(n):
            if l == k:
                continue
            for end in (0, N):
                sl = np.take(cube.coeffs[k], end, axis=l)
                worst = max(worst, float(np.max(np.abs(sl))))
    bp = cube.basepoint
    for l in range(n):
        for end in (0, N):
            g = np.take(cube.gamma, end, axis=l)
            worst = max(worst, float(np.max(np.abs(g - bp))))
    return worst


def is_sphere(cube: Cube, tol: float = 1e-8) -> bool:
    return sphere_defect(cube) < tol


def homotopy_defect(cube: Cube) -> float:
    """Boundary defect of the last axis read as a deformation parameter."""
    n, N = cube.n, cube.N
    if n < 2:
        raise ValueError("a homotopy needs at least two axes")
    worst = 0.0
    for k in range(n - 1):
        for end in (0, N):
            sl = np.take(cube.coeffs[n - 1], end, axis=k)
            worst = max(worst, float(np.max(np.abs(sl))))
    return worst


def is_homotopy(cube: Cube, tol: float = 1e-8) -> bool:
    return homotopy_defect(cube) < tol


# --- elementary surgery -------------------------------------------------------


def face(cube: Cube, axis: int, end: int) -> Cube:
    """Restrict to the slab ``t_axis = end`` and drop that axis."""
    if cube.n < 2:
        raise ValueError("faces of a 1-cube are points; compare endpoints instead")
    if end not in (0, 1):
        raise ValueError("end must be 0 or 1")
    idx = 0 if end == 0 else cube.N
    gamma = np.take(cube.gamma, idx, axis=axis)
    comps = [np.take(cube.coeffs[i], idx, axis=axis) for i in range(cube.n) if i != axis]
    return Cube(cube.algebroid, gamma, np.stack(comps))


def degeneracy(cube: Cube, axis: int) -> Cube:
    """Insert a constant time axis at position ``axis`` with zero coefficients."""
    n, N = cube.n, cube.N
    if not 0 <= axis <= n:
        raise ValueError(f"axis must be in 0..{n}")
    gamma = np.repeat(np.expand_dims(cube.gamma, axis), N + 1, axis=axis)
    comps = []
    for i in range(n + 1):
        if i == axis:
            comps.append(np.zeros(gamma.shape[:-1] + (cube.algebroid.rank,)))
        else:
            src = cube.coeffs[i if i < axis else i - 1]
            comps.append(np.repeat(np.expand_dims(src, axis), N + 1, axis=axis))
    return Cube(cube.algebroid, gamma, np.stack(comps))


def reverse(cube: Cube, axis: int) -> Cube:
    """Run one time axis backwards; its coefficient field flips sign."""
    if not 0 <= axis < cube.n:
        raise ValueError(f"axis must be in 0..{cube.n - 1}")
    gamma = np.flip(cube.gamma, axis=axis)
    comps = [np.flip(cube.coeffs[i], axis=axis) for i in range(cube.n)]
    comps[axis] = -comps[axis]
    return Cube(cube.algebroid, gamma, np.stack(comps))


def coarsen(cube: Cube) -> Cube:
    """Drop every other grid node along each time axis (requires even N).

    The surviving nodes sit at the same times, so the result is the same map
    sampled on the half-resolution grid.  Comparing a quantity computed at N
    and at N/2 gives a cheap Richardson-style error estimate.
    """
    if cube.N % 2 != 0:
        raise ValueError("coarsen needs an even number of steps")
    sl = (slice(None, None, 2),) * cube.n
    gamma = cube.gamma[sl]
    comps = cube.coeffs[(slice(None),) + sl]
    return Cube(cube.algebroid, gamma, comps)


def resample(cube: Cube, M: int) -> Cube:
    """Sample the same map on a uniform grid with M steps per axis.

    The parametrization is unchanged, so coefficient fields carry no
    reparametrization factor; node values come from cubic splines through
    the existing grid.  On even N with M = N/2 this agrees with
    :func:`coarsen` up to spline evaluation at the knots.
    """
    if M < 3:
        raise ValueError("resampling needs at least three steps")
    ts = np.linspace(0.0, 1.0, M + 1)
    gamma = cube.gamma
    comps = [cube.coeffs[i] for i in range(cube.n)]
    for axis in range(cube.n):
        gamma = _resample_axis(gamma, axis, ts)
        comps = [_resample_axis(c, axis, ts) for c in comps]
    return Cube(cube.algebroid, gamma, np.stack(comps))


# --- boundary-flattening reparametrization ------------------------------------

_TABLE_NODES = 8193


def _bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
    return out


@lru_cache(maxsize=1)
def _cutoff_table():
    s = np.linspace(0.0, 1.0, _TABLE_NODES)
    cum = cumulative_simpson(_bump(s), x=s, initial=0.0)
    total = float(cum[-1])
    spline = CubicSpline(s, cum / total, bc_type=((1, 0.0), (1, 0.0)))
    return spline, total


def cutoff(t) -> np.ndarray:
    """Smooth monotone [0,1] -> [0,1] map, flat to all orders at both ends."""
    spline, _ = _cutoff_table()
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return np.clip(spline(t), 0.0, 1.0)


def cutoff_prime(t) -> np.ndarray:
    _, total = _cutoff_table()
    return _bump(t) / total


def _resample_axis(arr: np.ndarray, axis: int, positions: np.ndarray) -> np.ndarray:
    N = arr.shape[axis] - 1
    ts = np.linspace(0.0, 1.0, N + 1)
    return CubicSpline(ts, arr, axis=axis)(positions)


def reparam_cutoff(cube: Cube) -> Cube:
    """Reparametrize every axis by the cutoff map.

    The cube sweeps the same geometry but each coefficient field gains a
    factor that vanishes to all orders at the ends of its own axis, so a
    cube whose boundary data merely vanishes becomes one whose boundary
    data vanishes flatly.
    """
    n, N = cube.n, cube.N
    ts = np.linspace(0.0, 1.0, N + 1)
    pos = cutoff(ts)
    weights = cutoff_prime(ts)
    gamma = cube.gamma
    comps = [cube.coeffs[i] for i in range(n)]
    for axis in range(n):
        gamma = _resample_axis(gamma, axis, pos)
        comps = [_resample_axis(c, axis, pos) for c in comps]
        shape = [1] * comps[axis].ndim
        shape[axis] = N + 1
        comps[axis] = comps[axis] * weights.reshape(shape)
    return Cube(cube.algebroid, gamma, np.stack(comps))


def concat(first: Cube, second: Cube, axis: int, tol: float = 1e-6) -> Cube:
    """Glue two cubes along one axis, traversing ``first`` then ``second``.

    The shared face (end of ``first``, start of ``second``) must agree
    within ``tol``.  Each half is slowed to a flat stop at the seam, so
    the result is again a morphism cube up to grid error, on the same
    node count as the inputs.
    """
    if first.algebroid != second.algebroid:
        raise ValueError("cannot concatenate cubes over different algebroids")
    if first.n != second.n or first.N != second.N:
        raise ValueError("cubes must have matching dimension and node count")
    n, N = first.n, first.N
    if not 0 <= axis < n:
        raise ValueError(f"axis must be in 0..{n - 1}")

    if n >= 2:
        f_end = face(first, axis, 1)
        f_start = face(second, axis, 0)
        gap = max(
            float(np.max(np.abs(f_end.gamma - f_start.gamma))),
            float(np.max(np.abs(f_end.coeffs - f_start.coeffs))),
        )
    else:
        gap = float(np.max(np.abs(np.take(first.gamma, N, axis=0) - np.take(second.gamma, 0, axis=0))))
    if gap > tol:
        raise ValueError(f"cubes are not composable along axis {axis}: face gap {gap:.3e}")

    ts = np.linspace(0.0, 1.0, N + 1)
    lo = ts <= 0.5
    pos_first = cutoff(2.0 * ts[lo])
    pos_second = cutoff(2.0 * ts[~lo] - 1.0)
    weights = np.where(lo, 2.0 * cutoff_prime(2.0 * ts), 2.0 * cutoff_prime(2.0 * ts - 1.0))

    def glue(arr_first, arr_second, scaled):
        out = np.concatenate(
            [_resample_axis(arr_first, axis, pos_first), _resample_axis(arr_second, axis, pos_second)],
            axis=axis,
        )
        if scaled:
            shape = [1] * out.ndim
            shape[axis] = N + 1
            out = out * weights.reshape(shape)
        return out

    gamma = glue(first.gamma, second.gamma, False)
    comps = [glue(first.coeffs[i], second.coeffs[i], i == axis) for i in range(n)]
    return Cube(first.algebroid, gamma, np.stack(comps))


# --- cubes from time-dependent section families --------------------------------


def _coerce_sections(A: Algebroid, sections: Sequence) -> list[Section]:
    out = []
    for s in sections:
        sec = s if isinstance(s, Section) else Section.of(s)
        if len(sec) != A.rank:
            raise ValueError("each section needs one coefficient per frame element")
        out.append(sec)
    return out


def _check_time_names(chart: Chart, names: Sequence[str]):
    clash = set(names) & set(chart.coords)
    if clash:
        raise ValueError(f"time names collide with chart coordinates: {sorted(clash)}")
    if len(set(names)) != len(names):
        raise ValueError("time names must be distinct")


def commutation_residual(
    A: Algebroid,
    sections: Sequence,
    n_points: int = 50,
    seed: int = 0,
    time_names: Sequence[str] | None = None,
) -> float:
    """Largest curvature of a time-dependent family over sampled (t, x).

    For each pair of axes this evaluates the difference between the
    crossed time derivatives and the pointwise bracket; a commuting
    family (the integrability hypothesis behind ``cube_from_sections``)
    gives zero.
    """
    secs = _coerce_sections(A, sections)
    n = len(secs)
    names = tuple(time_names) if time_names is not None else default_time_names(n)
    _check_time_names(A.chart, names)
    rng = np.random.default_rng(seed)
    pts = A.chart.sample(n_points, rng)
    tvals = rng.uniform(size=(n_points, n))
    env = A.chart.env(pts)
    env.update({names[i]: tvals[:, i] for i in range(n)})
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            kappa = Section(
                tuple(a.diff(names[j]) for a in secs[i].components)
            ) - Section(tuple(a.diff(names[i]) for a in secs[j].components)) - A.bracket(secs[i], secs[j])
            vals = eval_exprs(kappa.components, env, (n_points,))
            worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def cube_from_sections(
    A: Algebroid,
    sections: Sequence,
    basepoint,
    N: int,
    order: Sequence[int] | None = None,
    time_names: Sequence[str] | None = None,
) -> Cube:
    """Sweep a cube by flowing along a family of time-dependent sections.

    Axis k is integrated with a classical fourth-order step along its
    anchor image, holding already-processed axes at their node values and
    the not-yet-processed ones at zero.  For a commuting family the
    result is independent of ``order`` up to integration error.
    """
    secs = _coerce_sections(A, sections)
    n = len(secs)
    if n < 1:
        raise ValueError("need at least one section")
    names = tuple(time_names) if time_names is not None else default_time_names(n)
    if len(names) != n:
        raise ValueError("need one time name per section")
    _check_time_names(A.chart, names)
    order = tuple(order) if order is not None else tuple(range(n))
    if sorted(order) != list(range(n)):
        raise ValueError(f"order must be a permutation of 0..{n - 1}")

    m = A.chart.dim
    bp = np.asarray(basepoint, dtype=float).reshape(m)
    h = 1.0 / N
    G = bp.copy()  # grid over processed axes (in processing order) + point

    for stage, k in enumerate(order):
        S = G.shape[:-1]
        B = int(np.prod(S, dtype=int)) if S else 1
        t_fixed = np.indices(S, dtype=float).reshape(stage, B) / N if stage else np.zeros((0, B))
        new = np.empty(S + (N + 1, m))
        new[..., 0, :] = G

        if m == 0:
            for s in range(N):
                new[..., s + 1, :] = G
            G = new
            continue

        def field(t: float, X: np.ndarray) -> np.ndarray:
            env = {name: X[:, a] for a, name in enumerate(A.chart.coords)}
            for l in range(stage):
                env[names[order[l]]] = t_fixed[l]
            env[names[k]] = t
            for l in range(stage + 1, n):
                env[names[order[l]]] = 0.0
            avals = eval_exprs(secs[k].components, env, (B,))
            rho = eval_exprs(A.anchor, env, (B,))
            return np.einsum("bp,bpm->bm", avals, rho)

        X = G.reshape(B, m).copy()
        for s in range(N):
            t0 = s * h
            k1 = field(t0, X)
            k2 = field(t0 + h / 2, X + (h / 2) * k1)
            k3 = field(t0 + h / 2, X + (h / 2) * k2)
            k4 = field(t0 + h, X + h * k3)
            X = X + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            new[..., s + 1, :] = X.reshape(S + (m,))
        G = new

    inv = tuple(int(i) for i in np.argsort(order))
    gamma = np.transpose(G, axes=inv + (n,))
    if not A.chart.contains(gamma, tol=1e-8):
        raise ChartEscapeError("flow left the chart box; shrink the time box or enlarge the chart")

    times = grid_times(n, N)
    env = A.chart.env(gamma)
    env.update({names[i]: times[i] for i in range(n)})
    comps = [eval_exprs(secs[i].components, env, gamma.shape[:-1]) for i in range(n)]
    return Cube(A, gamma, np.stack(comps))


# --- cubes from explicit maps ---------------------------------------------------


def tangent_lift(
    chart: Chart,
    components: Sequence,
    n: int,
    N: int,
    time_names: Sequence[str] | None = None,
) -> Cube:
    """Velocity lift of an explicit map of the cube into the chart.

    ``components`` give the chart coordinates of the map as expressions
    in the time variables; the coefficient fields are the exact partial
    velocities, so the only morphism defect is the grid derivative error.
    """
    names = tuple(time_names) if time_names is not None else default_time_names(n)
    if len(names) != n:
        raise ValueError("need one time name per axis")
    _check_time_names(chart, names)
    exprs = [as_expr(c) for c in components]
    if len(exprs) != chart.dim:
        raise ValueError("need one component per chart coordinate")
    for e in exprs:
        extra = e.variables() - set(names)
        if extra:
            raise ValueError(f"map components may only use time variables, found {sorted(extra)}")
    times = grid_times(n, N)
    env = {names[i]: times[i] for i in range(n)}
    base = times[0].shape if n else ()
    gamma = eval_exprs(tuple(exprs), env, base)
    comps = [
        eval_exprs(tuple(e.diff(names[i]) for e in exprs), env, base)
        for i in range(n)
    ]
    return Cube(make_tangent(chart), gamma, np.stack(comps))


def cotangent_lift(
    chart: Chart,
    bivector,
    components: Sequence,
    n: int,
    N: int,
    time_names: Sequence[str] | None = None,
) -> Cube:
    """Lift a map into a rank-2 chart through an invertible bivector.

    The velocity of the map is rewritten in the coordinate-differential
    frame of the cotangent algebroid of the bivector, which must be
    nowhere zero along the swept region.
    """
    if chart.dim != 2:
        raise ValueError("cotangent lifting is implemented for two-dimensional charts")
    tangent = tangent_lift(chart, components, n, N, time_names=time_names)
    A = make_cotangent_poisson(chart, bivector)
    entry = A.anchor[0][1]  # the single independent bivector entry
    pvals = eval_exprs(entry, chart.env(tangent.gamma), tangent.gamma.shape[:-1])
    if np.any(np.abs(pvals) < 1e-12):
        raise ValueError("bivector vanishes along the swept region; cannot invert")
    comps = []
    for i in range(n):
        v = tangent.coeffs[i]
        comps.append(np.stack([v[..., 1] / pvals, -v[..., 0] / pvals], axis=-1))
    return Cube(A, tangent.gamma, np.stack(comps))


def path_cube(
    A: Algebroid,
    gamma_components: Sequence,
    coeff_components: Sequence,
    N: int,
    time_name: str = "t1",
) -> Cube:
    """One-dimensional cube from explicit path and coefficient expressions."""
    _check_time_names(A.chart, (time_name,))
    gexprs = [as_expr(c) for c in gamma_components]
    cexprs = [as_expr(c) for c in coeff_components]
    if len(gexprs) != A.chart.dim or len(cexprs) != A.rank:
        raise ValueError("component counts must match chart dimension and rank")
    ts = np.linspace(0.0, 1.0, N + 1)
    env = {time_name: ts}
    gamma = eval_exprs(tuple(gexprs), env, (N + 1,))
    genv = A.chart.env(gamma)
    genv[time_name] = ts
    coeffs = eval_exprs(tuple(cexprs), genv, (N + 1,))
    return Cube(A, gamma, coeffs[np.newaxis, ...])


# --- serialization ---------------------------------------------------------------


def save_cube(cube: Cube, path) -> None:
    """Write the cube grid as JSON with row-major nested lists."""
    payload = {
        "n": cube.n,
        "N": cube.N,
        "r": cube.algebroid.rank,
        "m": cube.algebroid.chart.dim,
        "basepoint": cube.basepoint.tolist(),
        "gamma": cube.gamma.tolist(),
        "a": cube.coeffs.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_cube(path, A: Algebroid) -> Cube:
    """Read a cube saved by :func:`save_cube` and bind it to an algebroid."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload["r"] != A.rank or payload["m"] != A.chart.dim:
        raise ValueError(
            f"cube file is rank {payload['r']} over a {payload['m']}-dimensional chart, "
            f"algebroid is rank {A.rank} over {A.chart.dim} coordinates"
        )
    gamma = np.asarray(payload["gamma"], dtype=float)
    coeffs = np.asarray(payload["a"], dtype=float)
    cube = Cube(A, gamma, coeffs)
    if cube.n != payload["n"] or cube.N != payload["N"]:
        raise ValueError("cube file header disagrees with its array shapes")
    return cube
