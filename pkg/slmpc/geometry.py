#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Polytopic sets: boxes, H-rep and V-rep polytopes.

V-rep is used for learned sets (sample hulls), H-rep for the constraint
sets X and U. H/V conversion is only done in the plane.
"""
import itertools
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Union

import numpy as np  # type: ignore
from scipy.spatial import ConvexHull, QhullError  # type: ignore

from ._exceptions import (
    ConfigurationError,
    DimensionMismatch,
    DimensionTooLarge,
    Unbounded,
)
from ._settings import COLLINEAR_TOL, DEDUP_TOL, HULL_MEMBERSHIP_TOL, MAX_BOX_DIM
from .optkit import LinearProgram, LpStatus, solve_lp


@dataclass(frozen=True)
class Box:
    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'center', np.asarray(self.center, dtype=float))
        object.__setattr__(self, 'radius', np.asarray(self.radius, dtype=float))
        if self.center.shape != self.radius.shape:
            raise DimensionMismatch('Box center and radius differ in shape')
        if np.any(self.radius < 0):
            raise ConfigurationError('Box radius must be nonnegative')

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])


@dataclass(frozen=True)
class HPolytope:
    """{x : Fx <= g}; checked bounded and nonempty on construction."""

    F: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'F', np.atleast_2d(np.asarray(self.F, dtype=float)))
        object.__setattr__(self, 'g', np.asarray(self.g, dtype=float).ravel())
        if self.F.shape[0] != self.g.shape[0]:
            raise DimensionMismatch('H-rep rows {} vs offsets {}'.format(
                self.F.shape[0], self.g.shape[0]))
        for d in np.vstack([np.eye(self.dim), -np.eye(self.dim)]):
            support(self, d)

    @property
    def dim(self) -> int:
        return int(self.F.shape[1])


@dataclass(frozen=True)
class VPolytope:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, 'vertices', _dedup(v))

    @property
    def dim(self) -> int:
        return int(self.vertices.shape[1])

    def __len__(self) -> int:
        return int(self.vertices.shape[0])


Polytope = Union[Box, HPolytope, VPolytope]


def _dedup(points: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """
    Removes duplicate rows on a tol-sized grid, keeping first occurrences
    """
    if len(points) <= 1:
        return points
    keys = np.round(points / tol)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def box_to_hrep(b: Box) -> HPolytope:
    n = b.dim
    F = np.vstack([np.eye(n), -np.eye(n)])
    g = np.concatenate([b.center + b.radius, b.radius - b.center])
    return HPolytope(F, g)


def box_vertices(b: Box) -> np.ndarray:
    """All 2^n corners of a box (fewer when some radius is 0)

    input  - Box
    return - array (m, n) of vertices
    """
    if b.dim > MAX_BOX_DIM:
        msg = 'Box of dimension {} exceeds the vertex enumeration limit {}'
        raise DimensionTooLarge(msg.format(b.dim, MAX_BOX_DIM))
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=b.dim)))
    return _dedup(b.center + signs * b.radius)


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _prune_collinear(ring: np.ndarray) -> np.ndarray:
    """
    Drops ring vertices lying on the segment of their neighbours; the
    tolerance scales with the squared extent of the ring
    """
    if len(ring) < 3:
        return ring
    extent = float(np.max(np.ptp(ring, axis=0)))
    tol = COLLINEAR_TOL * extent * extent
    keep = [
        i
        for i in range(len(ring))
        if abs(_cross(ring[i - 1], ring[i], ring[(i + 1) % len(ring)])) > tol
    ]
    if len(keep) < 3:
        return ring
    return ring[keep]


def convex_hull_2d(points: Union[np.ndarray, Sequence[Sequence[float]]]) -> VPolytope:
    """Extreme points of a planar point cloud, counter-clockwise

    input  - (k, 2) points
    return - VPolytope; degenerate clouds give point or segment hulls
    """
    pts = _dedup(np.atleast_2d(np.asarray(points, dtype=float)))
    if pts.shape[1] != 2:
        raise DimensionMismatch('convex_hull_2d needs planar points')
    if len(pts) == 1:
        return VPolytope(pts)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        # Collinear cloud: keep the two extremes along the principal direction.
        centered = pts - pts.mean(axis=0)
        direction = np.linalg.svd(centered)[2][0]
        proj = centered @ direction
        return VPolytope(pts[[int(np.argmin(proj)), int(np.argmax(proj))]])
    ring = _prune_collinear(pts[hull.vertices])
    return VPolytope(ring)


def minkowski_sum(p: VPolytope, q: VPolytope) -> VPolytope:
    """
    Hull of all pairwise vertex sums
    """
    if p.dim != q.dim:
        raise DimensionMismatch('Minkowski sum of {}-D and {}-D sets'.format(p.dim, q.dim))
    sums = (p.vertices[:, None, :] + q.vertices[None, :, :]).reshape(-1, p.dim)
    if p.dim == 2:
        return convex_hull_2d(sums)
    return VPolytope(sums)


def linear_image(p: VPolytope, M: np.ndarray) -> VPolytope:
    """
    Hull of {Mv} over the vertices of p
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != p.dim:
        raise DimensionMismatch('Map with {} columns on {}-D set'.format(M.shape[1], p.dim))
    image = p.vertices @ M.T
    if M.shape[0] == 2:
        return convex_hull_2d(image)
    if M.shape[0] == 1:
        return VPolytope(np.array([[image.min()], [image.max()]]))
    return VPolytope(image)


def scale(p: VPolytope, factor: float) -> VPolytope:
    return VPolytope(p.vertices * factor)


def support(p: Polytope, d: Union[np.ndarray, Sequence[float]]) -> float:
    """Support function max_{x in p} d'x

    input  - set, direction
    return - support value; Unbounded for unbounded H-rep
    """
    d = np.asarray(d, dtype=float)
    if isinstance(p, Box):
        return float(d @ p.center + np.abs(d) @ p.radius)
    if isinstance(p, VPolytope):
        return float(np.max(p.vertices @ d))
    sol = solve_lp(LinearProgram(-d, G=p.F, h=p.g))
    if sol.status == LpStatus.UNBOUNDED:
        raise Unbounded('H-rep set is unbounded along {}'.format(d.tolist()))
    if sol.status == LpStatus.INFEASIBLE:
        raise ConfigurationError('H-rep set is empty')
    return -sol.objective


def _vrep_distance_lp(x: np.ndarray, p: VPolytope) -> LinearProgram:
    # variables: lambda (k), s+ (n), s- (n)
    k, n = p.vertices.shape
    cost = np.concatenate([np.zeros(k), np.ones(2 * n)])
    F = np.zeros((n + 1, k + 2 * n))
    F[:n, :k] = p.vertices.T
    F[:n, k:k + n] = np.eye(n)
    F[:n, k + n:] = -np.eye(n)
    F[n, :k] = 1.0
    g = np.concatenate([x, [1.0]])
    return LinearProgram(cost, F=F, g=g, bounds=[(0.0, None)] * (k + 2 * n))


def _hrep_distance_lp(x: np.ndarray, p: HPolytope) -> LinearProgram:
    # variables: d (n), t (n); |x - d| <= t, F d <= g
    n = p.dim
    m = p.F.shape[0]
    cost = np.concatenate([np.zeros(n), np.ones(n)])
    G = np.zeros((2 * n + m, 2 * n))
    G[:n, :n] = -np.eye(n)
    G[:n, n:] = -np.eye(n)
    G[n:2 * n, :n] = np.eye(n)
    G[n:2 * n, n:] = -np.eye(n)
    G[2 * n:, :n] = p.F
    h = np.concatenate([-x, x, p.g])
    return LinearProgram(cost, G=G, h=h)


def set_distance_l1(x: Union[np.ndarray, Sequence[float]], p: Union[HPolytope, VPolytope]) -> float:
    """1-norm distance from x to a polytope

    input  - point, nonempty set
    return - inf_{d in p} ||x - d||_1
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != p.dim:
        raise DimensionMismatch('{}-D point against {}-D set'.format(x.shape[0], p.dim))
    if isinstance(p, HPolytope):
        if np.all(p.F @ x <= p.g):
            return 0.0
        lp = _hrep_distance_lp(x, p)
    else:
        if len(p) == 1:
            return float(np.sum(np.abs(x - p.vertices[0])))
        lp = _vrep_distance_lp(x, p)
    sol = solve_lp(lp)
    return max(0.0, sol.objective)


def contains(
    p: Union[HPolytope, VPolytope, Box],
    x: Union[np.ndarray, Sequence[float]],
    tol: float = HULL_MEMBERSHIP_TOL,
) -> bool:
    """Membership test with tolerance

    input  - set, point, tolerance
    return - True when x is in p (H-rep rows within tol, V-rep convex
             multipliers reproduce x within tol in 1-norm)
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != p.dim:
        raise DimensionMismatch('{}-D point against {}-D set'.format(x.shape[0], p.dim))
    if isinstance(p, Box):
        return bool(np.all(np.abs(x - p.center) <= p.radius + tol))
    if isinstance(p, HPolytope):
        return bool(np.all(p.F @ x <= p.g + tol))
    return set_distance_l1(x, p) <= tol


def all_vertices_in(inner: VPolytope, outer: Union[HPolytope, VPolytope], tol: float) -> bool:
    return all(contains(outer, v, tol) for v in inner.vertices)


def vrep_to_hrep_2d(p: VPolytope) -> HPolytope:
    """
    Facet description of a full-dimensional planar V-polytope
    """
    if p.dim != 2 or len(p) < 3:
        raise DimensionMismatch('H-rep conversion needs a full-dimensional planar set')
    ring = convex_hull_2d(p.vertices).vertices
    nxt = np.roll(ring, -1, axis=0)
    edge = nxt - ring
    normal = np.column_stack([edge[:, 1], -edge[:, 0]])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    return HPolytope(normal, np.einsum('ij,ij->i', normal, ring))


def hrep_to_vrep_2d(p: HPolytope) -> VPolytope:
    """
    Vertices of a bounded planar H-polytope by pairwise facet intersection
    """
    if p.dim != 2:
        raise DimensionMismatch('V-rep conversion is only done in the plane')
    points = []
    for i, j in itertools.combinations(range(p.F.shape[0]), 2):
        M = p.F[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, p.g[[i, j]])
        if np.all(p.F @ v <= p.g + 1e-9):
            points.append(v)
    return convex_hull_2d(np.array(points))


def pontryagin_difference(p: HPolytope, q: Union[VPolytope, Box]) -> HPolytope:
    """
    {x : x + q subset of p}; each offset shrinks by the support of q
    """
    g = np.array([p.g[i] - support(q, p.F[i]) for i in range(p.F.shape[0])])
    return HPolytope(p.F, g)


def to_dict(p: Polytope) -> Dict[str, Any]:
    if isinstance(p, Box):
        return {'type': 'box', 'center': p.center.tolist(), 'radius': p.radius.tolist()}
    if isinstance(p, HPolytope):
        return {'type': 'hrep', 'F': p.F.tolist(), 'g': p.g.tolist()}
    return {'type': 'vrep', 'vertices': p.vertices.tolist()}


def from_dict(d: Dict[str, Any]) -> Polytope:
    kind = d.get('type')
    if kind == 'box':
        return Box(np.array(d['center'], dtype=float), np.array(d['radius'], dtype=float))
    if kind == 'hrep':
        return HPolytope(np.array(d['F'], dtype=float), np.array(d['g'], dtype=float))
    if kind == 'vrep':
        return VPolytope(np.array(d['vertices'], dtype=float))
    raise ConfigurationError('Unknown set type "{}"'.format(kind))


def as_hrep(p: Polytope) -> HPolytope:
    if isinstance(p, Box):
        return box_to_hrep(p)
    if isinstance(p, VPolytope):
        return vrep_to_hrep_2d(p)
    return p

