"""
Newest-vertex bisection with closure
"""
import logging
from typing import Dict, Iterable, List, Set, Tuple

import numpy as np

from models.exceptions import MeshError
from models.mesh import Mesh, build_mesh

logger = logging.getLogger(__name__)


def _pair(a: int, b: int) -> Tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _refinement_pair(cell: Tuple[int, int, int], ref: int) -> Tuple[int, int]:
    return _pair(cell[(ref + 1) % 3], cell[(ref + 2) % 3])


def _close(cells: List[Tuple[int, int, int]], refs: List[int], marked_edges: Set[Tuple[int, int]]):
    """Mark the refinement edge of every cell that has a marked edge, until stable"""
    edge_cells: Dict[Tuple[int, int], List[int]] = {}
    for k, c in enumerate(cells):
        for j in range(3):
            edge_cells.setdefault(_pair(c[(j + 1) % 3], c[(j + 2) % 3]), []).append(k)

    queue = list(marked_edges)
    while queue:
        edge = queue.pop()
        for k in edge_cells.get(edge, ()):
            ref_edge = _refinement_pair(cells[k], refs[k])
            if ref_edge not in marked_edges:
                marked_edges.add(ref_edge)
                queue.append(ref_edge)
    return marked_edges


def refine(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """
    Bisect every marked cell at least once and close the refinement so the result is
    conforming. Children record the index of their coarse cell in parent_cells.
    """
    marked = sorted({int(k) for k in marked})
    if not marked:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.num_cells:
        raise MeshError("marked cell index out of range")

    cells = [tuple(int(v) for v in c) for c in mesh.cells]
    refs = [int(r) for r in mesh.refinement_edges]
    marked_edges = _close(cells, refs, {_refinement_pair(cells[k], refs[k]) for k in marked})

    points = [tuple(p) for p in mesh.vertices]
    midpoints: Dict[Tuple[int, int], int] = {}

    def midpoint(edge):
        if edge not in midpoints:
            a, b = edge
            points.append(tuple(0.5 * (np.asarray(points[a]) + np.asarray(points[b]))))
            midpoints[edge] = len(points) - 1
        return midpoints[edge]

    new_cells, new_refs, parents = [], [], []

    def bisect(cell, ref, parent):
        edge = _refinement_pair(cell, ref)
        if edge not in marked_edges:
            new_cells.append(cell)
            new_refs.append(ref)
            parents.append(parent)
            return
        apex, a, b = cell[ref], cell[(ref + 1) % 3], cell[(ref + 2) % 3]
        m = midpoint(edge)
        bisect((a, m, apex), 1, parent)
        bisect((m, b, apex), 0, parent)

    for k, (cell, ref) in enumerate(zip(cells, refs)):
        bisect(cell, ref, k)

    refined = build_mesh(points, new_cells, refinement_edges=new_refs, parent_cells=parents)
    logger.debug(f"Refined {len(marked)} marked cells: {mesh.num_cells} -> {refined.num_cells} cells")
    return refined


def uniform_refine(mesh: Mesh) -> Mesh:
    """Two bisection sweeps over all cells: every cell split into four, h halved"""
    once = refine(mesh, range(mesh.num_cells))
    twice = refine(once, range(once.num_cells))
    parents = np.asarray(once.parent_cells)[np.asarray(twice.parent_cells)]
    return build_mesh(twice.vertices, twice.cells, refinement_edges=twice.refinement_edges,
                      parent_cells=parents)
