"""
Domain errors raised by the mesh, field, solver and reconstruction layers
"""


class CurlRecError(Exception):
    """Base class for every error raised by curlrec"""


class MeshError(CurlRecError, ValueError):
    """Invalid mesh input"""


class NonConformingMeshError(MeshError):
    """Edges do not match exactly (hanging vertex or over-shared edge)"""


class InvertedCellError(MeshError):
    """Cell with nonpositive signed area"""


class DanglingVertexError(MeshError):
    """Vertex not referenced by any cell"""


class MeshFormatError(MeshError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class FieldFormatError(CurlRecError, ValueError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EdgeNotOnCellError(CurlRecError, KeyError):
    def __init__(self, cell: int, edge: int):
        self.cell = cell
        self.edge = edge
        super().__init__(f"edge {edge} is not an edge of cell {cell}")

    def __str__(self):
        return self.args[0]


class DegreeTooLowError(CurlRecError, ValueError):
    """The dG scheme needs p >= 1"""


class NoConvergenceError(CurlRecError, RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"CG stopped after {iterations} iterations with relative residual {residual:.3e} "
            f"(penalty too small or tolerance too tight)"
        )


class SingularPatchError(CurlRecError, RuntimeError):
    """Factorization breakdown of a vertex-patch system"""


class ExactSolutionReached(CurlRecError, ZeroDivisionError):
    """Error measure below the effectivity threshold; the discrete solution is exact"""


class ConfigError(CurlRecError, ValueError):
    """Invalid run configuration"""
