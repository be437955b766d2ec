# === fbac_lab/errors.py ===

from typing import Any, Optional


class FbacError(Exception):
    """
    Root of every error raised by fbac_lab. `detail` carries the offending datum
    (node index, key name, partial solution, ...) for callers that want more than
    the message.
    """

    def __init__(self, message: str, detail: Any = None):
        super().__init__(message)
        self.detail = detail


# --- grids and fields -------------------------------------------------------

class NonCommensurate(FbacError, ValueError):
    pass


class TooCoarse(FbacError, ValueError):
    pass


class OutOfDomain(FbacError, ValueError):
    pass


class TooNearBoundary(FbacError, ValueError):
    pass


class UnknownOracle(FbacError, KeyError):
    def __str__(self):
        # KeyError would quote the message otherwise
        return self.args[0]


class InvalidOracleParams(FbacError, ValueError):
    pass


class FormatError(FbacError):
    """Parse failure in one of the text formats; names the file and the line."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message, detail={"path": path, "line": line})
        self.path = path
        self.line = line


# --- configuration ----------------------------------------------------------

class ConfigError(FbacError, ValueError):
    """Invalid or missing configuration value; `key` names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}", detail=key)
        self.key = key


# --- solvers ----------------------------------------------------------------

class BadDelta(FbacError, ValueError):
    pass


class NonMonotoneColumn(FbacError):
    pass


class MaxIterations(FbacError):
    """Iteration cap reached; `detail` holds the partial Solution (or log)."""


class GraphCollision(FbacError):
    pass


class Divergence(FbacError):
    pass


class LinearSolveStall(FbacError):
    pass


# --- geometry ---------------------------------------------------------------

class NoCrossing(FbacError, ValueError):
    pass


class MultipleCrossings(FbacError, ValueError):
    pass


class DegenerateGradient(FbacError, ValueError):
    pass


class EmptyRegion(FbacError, ValueError):
    pass


class LeftDomain(FbacError):
    pass


class TooShort(FbacError, ValueError):
    pass


class NotHarmonic(FbacError):
    pass
