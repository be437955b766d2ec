# === fbac_lab/expressions.py ===

import re
from typing import List

import numpy as np
import sympy as sp

from fbac_lab.errors import ConfigError

X1, X2 = sp.symbols("x1 x2", real=True)
_BASE_SYMBOLS = (X1, X2)

# Tokens of the seed-graph micro-grammar. Anything else is rejected before sympy sees it.
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(\*\*|[-+*/()])|([A-Za-z_]\w*))")
_NAMES = {"x", "x1", "x2", "pi", "cos", "sin"}
_UNICODE = {"·": "*", "−": "-", "π": "pi", "^": "**", "×": "*"}


def normalize_expression(text: str) -> str:
    """Map the unicode spellings of the grammar to ASCII."""
    out = str(text).strip()
    for src, dst in _UNICODE.items():
        out = out.replace(src, dst)
    return out


def _check_tokens(text: str):
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ConfigError("gamma0", f"unexpected character {text[pos]!r} at offset {pos} in '{text}'")
        name = m.group(3)
        if name is not None and name not in _NAMES:
            raise ConfigError("gamma0", f"unknown name '{name}' (allowed: {', '.join(sorted(_NAMES))})")
        pos = m.end()


class SeedGraph:
    """
    Closed-form seed graph gamma0 over the base B=[-1,1]^n, parsed from the
    micro-grammar (constants, x, x1, x2, + - * /, cos, sin, pi). `x` is x1.
    Evaluation and the analytic gradient are vectorized over base points (..., n).
    """

    def __init__(self, text: str, base_dim: int = 1):
        if base_dim not in (1, 2):
            raise ConfigError("base_dim", f"must be 1 or 2, got {base_dim}")
        self.text = normalize_expression(text)
        self.base_dim = base_dim
        if not self.text:
            raise ConfigError("gamma0", "empty expression")
        _check_tokens(self.text)

        local_dict = {"x": X1, "x1": X1, "x2": X2, "pi": sp.pi, "cos": sp.cos, "sin": sp.sin}
        try:
            expr = sp.sympify(self.text, locals=local_dict)
        except (sp.SympifyError, SyntaxError, TypeError) as e:
            raise ConfigError("gamma0", f"cannot parse '{self.text}': {e}")

        allowed = set(_BASE_SYMBOLS[:base_dim])
        extra = expr.free_symbols - allowed
        if extra:
            raise ConfigError("gamma0", f"uses {sorted(map(str, extra))} but the base has dimension {base_dim}")

        self.expr = expr
        symbols = list(_BASE_SYMBOLS[:base_dim])
        self._fn = sp.lambdify(symbols, expr, modules="numpy")
        self._grad_fns = [sp.lambdify(symbols, sp.diff(expr, s), modules="numpy") for s in symbols]

    def __str__(self) -> str:
        return sp.sstr(self.expr)

    def __repr__(self) -> str:
        return f"SeedGraph({str(self)!r}, base_dim={self.base_dim})"

    def _args(self, base_points) -> List[np.ndarray]:
        pts = np.asarray(base_points, dtype=float)
        if pts.shape[-1] != self.base_dim:
            raise ValueError(f"expected base points with {self.base_dim} coordinates, got shape {pts.shape}")
        return [pts[..., k] for k in range(self.base_dim)]

    @staticmethod
    def _full(value, like: np.ndarray) -> np.ndarray:
        # lambdify returns a bare scalar for constant expressions
        return np.broadcast_to(np.asarray(value, dtype=float), like.shape).astype(float)

    def __call__(self, base_points) -> np.ndarray:
        args = self._args(base_points)
        return self._full(self._fn(*args), args[0])

    def gradient(self, base_points) -> np.ndarray:
        args = self._args(base_points)
        return np.stack([self._full(g(*args), args[0]) for g in self._grad_fns], axis=-1)

    def sup_abs(self, samples: int = 401) -> float:
        """sup |gamma0| over B, by dense sampling."""
        axis = np.linspace(-1.0, 1.0, samples if self.base_dim == 1 else 101)
        mesh = np.stack(np.meshgrid(*([axis] * self.base_dim), indexing="ij"), axis=-1)
        return float(np.abs(self(mesh)).max())
