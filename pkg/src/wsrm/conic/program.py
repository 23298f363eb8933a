"""Real-valued second-order cone programs and the modeling helpers used to
assemble them.

A :class:`ConeProgram` is stated in the maximization form::

    maximize    c' y
    subject to  A y = b
                || F_j y + g_j ||_2 <= f_j' y + d_j      for every cone j

A cone with no ``F`` rows is a scalar inequality ``f_j' y + d_j >= 0``.
Each cone is stored as one block ``M_j y + v_j`` whose first row is the
right-hand side ``(f_j, d_j)`` and whose remaining rows are ``(F_j, g_j)``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = ["Affine", "ConeProgram", "add_hyperbolic", "add_geometric_mean_tree",
           "FORMAT_HEADER"]

FORMAT_HEADER = "# wsrm-coneprogram v1"


class Affine:
    """Affine form ``sum(coef[i] * y[idx[i]]) + const`` over program variables."""

    __slots__ = ("idx", "coef", "const")

    def __init__(self, idx=(), coef=(), const: float = 0.0):
        self.idx = np.asarray(idx, dtype=np.int64).ravel()
        self.coef = np.asarray(coef, dtype=float).ravel()
        if self.idx.shape != self.coef.shape:
            raise ValueError("idx and coef must have the same length")
        self.const = float(const)

    @classmethod
    def var(cls, i: int, coef: float = 1.0) -> "Affine":
        return cls([int(i)], [coef])

    @classmethod
    def constant(cls, value: float) -> "Affine":
        return cls((), (), value)

    @property
    def is_constant(self) -> bool:
        return self.idx.size == 0 or not np.any(self.coef)

    def value(self, y: np.ndarray) -> float:
        return float(self.coef @ np.asarray(y)[self.idx] + self.const)

    def __add__(self, other):
        other = _operand(other)
        return Affine(np.concatenate([self.idx, other.idx]),
                      np.concatenate([self.coef, other.coef]),
                      self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.idx, -self.coef, -self.const)

    def __sub__(self, other):
        return self + (-_operand(other))

    def __rsub__(self, other):
        return _operand(other) - self

    def __mul__(self, k):
        k = float(k)
        return Affine(self.idx, k * self.coef, k * self.const)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def __repr__(self):
        terms = " + ".join(f"{c:g}*y[{i}]" for i, c in zip(self.idx, self.coef))
        return f"Affine({terms or '0'} + {self.const:g})"


Expr = Union[Affine, int, np.integer, float]


def _operand(e) -> Affine:
    # inside arithmetic, plain numbers are constants (never variable indices)
    if isinstance(e, Affine):
        return e
    if isinstance(e, (int, float, np.integer, np.floating)):
        return Affine.constant(float(e))
    raise TypeError(f"cannot combine {e!r} with an affine form")


def _as_affine(e) -> Affine:
    if isinstance(e, Affine):
        return e
    if isinstance(e, (int, np.integer)):
        return Affine.var(int(e))
    raise TypeError(f"cannot interpret {e!r} as an affine form; wrap constants "
                    "with Affine.constant")


@dataclass
class _Cone:
    rows: list  # list[Affine]; rows[0] is the right-hand side of the norm bound

    @property
    def dim(self) -> int:
        return len(self.rows)


class ConeProgram:
    """Builder and container for a real SOCP (maximize convention).

    Variables are created with :meth:`add_vars`; constraints reference them
    through :class:`Affine` forms or bare variable indices.
    """

    def __init__(self):
        self.num_vars = 0
        self.var_names: list[str] = []
        self._obj = Affine()
        self._eqs: list[Affine] = []  # each encodes expr == 0
        self._cones: list[_Cone] = []

    # -- variables ---------------------------------------------------------
    def add_vars(self, n: int, name: str = "y") -> np.ndarray:
        start = self.num_vars
        self.num_vars += int(n)
        if n == 1:
            self.var_names.append(name)
        else:
            self.var_names.extend(f"{name}[{i}]" for i in range(n))
        return np.arange(start, start + n)

    def add_var(self, name: str = "y") -> int:
        return int(self.add_vars(1, name)[0])

    # -- objective and constraints ----------------------------------------
    def set_objective(self, expr: Expr) -> None:
        """Objective to be maximized."""
        self._obj = _as_affine(expr)

    @property
    def objective(self) -> Affine:
        return self._obj

    def add_equality(self, lhs: Expr, rhs: float | Expr = 0.0) -> int:
        """``lhs == rhs``; returns the equality id."""
        rhs = Affine.constant(rhs) if np.isscalar(rhs) else _as_affine(rhs)
        self._eqs.append(_as_affine(lhs) - rhs)
        return len(self._eqs) - 1

    def add_soc(self, rows: Sequence[Expr], bound: Expr) -> int:
        """``|| rows ||_2 <= bound``; returns the cone id."""
        self._cones.append(_Cone([_as_affine(bound)] + [_as_affine(r) for r in rows]))
        return len(self._cones) - 1

    def add_nonneg(self, expr: Expr) -> int:
        """``expr >= 0`` as a one-dimensional cone."""
        return self.add_soc([], expr)

    def add_le(self, lhs: Expr, rhs: Expr | float) -> int:
        rhs = Affine.constant(rhs) if np.isscalar(rhs) else _as_affine(rhs)
        return self.add_nonneg(rhs - _as_affine(lhs))

    @property
    def num_equalities(self) -> int:
        return len(self._eqs)

    @property
    def num_cones(self) -> int:
        return len(self._cones)

    def cone_dims(self) -> list[int]:
        return [c.dim for c in self._cones]

    def cone_rows(self, j: int) -> list[Affine]:
        return list(self._cones[j].rows)

    # -- dense data ----------------------------------------------------------
    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        np.add.at(c, self._obj.idx, self._obj.coef)
        return c

    def equality_data(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.zeros((len(self._eqs), self.num_vars))
        b = np.zeros(len(self._eqs))
        for r, e in enumerate(self._eqs):
            np.add.at(A[r], e.idx, e.coef)
            b[r] = -e.const
        return A, b

    def cone_data(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Block ``(M, v)`` with the cone stated as ``M y + v`` in the SOC."""
        rows = self._cones[j].rows
        M = np.zeros((len(rows), self.num_vars))
        v = np.empty(len(rows))
        for r, e in enumerate(rows):
            np.add.at(M[r], e.idx, e.coef)
            v[r] = e.const
        return M, v

    # -- evaluation ----------------------------------------------------------
    def objective_value(self, y: np.ndarray) -> float:
        return self._obj.value(y)

    def cone_slack(self, j: int, y: np.ndarray) -> float:
        """``bound - ||rows||``; nonnegative iff cone ``j`` holds at ``y``."""
        vals = np.array([e.value(y) for e in self._cones[j].rows])
        return float(vals[0] - np.linalg.norm(vals[1:]))

    def equality_residual(self, y: np.ndarray) -> np.ndarray:
        return np.array([e.value(y) for e in self._eqs])

    def max_violation(self, y: np.ndarray) -> float:
        """Largest equality or cone violation at ``y`` (0 when feasible)."""
        worst = 0.0
        if self._eqs:
            worst = float(np.max(np.abs(self.equality_residual(y))))
        for j in range(len(self._cones)):
            worst = max(worst, -self.cone_slack(j, y))
        return worst

    # -- sparse-triplet text format ------------------------------------------
    def to_text(self) -> str:
        """Serialize as line-oriented sparse triplets.

        ``vars n``, ``name i label``, ``obj col val`` (maximize),
        ``eq row col val``, ``eqrhs row val``, ``cone id dim``,
        ``coneM id row col val`` and ``conev id row val``. Row 0 of a cone
        block is the right-hand side of the norm bound.
        """
        out = io.StringIO()
        out.write(f"{FORMAT_HEADER}\n")
        out.write(f"vars {self.num_vars}\n")
        for i, name in enumerate(self.var_names):
            out.write(f"name {i} {name}\n")
        c = self.objective_vector()
        for i in np.flatnonzero(c):
            out.write(f"obj {i} {float(c[i])!r}\n")
        if self._obj.const:
            out.write(f"objconst {float(self._obj.const)!r}\n")
        A, b = self.equality_data()
        out.write(f"eqs {A.shape[0]}\n")
        for r, col in zip(*np.nonzero(A)):
            out.write(f"eq {r} {col} {float(A[r, col])!r}\n")
        for r in np.flatnonzero(b):
            out.write(f"eqrhs {r} {float(b[r])!r}\n")
        for j in range(self.num_cones):
            M, v = self.cone_data(j)
            out.write(f"cone {j} {M.shape[0]}\n")
            for r, col in zip(*np.nonzero(M)):
                out.write(f"coneM {j} {r} {col} {float(M[r, col])!r}\n")
            for r in np.flatnonzero(v):
                out.write(f"conev {j} {r} {float(v[r])!r}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ConeProgram":
        lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        prog = cls()
        names: dict[int, str] = {}
        obj: dict[int, float] = {}
        objconst = 0.0
        neq = 0
        eq: dict[int, dict[int, float]] = {}
        eqrhs: dict[int, float] = {}
        cones: dict[int, int] = {}
        coneM: dict[int, dict[tuple[int, int], float]] = {}
        conev: dict[int, dict[int, float]] = {}
        nvars = None
        for ln in lines:
            key = ln[0]
            if key == "vars":
                nvars = int(ln[1])
            elif key == "name":
                names[int(ln[1])] = ln[2]
            elif key == "obj":
                obj[int(ln[1])] = float(ln[2])
            elif key == "objconst":
                objconst = float(ln[1])
            elif key == "eqs":
                neq = int(ln[1])
            elif key == "eq":
                eq.setdefault(int(ln[1]), {})[int(ln[2])] = float(ln[3])
            elif key == "eqrhs":
                eqrhs[int(ln[1])] = float(ln[2])
            elif key == "cone":
                cones[int(ln[1])] = int(ln[2])
            elif key == "coneM":
                coneM.setdefault(int(ln[1]), {})[(int(ln[2]), int(ln[3]))] = float(ln[4])
            elif key == "conev":
                conev.setdefault(int(ln[1]), {})[int(ln[2])] = float(ln[3])
            else:
                raise ValueError(f"unknown record '{key}'")
        if nvars is None:
            raise ValueError("missing 'vars' record")
        prog.num_vars = nvars
        prog.var_names = [names.get(i, f"y[{i}]") for i in range(nvars)]
        prog._obj = Affine(list(obj), list(obj.values()), objconst)
        for r in range(neq):
            row = eq.get(r, {})
            prog._eqs.append(Affine(list(row), list(row.values()), -eqrhs.get(r, 0.0)))
        for j in range(len(cones)):
            dim = cones[j]
            rows = []
            for r in range(dim):
                entries = {col: val for (rr, col), val in coneM.get(j, {}).items() if rr == r}
                rows.append(Affine(list(entries), list(entries.values()), conev.get(j, {}).get(r, 0.0)))
            prog._cones.append(_Cone(rows))
        return prog


def add_hyperbolic(prog: ConeProgram, u: Expr, v: Expr, z: Expr) -> int:
    """Encode ``u v >= z**2, u, v >= 0`` as ``||[2z, u - v]|| <= u + v``."""
    u, v, z = _as_affine(u), _as_affine(v), _as_affine(z)
    return prog.add_soc([2.0 * z, u - v], u + v)


def add_geometric_mean_tree(prog: ConeProgram, leaves: Sequence[Expr],
                            name: str = "z"):
    """Bound a new root by the geometric mean of ``leaves``.

    Leaves are padded with constant ones up to the next power of two and
    paired level by level through hyperbolic constraints, so at any feasible
    point ``root <= (prod leaves) ** (1 / 2**q)`` with equality attainable.
    A single leaf is returned unchanged. Pairs of two padding constants
    collapse into a constant instead of a new variable.
    """
    leaves = list(leaves)
    if not leaves:
        raise ValueError("need at least one leaf")
    if len(leaves) == 1:
        return leaves[0]
    size = 1 << (len(leaves) - 1).bit_length()
    level: list = [_as_affine(x) for x in leaves]
    level += [Affine.constant(1.0)] * (size - len(level))
    depth = 0
    while len(level) > 1:
        depth += 1
        nxt = []
        for i in range(0, len(level), 2):
            u, v = level[i], level[i + 1]
            if u.is_constant and v.is_constant:
                nxt.append(Affine.constant(np.sqrt(max(u.const, 0.0) * max(v.const, 0.0))))
                continue
            zi = prog.add_var(f"{name}{depth}_{i // 2}")
            add_hyperbolic(prog, u, v, zi)
            nxt.append(Affine.var(zi))
        level = nxt
    root = level[0]
    return int(root.idx[0]) if root.idx.size == 1 and root.coef[0] == 1.0 and root.const == 0.0 else root
