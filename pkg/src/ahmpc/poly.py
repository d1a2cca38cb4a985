"""Truncated multivariate polynomial algebra.

Everything downstream (series solvers, square completion, terminal costs)
works with homogeneous coefficient blocks over a fixed graded-lexicographic
monomial order, so coefficient vectors are reproducible across runs and
platforms.  A small forward-mode jet type built on the same representation
supplies Taylor coefficients of smooth dynamics (sin/cos/rational) about an
expansion point.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "MonomialBasis",
    "HomogeneousPoly",
    "PolyBundle",
    "Jet",
    "monomials",
    "mul_trunc",
    "compose_linear",
    "compose_map",
    "jet_lift",
    "jet_sin",
    "jet_cos",
    "quadratic_form",
    "linear_form",
    "extract_symmetric_matrix",
    "dump_bundle",
    "load_bundle",
]


def _exponents_graded_lex(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    if n == 1:
        return ((d,),)
    out = []
    for k in range(d, -1, -1):
        for rest in _exponents_graded_lex(n - 1, d - k):
            out.append((k,) + rest)
    return tuple(out)


class MonomialBasis:
    """All exponent multi-indices of total degree ``d`` in ``n`` variables,
    ordered lexicographically descending (graded-lex within the degree)."""

    def __init__(self, n: int, d: int):
        if n < 1:
            raise ValueError("need at least one variable")
        if d < 0:
            raise ValueError("degree must be nonnegative")
        self.n = n
        self.d = d
        self.exponents = _exponents_graded_lex(n, d)
        self.index_of = {e: i for i, e in enumerate(self.exponents)}
        self.expmat = np.array(self.exponents, dtype=np.int64).reshape(len(self.exponents), n)

    def __len__(self) -> int:
        return len(self.exponents)

    def __repr__(self) -> str:
        return f"MonomialBasis(n={self.n}, d={self.d}, size={len(self)})"


@lru_cache(maxsize=None)
def monomials(n: int, d: int) -> MonomialBasis:
    """Cached graded-lex basis; deterministic and idempotent."""
    return MonomialBasis(n, d)


def basis_size(n: int, d: int) -> int:
    return math.comb(n + d - 1, d)


class HomogeneousPoly:
    """Coefficient vector aligned with ``monomials(n, d)``.

    Floating dtypes are preserved (the series solvers can run in extended
    precision); anything else is coerced to float64.
    """

    def __init__(self, basis: MonomialBasis, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.dtype.kind != "f":
            coeffs = coeffs.astype(float)
        if coeffs.shape != (len(basis),):
            raise ValueError(f"expected {len(basis)} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite coefficient")
        self.basis = basis
        self.coeffs = coeffs

    def eval(self, x: np.ndarray) -> float:
        return float(self.coeffs @ np.prod(x[None, :] ** self.basis.expmat, axis=1))

    def __repr__(self) -> str:
        return f"HomogeneousPoly(n={self.basis.n}, d={self.basis.d})"


@lru_cache(maxsize=None)
def _product_index_table(n: int, da: int, db: int) -> np.ndarray:
    """idx[i, j] = position of exponents(da)[i] + exponents(db)[j] in the
    degree-(da+db) basis."""
    ba, bb = monomials(n, da), monomials(n, db)
    bt = monomials(n, da + db)
    idx = np.empty((len(ba), len(bb)), dtype=np.intp)
    for i, ea in enumerate(ba.exponents):
        for j, eb in enumerate(bb.exponents):
            idx[i, j] = bt.index_of[tuple(a + b for a, b in zip(ea, eb))]
    return idx


def _hmul(n: int, da: int, ca: np.ndarray, db: int, cb: np.ndarray) -> np.ndarray:
    idx = _product_index_table(n, da, db)
    dt = np.result_type(ca, cb)
    if dt == np.float64:
        return np.bincount(idx.ravel(), weights=np.outer(ca, cb).ravel(),
                           minlength=basis_size(n, da + db))
    out = np.zeros(basis_size(n, da + db), dtype=dt)
    np.add.at(out, idx.ravel(), np.outer(ca, cb).ravel())
    return out


class PolyBundle:
    """Polynomial with homogeneous blocks over a contiguous degree range.

    Treated as immutable after construction: all operations return new
    bundles, so values can be shared freely across threads.
    """

    def __init__(self, n: int, terms: dict[int, np.ndarray], d_lo: int | None = None,
                 d_hi: int | None = None):
        if n < 1:
            raise ValueError("need at least one variable")
        degs = sorted(terms)
        if d_lo is None:
            d_lo = degs[0] if degs else 0
        if d_hi is None:
            d_hi = degs[-1] if degs else d_lo
        if d_lo > d_hi or d_lo < 0:
            raise ValueError(f"bad degree range [{d_lo}, {d_hi}]")
        self.n = n
        self.d_lo = d_lo
        self.d_hi = d_hi
        given = [np.asarray(c.coeffs if isinstance(c, HomogeneousPoly) else c)
                 for c in terms.values()]
        fdts = [a.dtype for a in given if a.dtype.kind == "f"]
        self.dtype = np.result_type(*fdts) if fdts else np.dtype(float)
        self.terms: dict[int, HomogeneousPoly] = {}
        for d in range(d_lo, d_hi + 1):
            basis = monomials(n, d)
            c = terms.get(d)
            if c is None:
                c = np.zeros(len(basis), dtype=self.dtype)
            if isinstance(c, HomogeneousPoly):
                c = c.coeffs
            self.terms[d] = HomogeneousPoly(basis, c)
        self._stacked: tuple[np.ndarray, np.ndarray] | None = None

    @classmethod
    def zero(cls, n: int, d_lo: int, d_hi: int, dtype=float) -> "PolyBundle":
        return cls(n, {d_lo: np.zeros(basis_size(n, d_lo), dtype=dtype)}, d_lo, d_hi)

    @classmethod
    def constant(cls, n: int, value) -> "PolyBundle":
        return cls(n, {0: np.array([value])})

    def coeff(self, exponent: Sequence[int]) -> float:
        e = tuple(int(k) for k in exponent)
        d = sum(e)
        if d < self.d_lo or d > self.d_hi:
            return 0.0
        h = self.terms[d]
        return float(h.coeffs[h.basis.index_of[e]])

    def coeffs_of_degree(self, d: int) -> np.ndarray:
        if d < self.d_lo or d > self.d_hi:
            return np.zeros(basis_size(self.n, d), dtype=self.dtype)
        return self.terms[d].coeffs

    def eval(self, x):
        x = np.asarray(x)
        if x.dtype.kind != "f":
            x = x.astype(float)
        if x.shape != (self.n,):
            raise ValueError(f"expected point of dimension {self.n}, got {x.shape}")
        if self._stacked is None:
            expmat = np.vstack([self.terms[d].basis.expmat for d in range(self.d_lo, self.d_hi + 1)])
            coeffs = np.concatenate([self.terms[d].coeffs for d in range(self.d_lo, self.d_hi + 1)])
            self._stacked = (expmat, coeffs)
        expmat, coeffs = self._stacked
        out = coeffs @ np.prod(x[None, :] ** expmat, axis=1)
        return float(out) if out.dtype == np.float64 else out

    def __call__(self, x):
        return self.eval(x)

    def _binary(self, other: "PolyBundle", sign: float) -> "PolyBundle":
        if self.n != other.n:
            raise ValueError("variable count mismatch")
        lo, hi = min(self.d_lo, other.d_lo), max(self.d_hi, other.d_hi)
        out = {}
        for d in range(lo, hi + 1):
            out[d] = self.coeffs_of_degree(d) + sign * other.coeffs_of_degree(d)
        return PolyBundle(self.n, out, lo, hi)

    def __add__(self, other: "PolyBundle") -> "PolyBundle":
        return self._binary(other, 1.0)

    def __sub__(self, other: "PolyBundle") -> "PolyBundle":
        return self._binary(other, -1.0)

    def __neg__(self) -> "PolyBundle":
        return self.scale(-1.0)

    def scale(self, a: float) -> "PolyBundle":
        return PolyBundle(self.n, {d: a * h.coeffs for d, h in self.terms.items()},
                          self.d_lo, self.d_hi)

    def truncate(self, d_lo: int, d_hi: int) -> "PolyBundle":
        """Restrict to the given degree window (missing blocks become zero)."""
        return PolyBundle(self.n, {d: self.coeffs_of_degree(d)
                                   for d in range(d_lo, d_hi + 1)}, d_lo, d_hi)

    def degree_part(self, d: int) -> "PolyBundle":
        return self.truncate(d, d)

    def differentiate(self, i: int) -> "PolyBundle":
        """Partial derivative with respect to variable ``i``."""
        if not 0 <= i < self.n:
            raise ValueError("variable index out of range")
        out = {}
        lo = max(self.d_lo - 1, 0)
        hi = max(self.d_hi - 1, 0)
        for d in range(self.d_lo, self.d_hi + 1):
            if d == 0:
                continue
            src = self.terms[d]
            tgt_basis = monomials(self.n, d - 1)
            c = np.zeros(len(tgt_basis), dtype=self.dtype)
            for idx, e in enumerate(src.basis.exponents):
                if e[i] == 0:
                    continue
                e2 = e[:i] + (e[i] - 1,) + e[i + 1:]
                c[tgt_basis.index_of[e2]] += e[i] * src.coeffs[idx]
            out[d - 1] = c
        if not out:
            return PolyBundle.zero(self.n, lo, hi)
        return PolyBundle(self.n, out, lo, hi)

    def max_abs_coeff(self) -> float:
        return max(float(np.max(np.abs(h.coeffs))) for h in self.terms.values())

    def __repr__(self) -> str:
        return f"PolyBundle(n={self.n}, degrees {self.d_lo}..{self.d_hi})"


def mul_trunc(a: PolyBundle, b: PolyBundle, d_max: int) -> PolyBundle:
    """Product with every term of degree above ``d_max`` discarded."""
    if a.n != b.n:
        raise ValueError("variable count mismatch")
    lo = a.d_lo + b.d_lo
    hi = min(a.d_hi + b.d_hi, d_max)
    dt = np.result_type(a.dtype, b.dtype)
    if hi < lo:
        return PolyBundle.zero(a.n, d_max, d_max, dtype=dt)
    out = {d: np.zeros(basis_size(a.n, d), dtype=dt) for d in range(lo, hi + 1)}
    for da in range(a.d_lo, a.d_hi + 1):
        ca = a.terms[da].coeffs
        if not ca.any():
            continue
        for db in range(b.d_lo, min(b.d_hi, d_max - da) + 1):
            cb = b.terms[db].coeffs
            if not cb.any():
                continue
            out[da + db] += _hmul(a.n, da, ca, db, cb)
    return PolyBundle(a.n, out, lo, hi)


_compose_cache: dict[tuple, np.ndarray] = {}


def _compose_matrix(A: np.ndarray, k: int) -> np.ndarray:
    """Matrix of the substitution x -> Az on degree-k homogeneous coefficients.

    Column ``alpha`` holds the coefficient vector of ``(Az)^alpha``; built by
    peeling one variable at a time so each monomial costs one linear-form
    multiply.
    """
    n_old, n_new = A.shape
    key = (A.tobytes(), str(A.dtype), n_old, n_new, k)
    hit = _compose_cache.get(key)
    if hit is not None:
        return hit
    basis_old = monomials(n_old, k)
    M = np.empty((basis_size(n_new, k), len(basis_old)), dtype=A.dtype)
    if k == 0:
        M[:] = 1.0
    elif k == 1:
        for col, e in enumerate(basis_old.exponents):
            i = e.index(1)
            M[:, col] = A[i, :]
    else:
        prev = _compose_matrix(A, k - 1)
        prev_basis = monomials(n_old, k - 1)
        for col, e in enumerate(basis_old.exponents):
            i = next(j for j, v in enumerate(e) if v > 0)
            e2 = e[:i] + (e[i] - 1,) + e[i + 1:]
            M[:, col] = _hmul(n_new, 1, A[i, :], k - 1, prev[:, prev_basis.index_of[e2]])
    _compose_cache[key] = M
    return M


def compose_linear(p: PolyBundle, A: np.ndarray) -> PolyBundle:
    """Return q with q(z) = p(Az); homogeneous degrees are preserved."""
    A = np.asarray(A)
    if A.dtype.kind != "f":
        A = A.astype(float)
    if A.ndim != 2 or A.shape[0] != p.n:
        raise ValueError(f"matrix must have {p.n} rows, got {A.shape}")
    n_new = A.shape[1]
    out = {}
    for d in range(p.d_lo, p.d_hi + 1):
        out[d] = _compose_matrix(A, d) @ p.terms[d].coeffs
    return PolyBundle(n_new, out, p.d_lo, p.d_hi)


def compose_map(p: PolyBundle, rows: Sequence[PolyBundle], d_max: int) -> PolyBundle:
    """Substitute the polynomial map ``rows`` for the variables of ``p``,
    truncating the result at ``d_max``.

    Monomial powers are built degree by degree (each from a predecessor one
    degree down), so the cost is one truncated multiply per monomial of the
    source space.
    """
    if len(rows) != p.n:
        raise ValueError("map must supply one row per variable of p")
    n_new = rows[0].n
    rows = [r.truncate(r.d_lo, min(r.d_hi, d_max)) for r in rows]
    out: dict[int, np.ndarray] = {}

    def accumulate(b: PolyBundle, c: float) -> None:
        for d in range(b.d_lo, min(b.d_hi, d_max) + 1):
            arr = out.get(d)
            if arr is None:
                out[d] = c * b.terms[d].coeffs
            else:
                arr += c * b.terms[d].coeffs

    if p.d_lo == 0:
        accumulate(PolyBundle.constant(n_new, float(p.terms[0].coeffs[0])), 1.0)
    powers_prev: dict[tuple[int, ...], PolyBundle] = {}
    for deg in range(1, p.d_hi + 1):
        basis = monomials(p.n, deg)
        powers: dict[tuple[int, ...], PolyBundle] = {}
        for e in basis.exponents:
            i = next(j for j, v in enumerate(e) if v > 0)
            if deg == 1:
                powers[e] = rows[i]
            else:
                e2 = e[:i] + (e[i] - 1,) + e[i + 1:]
                powers[e] = mul_trunc(rows[i], powers_prev[e2], d_max)
        if deg >= p.d_lo:
            coeffs = p.terms[deg].coeffs
            for idx, e in enumerate(basis.exponents):
                c = coeffs[idx]
                if c != 0.0:
                    accumulate(powers[e], c)
        powers_prev = powers
    if not out:
        return PolyBundle.zero(n_new, min(p.d_lo, d_max), min(p.d_lo, d_max))
    return PolyBundle(n_new, out, min(out), max(out))


# --- jets -----------------------------------------------------------------

class Jet:
    """Truncated Taylor series (degrees 0..d) in deviation variables.

    Closed under +, -, *, / (nonzero constant term) and sin/cos, which is all
    the pendulum dynamics needs.
    """

    __slots__ = ("bundle",)

    def __init__(self, bundle: PolyBundle):
        self.bundle = bundle

    @property
    def n(self) -> int:
        return self.bundle.n

    @property
    def d(self) -> int:
        return self.bundle.d_hi

    @classmethod
    def constant(cls, value, n: int, d: int, dtype=None) -> "Jet":
        if dtype is None:
            a = np.asarray(value)
            dtype = a.dtype if a.dtype.kind == "f" else np.dtype(float)
        return cls(PolyBundle(n, {0: np.array([value], dtype=dtype)}, 0, d))

    @classmethod
    def variable(cls, i: int, value, n: int, d: int, dtype=float) -> "Jet":
        terms = {0: np.array([value], dtype=dtype), 1: np.zeros(n, dtype=dtype)}
        terms[1][i] = 1.0
        return cls(PolyBundle(n, terms, 0, d))

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.n, self.d, dtype=self.bundle.dtype)

    @property
    def value(self):
        return self.bundle.terms[0].coeffs[0]

    def __add__(self, other):
        o = self._coerce(other)
        return Jet((self.bundle + o.bundle).truncate(0, self.d))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet((self.bundle - o.bundle).truncate(0, self.d))

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __neg__(self):
        return Jet(self.bundle.scale(-1.0))

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(mul_trunc(self.bundle, other.bundle, self.d).truncate(0, self.d))
        return Jet(self.bundle.scale(other))

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        b0 = self.value
        if b0 == 0.0:
            raise ZeroDivisionError("jet has zero constant term")
        # 1/(b0(1+e)) with e nilpotent: Horner on the geometric series.
        one = Jet.constant(1.0, self.n, self.d, dtype=self.bundle.dtype)
        e = self * (1.0 / b0) - one
        acc = one
        for _ in range(self.d):
            acc = one - e * acc
        return acc * (1.0 / b0)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other


def _sincos_nilpotent(e: Jet) -> tuple[Jet, Jet]:
    """(sin e, cos e) for a jet with zero constant term; the power series
    terminates at the truncation degree."""
    d = e.d
    dt = e.bundle.dtype
    s = Jet.constant(0.0, e.n, d, dtype=dt)
    c = Jet.constant(1.0, e.n, d, dtype=dt)
    power = Jet.constant(1.0, e.n, d, dtype=dt)
    for k in range(1, d + 1):
        power = power * e
        coef = ((-1.0) ** ((k - 1) // 2 if k % 2 else k // 2)) / math.factorial(k)
        if k % 2:
            s = s + power * coef
        else:
            c = c + power * coef
    return s, c


def jet_sin(j: Jet) -> Jet:
    a = j.value
    e = j - a
    s, c = _sincos_nilpotent(e)
    return s * np.cos(a) + c * np.sin(a)


def jet_cos(j: Jet) -> Jet:
    a = j.value
    e = j - a
    s, c = _sincos_nilpotent(e)
    return c * np.cos(a) - s * np.sin(a)


def jet_lift(f_spec: Callable[[Sequence[Jet]], Jet], expansion_point, d: int) -> PolyBundle:
    """Taylor-expand a scalar expression about ``expansion_point``.

    ``f_spec`` receives one jet per input variable and must combine them with
    jet-supported operations (+, -, *, /, jet_sin, jet_cos).  The result is a
    bundle of degrees 0..d in the deviation variables.
    """
    x0 = np.asarray(expansion_point, dtype=float)
    n = x0.size
    seeds = [Jet.variable(i, x0[i], n, d) for i in range(n)]
    out = f_spec(seeds)
    if isinstance(out, (int, float)):
        out = Jet.constant(float(out), n, d)
    return out.bundle


class TaylorMap:
    """Vector-valued polynomial map: one bundle per output coordinate, all
    sharing the same input dimension and degree range."""

    def __init__(self, rows: Sequence[PolyBundle]):
        rows = tuple(rows)
        if not rows:
            raise ValueError("empty map")
        n_in = rows[0].n
        rng = (rows[0].d_lo, rows[0].d_hi)
        for r in rows:
            if r.n != n_in or (r.d_lo, r.d_hi) != rng:
                raise ValueError("rows must share input dimension and degree range")
        self.rows = rows
        self.n_in = n_in
        self.n_out = len(rows)
        self.d_lo, self.d_hi = rng

    def eval(self, w) -> np.ndarray:
        return np.array([r.eval(w) for r in self.rows])

    def __repr__(self) -> str:
        return (f"TaylorMap({self.n_in}->{self.n_out}, "
                f"degrees {self.d_lo}..{self.d_hi})")


# --- matrix <-> quadratic helpers ------------------------------------------

def quadratic_form(P: np.ndarray) -> PolyBundle:
    """(1/2) x'Px as a degree-2 bundle (P symmetrized)."""
    P = np.asarray(P)
    P = 0.5 * (P + P.T)
    n = P.shape[0]
    basis = monomials(n, 2)
    c = np.zeros(len(basis), dtype=P.dtype if P.dtype.kind == "f" else float)
    for idx, e in enumerate(basis.exponents):
        nz = [i for i, v in enumerate(e) if v > 0]
        if len(nz) == 1:
            c[idx] = 0.5 * P[nz[0], nz[0]]
        else:
            c[idx] = P[nz[0], nz[1]]
    return PolyBundle(n, {2: c})


def extract_symmetric_matrix(p: PolyBundle) -> np.ndarray:
    """Inverse of :func:`quadratic_form` applied to the degree-2 block."""
    n = p.n
    h = p.terms[2]
    P = np.zeros((n, n), dtype=h.coeffs.dtype)
    for idx, e in enumerate(h.basis.exponents):
        nz = [i for i, v in enumerate(e) if v > 0]
        if len(nz) == 1:
            P[nz[0], nz[0]] = 2.0 * h.coeffs[idx]
        else:
            P[nz[0], nz[1]] = P[nz[1], nz[0]] = h.coeffs[idx]
    return P


def linear_form(row: np.ndarray) -> PolyBundle:
    """Row vector as a degree-1 bundle."""
    row = np.asarray(row)
    if row.dtype.kind != "f":
        row = row.astype(float)
    return PolyBundle(row.size, {1: row.copy()})


# --- coefficient dump format ------------------------------------------------

def dump_bundle(p: PolyBundle, path, header: Iterable[str] = ()) -> None:
    """Plain-text dump: `n=`/`d=` headers then one `degree exponents coeff`
    line per basis entry, 17 significant digits."""
    with open(path, "w") as fh:
        for line in header:
            fh.write(line.rstrip("\n") + "\n")
        fh.write(f"n={p.n}\n")
        fh.write(f"d={p.d_hi}\n")
        for d in range(p.d_lo, p.d_hi + 1):
            h = p.terms[d]
            for e, c in zip(h.basis.exponents, h.coeffs):
                fh.write(f"{d} " + " ".join(str(k) for k in e) + f" {c:.17g}\n")


def load_bundle(path) -> PolyBundle:
    n = None
    rows: list[tuple[int, tuple[int, ...], float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("n="):
                n = int(line[2:])
                continue
            if line.startswith("d="):
                continue
            parts = line.split()
            d = int(parts[0])
            e = tuple(int(k) for k in parts[1:-1])
            rows.append((d, e, float(parts[-1])))
    if n is None or not rows:
        raise ValueError(f"not a coefficient dump: {path}")
    lo = min(r[0] for r in rows)
    hi = max(r[0] for r in rows)
    terms = {d: np.zeros(basis_size(n, d)) for d in range(lo, hi + 1)}
    for d, e, c in rows:
        terms[d][monomials(n, d).index_of[e]] = c
    return PolyBundle(n, terms, lo, hi)
