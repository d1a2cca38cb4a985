"""Extend a polynomial with positive-definite quadratic part to a sum of
squares that agrees with it through its own top degree.

Working in coordinates that diagonalize the quadratic part, each square
(lambda_j/2) * delta_j(z)^2 starts as the bare variable z_j and grows one
degree block per sweep: the degree-e block of delta_j is chosen to cancel
exactly the residual coefficients on monomials z_j * (monomial in z_j..z_n),
eliminating variables in order as in Gaussian elimination.  Every monomial of
a given degree has a unique first variable, so the sweep cancels the whole
degree and never touches what earlier j already cancelled.
"""

from __future__ import annotations

import numpy as np

from .poly import PolyBundle, compose_linear, monomials, mul_trunc


class CompletionError(ValueError):
    pass


class SquareCompletion:
    """W(x) = sum_j (lambda_j/2) delta_j(T'x)^2, nonnegative by construction,
    matching the input cost through degree d+1."""

    def __init__(self, T: np.ndarray, lam: np.ndarray, deltas: list[PolyBundle],
                 W: PolyBundle):
        self.T = T
        self.lam = lam
        self.deltas = deltas
        self.W = W
        self.n = W.n
        self.d = deltas[0].d_hi
        self._delta_grads = [[dj.differentiate(i) for i in range(self.n)]
                             for dj in deltas]

    def value(self, x) -> float:
        """Structural (sum-of-squares) evaluation; never negative beyond
        rounding of the squares themselves.  Overflows far outside the
        useful region saturate to +inf, which downstream checks reject."""
        z = self.T.T @ np.asarray(x, dtype=float)
        s = 0.0
        with np.errstate(over="ignore"):
            for lj, dj in zip(self.lam, self.deltas):
                v = dj.eval(z)
                s += 0.5 * lj * v * v
        return s

    def grad(self, x) -> np.ndarray:
        z = self.T.T @ np.asarray(x, dtype=float)
        gz = np.zeros(self.n)
        with np.errstate(over="ignore"):
            for lj, dj, grads in zip(self.lam, self.deltas, self._delta_grads):
                v = dj.eval(z)
                gz += lj * v * np.array([g.eval(z) for g in grads])
        return self.T @ gz


def complete_squares(V: PolyBundle, d: int | None = None) -> SquareCompletion:
    """Build the restricted square completion of ``V`` (degrees 2..d+1).

    ``d`` defaults to the input's top degree minus one; passing it only
    asserts the expectation.
    """
    if V.d_lo != 2:
        raise CompletionError(f"cost must start at degree 2, got {V.d_lo}")
    if d is None:
        d = V.d_hi - 1
    elif d != V.d_hi - 1:
        raise CompletionError(f"degree mismatch: top degree {V.d_hi} implies d={V.d_hi - 1}")
    n = V.n
    from .poly import extract_symmetric_matrix

    P = extract_symmetric_matrix(V)
    lam_asc, U = np.linalg.eigh(P)
    if lam_asc[0] <= 0.0:
        raise CompletionError(
            f"quadratic part is not positive definite (eigenvalue {lam_asc[0]:.6e})")
    lam = lam_asc[::-1].copy()
    T = U[:, ::-1].copy()
    Vz = compose_linear(V, T)

    deltas = []
    for j in range(n):
        lead = np.zeros(n)
        lead[j] = 1.0
        deltas.append(PolyBundle(n, {1: lead}))

    for e in range(2, d + 1):
        resid = Vz
        for lj, dj in zip(lam, deltas):
            resid = resid - mul_trunc(dj, dj, e + 1).scale(0.5 * lj)
        coeffs = resid.coeffs_of_degree(e + 1)
        basis_hi = monomials(n, e + 1)
        basis_lo = monomials(n, e)
        blocks = [np.zeros(len(basis_lo)) for _ in range(n)]
        for idx, exp in enumerate(basis_hi.exponents):
            c = coeffs[idx]
            if c == 0.0:
                continue
            j = next(i for i, v in enumerate(exp) if v > 0)
            rest = exp[:j] + (exp[j] - 1,) + exp[j + 1:]
            blocks[j][basis_lo.index_of[rest]] = c / lam[j]
        deltas = [dj + PolyBundle(n, {e: blocks[j]}) for j, dj in enumerate(deltas)]

    Wz = PolyBundle.zero(n, 2, 2 * d)
    for lj, dj in zip(lam, deltas):
        Wz = Wz + mul_trunc(dj, dj, 2 * d).scale(0.5 * lj)
    W = compose_linear(Wz, T.T)
    return SquareCompletion(T=T, lam=lam, deltas=deltas, W=W)


def truncation_check(completion: SquareCompletion, V: PolyBundle) -> float:
    """Max absolute coefficient discrepancy between the completion and the
    input over the input's degree range."""
    if completion.W.n != V.n:
        raise ValueError("variable count mismatch")
    worst = 0.0
    for deg in range(V.d_lo, V.d_hi + 1):
        diff = completion.W.coeffs_of_degree(deg) - V.coeffs_of_degree(deg)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def dump_completion(completion: SquareCompletion, path) -> None:
    """Append the diagonalizing frame to the standard coefficient dump of W."""
    from .poly import dump_bundle

    header = ["# T (orthogonal, columns are eigenvectors):"]
    for row in completion.T:
        header.append("# " + " ".join(f"{v:.17g}" for v in row))
    header.append("# lambda: " + " ".join(f"{v:.17g}" for v in completion.lam))
    dump_bundle(completion.W, path, header=header)
