"""Taylor coefficients of the infinite-horizon optimal cost and feedback.

The quadratic/linear part comes from the discrete-time algebraic Riccati
equation (solved by structure-preserving doubling).  Higher degrees are found
one at a time: substituting the partial series into the stationarity form of
the Bellman equations and extracting a single homogeneous degree yields a
linear system whose operator is p -> p - p((F+GK)x), invertible because the
closed loop is Schur stable.  Assembling right-hand sides by substitution
(with the unknown block set to zero) sidesteps per-degree hand formulas and
is exact at every degree: the unknown feedback block cancels from the cost
equation by stationarity of the previous degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly import (
    PolyBundle,
    TaylorMap,
    compose_map,
    extract_symmetric_matrix,
    linear_form,
    monomials,
    mul_trunc,
    quadratic_form,
    _compose_matrix,
)


class RiccatiError(RuntimeError):
    pass


@dataclass(frozen=True)
class LQRData:
    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        n, m = self.G.shape
        for name, M, shape in (("F", self.F, (n, n)), ("Q", self.Q, (n, n)),
                               ("S", self.S, (n, m)), ("R", self.R, (m, m))):
            if M.shape != shape:
                raise ValueError(f"{name} has shape {M.shape}, expected {shape}")
        if not np.allclose(self.Q, self.Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        if not np.allclose(self.R, self.R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        try:
            np.linalg.cholesky(np.asarray(self.R, dtype=float))
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray


def _refined_solve(M: np.ndarray, b: np.ndarray, iters: int = 2) -> np.ndarray:
    """Linear solve; in extended precision, float64 factorization plus
    iterative refinement recovers full working accuracy."""
    dt = np.result_type(M, b)
    M64 = np.asarray(M, dtype=float)
    x = np.linalg.solve(M64, np.asarray(b, dtype=float))
    if dt == np.float64:
        return x
    x = x.astype(dt)
    for _ in range(iters):
        r = b - M @ x
        x = x + np.linalg.solve(M64, np.asarray(r, dtype=float))
    return x


def _refined_inv(M: np.ndarray, iters: int = 2) -> np.ndarray:
    X = np.linalg.inv(np.asarray(M, dtype=float))
    if M.dtype == np.float64:
        return X
    X = X.astype(M.dtype)
    eye2 = 2.0 * np.eye(M.shape[0], dtype=M.dtype)
    for _ in range(iters):
        X = X @ (eye2 - M @ X)
    return X


def _dare_residual(lqr: LQRData, P: np.ndarray) -> np.ndarray:
    F, G, Q, S, R = lqr.F, lqr.G, lqr.Q, lqr.S, lqr.R
    M = F.T @ P @ G + S
    return F.T @ P @ F - M @ _refined_solve(R + G.T @ P @ G, M.T) + Q - P


def solve_dare(lqr: LQRData, tol: float = 1e-13, max_iter: int = 120) -> RiccatiSolution:
    """Structure-preserving doubling plus a few Newton polish steps; the
    result is gated on the equation residual and Schur stability of the
    closed loop.  Runs entirely in the input dtype, so extended-precision
    data yields an extended-precision solution."""
    dt = np.result_type(lqr.F, lqr.G, lqr.Q, lqr.S, lqr.R)
    F, G, Q, S, R = (np.asarray(M, dtype=dt) for M in
                     (lqr.F, lqr.G, lqr.Q, lqr.S, lqr.R))
    n = F.shape[0]
    Rinv_St = _refined_solve(R, S.T)
    A = F - G @ Rinv_St          # remove the cross term
    H = Q - S @ Rinv_St
    W = G @ _refined_solve(R, G.T)
    eye = np.eye(n, dtype=dt)
    last_good = H
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            try:
                IGH = _refined_inv(eye + W @ H)
            except np.linalg.LinAlgError:
                raise RiccatiError("doubling iteration broke down (I + G_k H_k singular)") from None
            A_next = A @ IGH @ A
            W_next = W + A @ IGH @ W @ A.T
            H_next = H + A.T @ H @ IGH @ A
            if not np.all(np.isfinite(H_next)):
                # divergence: report the closed loop the best iterate buys
                P_bad = 0.5 * (last_good + last_good.T)
                K_bad = -_refined_solve(R + G.T @ P_bad @ G, G.T @ P_bad @ F + S.T)
                rho = max(abs(np.linalg.eigvals(np.asarray(F + G @ K_bad, dtype=float))))
                raise RiccatiError(
                    f"doubling diverged (system not stabilizable?): best "
                    f"closed-loop spectral radius {rho:.6f}")
            delta = np.max(np.abs(H_next - H))
            A, W, H = A_next, W_next, H_next
            last_good = H
            if delta <= tol * max(1.0, np.max(np.abs(H))):
                break
    P = 0.5 * (H + H.T)

    # Newton defect correction: E - Acl' E Acl = residual(P).
    eps = float(np.finfo(dt).eps)
    lqr_dt = LQRData(F, G, Q, S, R)
    for _ in range(4):
        res = _dare_residual(lqr_dt, P)
        if np.max(np.abs(res)) <= 10.0 * eps * max(1.0, float(np.max(np.abs(P)))):
            break
        Kc = -_refined_solve(R + G.T @ P @ G, G.T @ P @ F + S.T)
        Acl = F + G @ Kc
        stein = np.eye(n * n, dtype=dt) - np.kron(Acl.T, Acl.T)
        E = _refined_solve(stein, res.reshape(-1)).reshape(n, n)
        P = 0.5 * ((P + E) + (P + E).T)

    K = -_refined_solve(R + G.T @ P @ G, G.T @ P @ F + S.T)
    rho = max(abs(np.linalg.eigvals(np.asarray(F + G @ K, dtype=float))))
    res = np.max(np.abs(_dare_residual(lqr, P)))
    if res > 1e-9 or rho >= 1.0:
        raise RiccatiError(
            f"Riccati solve did not converge: residual {res:.3e}, "
            f"closed-loop spectral radius {rho:.6f}")
    return RiccatiSolution(P=P, K=K)


def lyapunov_operator(A: np.ndarray, k: int) -> np.ndarray:
    """Matrix of p -> p - p(Ax) on degree-k homogeneous coefficient vectors
    in the graded-lex basis.  The input dtype is the working precision."""
    A = np.asarray(A)
    if A.dtype.kind != "f":
        A = A.astype(float)
    size = len(monomials(A.shape[0], k))
    return np.eye(size, dtype=A.dtype) - _compose_matrix(A, k)


class ValueFeedbackSeries:
    """Optimal cost (degrees 2..d+1) and feedback (degrees 1..d) about the
    origin, plus the underlying Riccati pair."""

    def __init__(self, V: PolyBundle, kappa: list[PolyBundle], P: np.ndarray,
                 K: np.ndarray):
        self.V = V
        self.kappa = kappa
        self.P = P
        self.K = K
        self.n = V.n
        self.m = len(kappa)
        self.d = V.d_hi - 1
        self._gradV = [V.differentiate(i) for i in range(self.n)]

    def kappa_eval(self, x) -> np.ndarray:
        return np.array([k.eval(x) for k in self.kappa])

    def v_eval(self, x) -> float:
        return self.V.eval(x)

    def grad_v(self, x) -> np.ndarray:
        return np.array([g.eval(x) for g in self._gradV])


def split_lqr(f: TaylorMap, l: PolyBundle) -> LQRData:
    """Extract (F, G, Q, S, R) from the degree-1 dynamics block and the
    degree-2 Lagrangian block in stacked (x, u) variables."""
    n = f.n_out
    nv = f.n_in
    m = nv - n
    FG = np.array([f.rows[i].coeffs_of_degree(1) for i in range(n)])
    Z = extract_symmetric_matrix(l.truncate(2, 2))
    return LQRData(F=FG[:, :n], G=FG[:, n:], Q=Z[:n, :n], S=Z[:n, n:], R=Z[n:, n:])


def albrekht(f: TaylorMap, l: PolyBundle, d: int) -> ValueFeedbackSeries:
    """Solve the series form of the dynamic-programming equations to degree d.

    ``f``: dynamics rows in stacked (x, u) variables, degrees 1..d.
    ``l``: Lagrangian in the same variables, degrees 2..d+1.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    lqr = split_lqr(f, l)
    n, m = lqr.G.shape
    ric = solve_dare(lqr)
    P, K = ric.P, ric.K
    A_cl = lqr.F + lqr.G @ K
    Ru = lqr.R + lqr.G.T @ P @ lqr.G

    V = quadratic_form(P)
    kappa = [linear_form(K[s, :]) for s in range(m)]

    eye = np.eye(n)
    for j in range(2, d + 1):
        # stacked substitution map (x, kappa(x)) with the unknown block absent
        w = [linear_form(eye[i]) for i in range(n)] + list(kappa)
        fw = [compose_map(f.rows[i], w, j + 1) for i in range(n)]

        rhs1 = (compose_map(V, fw, j + 1) + compose_map(l, w, j + 1) - V)
        op = lyapunov_operator(A_cl, j + 1)
        try:
            v_new = _refined_solve(op, rhs1.coeffs_of_degree(j + 1))
        except np.linalg.LinAlgError:
            raise RiccatiError(
                f"cost equation singular at degree {j + 1}: a product of "
                f"closed-loop eigenvalues hit 1") from None
        V = V + PolyBundle(n, {j + 1: v_new})

        # stationarity in u at degree j fixes the feedback block
        gradV = [V.differentiate(i) for i in range(n)]
        rows = []
        for s in range(m):
            acc = compose_map(l.differentiate(n + s), w, j)
            for i in range(n):
                acc = acc + mul_trunc(compose_map(gradV[i], fw, j),
                                      compose_map(f.rows[i].differentiate(n + s), w, j), j)
            rows.append(acc.coeffs_of_degree(j))
        knew = -_refined_solve(Ru, np.array(rows))
        kappa = [kappa[s] + PolyBundle(n, {j: knew[s]}) for s in range(m)]

    return ValueFeedbackSeries(V=V, kappa=kappa, P=P, K=K)


def bellman_residuals(series: ValueFeedbackSeries, f_exact, l_exact, x) -> tuple[float, np.ndarray]:
    """Residuals of the two dynamic-programming identities at a point, using
    the true dynamics/Lagrangian rather than their truncations.

    ``f_exact`` provides ``f(x, u)`` and ``jacobians(x, u) -> (fx, fu)``;
    ``l_exact`` provides ``value(x, u)`` and ``grad(x, u) -> (lx, lu)``.
    The input dtype is preserved: evaluating an extended-precision series at
    extended-precision points keeps the residual floor below the truncation
    term being measured.
    """
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(float)
    u = series.kappa_eval(x)
    y = f_exact.f(x, u)
    r1 = series.v_eval(x) - series.v_eval(y) - l_exact.value(x, u)
    _, fu = f_exact.jacobians(x, u)
    _, lu = l_exact.grad(x, u)
    r2 = series.grad_v(y) @ fu + lu
    return float(r1), r2
