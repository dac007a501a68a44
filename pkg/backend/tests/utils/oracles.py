"""Independent reference implementations the services are checked against."""
import numpy as np


def thomas_natural_spline(t: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Natural cubic spline through (t, y) evaluated at x, solved with the Thomas algorithm."""
    n = len(t)
    h = [t[i + 1] - t[i] for i in range(n - 1)]
    m = [0.0] * n
    size = n - 2
    if size > 0:
        sub = [h[i] for i in range(1, size)]
        diag = [2.0 * (h[i] + h[i + 1]) for i in range(size)]
        sup = [h[i + 1] for i in range(size - 1)]
        rhs = [
            6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i])
            for i in range(size)
        ]
        for i in range(1, size):
            w = sub[i - 1] / diag[i - 1]
            diag[i] -= w * sup[i - 1]
            rhs[i] -= w * rhs[i - 1]
        sol = [0.0] * size
        sol[-1] = rhs[-1] / diag[-1]
        for i in range(size - 2, -1, -1):
            sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i]
        m[1:-1] = sol

    out = np.empty(len(x))
    for k, xv in enumerate(x):
        i = min(max(int(np.searchsorted(t, xv, side="right")) - 1, 0), n - 2)
        dx = xv - t[i]
        b = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0
        c = m[i] / 2.0
        d = (m[i + 1] - m[i]) / (6.0 * h[i])
        out[k] = y[i] + b * dx + c * dx**2 + d * dx**3
    return out


def brute_force_split(
    X: np.ndarray, residuals: np.ndarray, gamma: float, lam: float
) -> tuple[int, float, float] | None:
    """Every (feature, midpoint) candidate in feature-then-threshold order; first maximum wins."""
    n, p = X.shape
    G = float(residuals.sum())
    H = float(n)
    best: tuple[int, float, float] | None = None
    for j in range(p):
        order = sorted(range(n), key=lambda i: (X[i, j], i))
        values = sorted(set(X[:, j].tolist()))
        for a, b in zip(values, values[1:], strict=False):
            threshold = 0.5 * (a + b)
            GL = 0.0
            HL = 0.0
            for i in order:
                if X[i, j] < threshold:
                    GL += residuals[i]
                    HL += 1.0
            GR = G - GL
            HR = H - HL
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma
            if best is None or gain > best[2]:
                best = (j, threshold, gain)
    if best is None or not best[2] > 0:
        return None
    return best


def ols(X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    A = np.column_stack([np.ones(len(y)), X])
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    return float(coef[0]), coef[1:]


def ridge(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    """Closed form on centered data: (Xc'Xc + lam I) b = Xc'(y - mean y)."""
    mean = X.mean(axis=0)
    Xc = X - mean
    beta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ (y - y.mean()))
    return float(y.mean() - mean @ beta), beta
