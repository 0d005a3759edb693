from typing import Tuple

import numpy as np
import numpy.typing as npt

from src.services.constraint_service import CostTerms
from src.services.problem import TrajectoryProblem

DoubleArray = npt.NDArray[np.float64]


class LinearQuadraticProblem(TrajectoryProblem):
    """
    x' = A x + B u with cost Σ (xᵀQx + uᵀRu) + x_Nᵀ Q_f x_N and no constraints.

    Used to check the iLQR engine against the discrete Riccati recursion.
    """

    def __init__(self, A: DoubleArray, B: DoubleArray, Q: DoubleArray, R: DoubleArray, Qf: DoubleArray, x0: npt.ArrayLike, horizon: int, dt: float = 1.0):
        super().__init__(x0, horizon, dt)
        self.A, self.B, self.Q, self.R, self.Qf = (np.asarray(M, dtype=float) for M in (A, B, Q, R, Qf))

    @property
    def control_dim(self) -> int:
        return int(self.B.shape[1])

    def step(self, x: DoubleArray, u: DoubleArray) -> DoubleArray:
        return self.A @ x + self.B @ u

    def dynamics_jacobians(self, xs: DoubleArray, us: DoubleArray) -> Tuple[DoubleArray, DoubleArray]:
        count = xs.shape[0]
        return np.broadcast_to(self.A, (count,) + self.A.shape).copy(), np.broadcast_to(self.B, (count,) + self.B.shape).copy()

    def _terms(self, xs: DoubleArray, us: DoubleArray, Q: DoubleArray) -> CostTerms:
        batch = xs.shape[:-1]
        n, m = self.state_dim, self.control_dim
        value = np.einsum("...i,ij,...j->...", xs, Q, xs) + np.einsum("...i,ij,...j->...", us, self.R, us)
        return CostTerms(
            value=value,
            l_x=2.0 * xs @ Q,
            l_u=2.0 * us @ self.R,
            l_xx=np.broadcast_to(2.0 * Q, batch + (n, n)).copy(),
            l_uu=np.broadcast_to(2.0 * self.R, batch + (m, m)).copy(),
            l_ux=np.zeros(batch + (m, n)),
        )

    def running_cost(self, xs: DoubleArray, us: DoubleArray) -> CostTerms:
        return self._terms(xs, us, self.Q)

    def terminal_cost(self, x: DoubleArray) -> CostTerms:
        return self._terms(x, np.zeros(x.shape[:-1] + (self.control_dim,)), self.Qf)


class LqService:
    """
    Reference solutions for linear-quadratic problems.

    Usage:
        >>> problem = LqService.random_problem(seed=0)
        >>> K, P = LqService.riccati_recursion(problem.A, problem.B, problem.Q, problem.R, problem.Qf, problem.horizon)
        >>> LqService.optimal_cost(P, problem.x0)
    """

    @staticmethod
    def riccati_recursion(
        A: DoubleArray,
        B: DoubleArray,
        Q: DoubleArray,
        R: DoubleArray,
        Qf: DoubleArray,
        horizon: int,
    ) -> Tuple[DoubleArray, DoubleArray]:
        """
        Finite-horizon discrete Riccati recursion for V_k(x) = xᵀ P_k x.

            K_k = -(R + Bᵀ P_{k+1} B)⁻¹ Bᵀ P_{k+1} A
            P_k = Q + Aᵀ P_{k+1} A + Aᵀ P_{k+1} B K_k

        Returns:
            K (N, m, n) and P (N + 1, n, n)
        """
        n, m = B.shape
        K = np.zeros((horizon, m, n))
        P = np.zeros((horizon + 1, n, n))
        P[horizon] = Qf
        for k in range(horizon - 1, -1, -1):
            Pn = P[k + 1]
            K[k] = -np.linalg.solve(R + B.T @ Pn @ B, B.T @ Pn @ A)
            Pk = Q + A.T @ Pn @ A + A.T @ Pn @ B @ K[k]
            P[k] = 0.5 * (Pk + Pk.T)
        return K, P

    @staticmethod
    def optimal_cost(P: DoubleArray, x0: npt.ArrayLike) -> float:
        x0 = np.asarray(x0, dtype=float)
        return float(x0 @ P[0] @ x0)

    @staticmethod
    def random_problem(seed: int = 0, state_dim: int = 13, control_dim: int = 7, horizon: int = 50) -> LinearQuadraticProblem:
        """Random stable system (spectral radius 0.95) with SPD weights."""
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((state_dim, state_dim))
        A *= 0.95 / max(abs(np.linalg.eigvals(A)))
        B = rng.standard_normal((state_dim, control_dim))
        L = rng.standard_normal((state_dim, state_dim))
        Q = L @ L.T / state_dim + 0.1 * np.eye(state_dim)
        M = rng.standard_normal((control_dim, control_dim))
        R = M @ M.T / control_dim + 0.1 * np.eye(control_dim)
        Qf = 10.0 * Q
        x0 = rng.standard_normal(state_dim)
        return LinearQuadraticProblem(A, B, Q, R, Qf, x0, horizon)
