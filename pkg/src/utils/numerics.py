from typing import Callable

import numpy as np
import numpy.typing as npt

DoubleArray = npt.NDArray[np.float64]


def central_difference(
    fn: Callable[[DoubleArray], DoubleArray],
    z: npt.ArrayLike,
    step: float = 1e-6,
) -> DoubleArray:
    """
    Batched central finite-difference Jacobian.

    fn must accept leading batch dimensions: (..., n) -> (..., m). Every
    perturbation of every batch element is evaluated in a single call, so a
    whole trajectory linearizes in one vectorized evaluation.

    Args:
        fn: Function to differentiate
        z: Evaluation points, shape (..., n)
        step: Relative step; coordinate i uses step·(1 + |z_i|)

    Returns:
        Jacobian of shape (..., m, n)
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    h = step * (1.0 + np.abs(z))
    offsets = np.einsum("...j,jk->...jk", h, np.eye(n))
    probes = np.concatenate(
        [z[..., None, :] + offsets, z[..., None, :] - offsets], axis=-2
    )
    values = np.asarray(fn(probes), dtype=float)
    forward, backward = values[..., :n, :], values[..., n:, :]
    jac = (forward - backward) / (2.0 * h[..., :, None])
    return np.swapaxes(jac, -1, -2)


def symmetrize(matrix: DoubleArray) -> DoubleArray:
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def unit(vectors: npt.ArrayLike) -> DoubleArray:
    """Normalise along the last axis."""
    v = np.asarray(vectors, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_std(values: DoubleArray, axis: int = 0) -> DoubleArray:
    """Sample standard deviation (ddof=1); a single sample has zero spread."""
    if values.shape[axis] < 2:
        return np.zeros(np.delete(values.shape, axis))
    return np.std(values, axis=axis, ddof=1)
