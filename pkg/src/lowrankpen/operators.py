"""Observation designs, the linear sampling operator, loss, and projections.

Two designs realize the observation model y_i = <X_i, Theta> + eps_i:

* :class:`CompletionDesign` -- each X_i is a one-hot indicator e_j e_k^T, so
  the forward map reads matrix entries (sampled uniformly with replacement).
* :class:`SensingDesign` -- dense Gaussian measurement matrices; either i.i.d.
  standard normal entries or a correlated ensemble given by a Cholesky factor
  applied to vec(X_i) (row-major vectorization).

Designs and observation sets are immutable after construction; their arrays
are marked read-only so they can be shared across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = "identity"
CHOLESKY = "cholesky"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CompletionDesign:
    """Uniformly sampled entry observations of an m1 x m2 matrix.

    ``entries`` holds n index pairs (j, k), 0-based, possibly with
    duplicates (sampling is with replacement).
    """

    m1: int
    m2: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("matrix dimensions must be positive")
        ent = np.asarray(self.entries, dtype=np.int64)
        if ent.ndim != 2 or ent.shape[1] != 2 or ent.shape[0] < 1:
            raise ValueError("entries must be a nonempty (n, 2) index array")
        if ent[:, 0].min() < 0 or ent[:, 0].max() >= self.m1:
            raise ValueError("row index out of range")
        if ent[:, 1].min() < 0 or ent[:, 1].max() >= self.m2:
            raise ValueError("column index out of range")
        object.__setattr__(self, "entries", _freeze(ent))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SensingDesign:
    """Dense random measurement matrices X_1, ..., X_n.

    ``ensemble`` records how the matrices were drawn: ``"identity"`` for
    i.i.d. N(0, 1) entries or ``"cholesky"`` when vec(X_i) = L g with g
    standard normal.  The factor is kept for metadata only.
    """

    m1: int
    m2: int
    matrices: np.ndarray
    ensemble: str = IDENTITY
    cholesky: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("matrix dimensions must be positive")
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1:] != (self.m1, self.m2) or mats.shape[0] < 1:
            raise ValueError("matrices must have shape (n, m1, m2) with n >= 1")
        if self.ensemble not in (IDENTITY, CHOLESKY):
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        object.__setattr__(self, "matrices", _freeze(mats))
        if self.cholesky is not None:
            object.__setattr__(self, "cholesky", _freeze(np.asarray(self.cholesky, float)))

    @property
    def n(self) -> int:
        return self.matrices.shape[0]


Design = CompletionDesign | SensingDesign


@dataclass(frozen=True)
class ObservationSet:
    """A design together with its responses y and the noise level sigma."""

    design: Design
    y: np.ndarray
    sigma: float = 0.0

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or y.shape[0] != self.design.n:
            raise ValueError("y must be a vector of length design.n")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "y", _freeze(y))

    @property
    def n(self) -> int:
        return self.design.n


@dataclass(frozen=True)
class Subspace:
    """Orthonormal left/right frames spanning a rank-r matrix subspace."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self) -> None:
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise ValueError("U and V must be 2-D with the same number of columns")
        r = U.shape[1]
        for name, F in (("U", U), ("V", V)):
            gram = F.T @ F
            if r and np.abs(gram - np.eye(r)).max() > 1e-10:
                raise ValueError(f"{name} columns are not orthonormal within 1e-10")
        object.__setattr__(self, "U", _freeze(U))
        object.__setattr__(self, "V", _freeze(V))

    @property
    def r(self) -> int:
        return self.U.shape[1]

    def subframe(self, indices) -> "Subspace":
        """Restriction to a subset of frame columns (e.g. the large-value block)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Subspace(self.U[:, idx], self.V[:, idx])


def _check_theta(design: Design, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (design.m1, design.m2):
        raise ValueError(
            f"expected a {design.m1} x {design.m2} matrix, got shape {theta.shape}"
        )
    return theta


def apply_forward(design: Design, theta: np.ndarray) -> np.ndarray:
    """Forward map: component i equals <X_i, Theta>."""
    theta = _check_theta(design, theta)
    if isinstance(design, CompletionDesign):
        return theta[design.entries[:, 0], design.entries[:, 1]].copy()
    return np.einsum("ijk,jk->i", design.matrices, theta)


def apply_adjoint(design: Design, v: np.ndarray) -> np.ndarray:
    """Adjoint map: sum_i v_i X_i (scatter-add for completion)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (design.n,):
        raise ValueError(f"expected a length-{design.n} vector, got shape {v.shape}")
    if isinstance(design, CompletionDesign):
        out = np.zeros((design.m1, design.m2))
        np.add.at(out, (design.entries[:, 0], design.entries[:, 1]), v)
        return out
    return np.einsum("i,ijk->jk", v, design.matrices)


def loss_value(obs: ObservationSet, theta: np.ndarray) -> float:
    """Quadratic empirical loss ||y - X(Theta)||^2 / (2n)."""
    resid = obs.y - apply_forward(obs.design, theta)
    return float(resid @ resid) / (2.0 * obs.n)


def loss_gradient(obs: ObservationSet, theta: np.ndarray) -> np.ndarray:
    """Gradient of the quadratic loss: X*(X(Theta) - y) / n."""
    resid = apply_forward(obs.design, theta) - obs.y
    return apply_adjoint(obs.design, resid) / obs.n


def project_onto(sub: Subspace, a: np.ndarray) -> np.ndarray:
    """Projection U U^T A V V^T onto the subspace spanned by the frames."""
    a = np.asarray(a, dtype=float)
    if a.shape != (sub.U.shape[0], sub.V.shape[0]):
        raise ValueError("matrix shape does not match the subspace frames")
    return sub.U @ (sub.U.T @ a @ sub.V) @ sub.V.T


def project_complement(sub: Subspace, a: np.ndarray) -> np.ndarray:
    """Projection (I - U U^T) A (I - V V^T) onto the orthogonal complement."""
    a = np.asarray(a, dtype=float)
    if a.shape != (sub.U.shape[0], sub.V.shape[0]):
        raise ValueError("matrix shape does not match the subspace frames")
    ua = sub.U.T @ a
    av = a @ sub.V
    return a - sub.U @ ua - av @ sub.V.T + sub.U @ (ua @ sub.V) @ sub.V.T


def sample_completion_design(
    rng: np.random.Generator, m1: int, m2: int, n: int
) -> CompletionDesign:
    """Draw n i.i.d. uniform index pairs with replacement."""
    if n < 1:
        raise ValueError("n must be at least 1")
    jj = rng.integers(0, m1, size=n)
    kk = rng.integers(0, m2, size=n)
    return CompletionDesign(m1=m1, m2=m2, entries=np.column_stack([jj, kk]))


def sample_sensing_design(
    rng: np.random.Generator,
    m1: int,
    m2: int,
    n: int,
    ensemble: str = IDENTITY,
    cholesky: np.ndarray | None = None,
) -> SensingDesign:
    """Draw n dense Gaussian measurement matrices.

    With ``ensemble="identity"`` the entries are i.i.d. N(0, 1).  With
    ``ensemble="cholesky"`` each vec(X_i) (row-major) equals L g for the
    supplied lower-triangular factor L with positive diagonal.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d = m1 * m2
    if ensemble == IDENTITY:
        mats = rng.standard_normal((n, m1, m2))
        return SensingDesign(m1=m1, m2=m2, matrices=mats, ensemble=IDENTITY)
    if ensemble != CHOLESKY:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    L = np.asarray(cholesky, dtype=float)
    if L.shape != (d, d):
        raise ValueError(f"Cholesky factor must be {d} x {d}, got {L.shape}")
    if np.any(np.triu(L, 1) != 0):
        raise ValueError("Cholesky factor must be lower triangular")
    if np.any(np.diag(L) <= 0):
        raise ValueError("Cholesky factor must have a positive diagonal")
    g = rng.standard_normal((n, d))
    mats = (g @ L.T).reshape(n, m1, m2)
    return SensingDesign(m1=m1, m2=m2, matrices=mats, ensemble=CHOLESKY, cholesky=L)


def generate_observations(
    design: Design, theta_star: np.ndarray, sigma: float, rng: np.random.Generator
) -> ObservationSet:
    """Form y = X(Theta*) + eps with eps ~ N(0, sigma^2 I)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    y = apply_forward(design, theta_star)
    if sigma > 0:
        y = y + sigma * rng.standard_normal(design.n)
    return ObservationSet(design=design, y=y, sigma=float(sigma))


def spikiness(theta: np.ndarray) -> float:
    """Spikiness ratio sqrt(m1*m2) * ||Theta||_inf / ||Theta||_F, in [1, sqrt(m1*m2)]."""
    theta = np.asarray(theta, dtype=float)
    fro = float(np.linalg.norm(theta))
    if fro == 0.0:
        raise ValueError("spikiness is undefined for the zero matrix")
    m1, m2 = theta.shape
    return float(np.sqrt(m1 * m2) * np.abs(theta).max() / fro)
