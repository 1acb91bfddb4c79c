"""Matrix-variate normal / joint-t sampling and the synthetic factor scenarios.

Data-generating process per replication::

    vec(F_t) = phi * vec(F_{t-1}) + sqrt(1 - phi^2) * vec(eps_t)
    vec(E_t) = psi * vec(E_{t-1}) + sqrt(1 - psi^2) * vec(U_t)
    X_t      = R F_t C^T + E_t

with ``R, C`` uniform on [-1, 1] and ``(eps_t, U_t)`` jointly normal or jointly
t(nu): ``vec(eps_t) ~ I`` and ``vec(U_t) ~ V_E ⊗ U_E`` scatter, where ``U_E``
and ``V_E`` are equicorrelation matrices with off-diagonals ``1/p1``, ``1/p2``.

Random streams come from :func:`stream`, a Philox generator keyed by
``(seed, replication, stream-id)``, so replications can run in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .tensor_io import MatrixSeries

BURN_IN = 100
EIG_FLOOR = 1e-12

# stream ids within one replication
LOADINGS, INNOVATIONS = 0, 1


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the sub-stream ``key`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def replication_seed(master_seed: int, rep: int) -> int:
    """64-bit seed for replication ``rep``, derived by splitting ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(rep),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ScenarioSpec:
    T: int
    p1: int
    p2: int
    k1: int = 3
    k2: int = 3
    dist: str = "normal"
    nu: int | None = None
    phi: float = 0.0
    psi: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T < 1 or self.p1 < 1 or self.p2 < 1:
            raise ParameterError(f"dimensions must be positive (T={self.T}, p1={self.p1}, p2={self.p2})")
        if not (1 <= self.k1 <= self.p1 and 1 <= self.k2 <= self.p2):
            raise ParameterError(f"need 1 <= k1 <= p1 and 1 <= k2 <= p2, got k=({self.k1}, {self.k2})")
        if self.dist not in ("normal", "t"):
            raise ParameterError(f"dist must be 'normal' or 't', got {self.dist!r}")
        if self.dist == "t" and (self.nu is None or int(self.nu) != self.nu or self.nu < 1):
            raise ParameterError(f"t distribution needs an integer nu >= 1, got {self.nu!r}")
        if not (abs(self.phi) < 1 and abs(self.psi) < 1):
            raise ParameterError(f"AR coefficients must satisfy |phi|, |psi| < 1 (phi={self.phi}, psi={self.psi})")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")

    @property
    def label(self) -> str:
        return "normal" if self.dist == "normal" else f"t{self.nu}"

    @classmethod
    def scenario(cls, name: str, dist: str, T: int, p1: int, p2: int, k1: int = 3, k2: int = 3,
                 seed: int = 0) -> "ScenarioSpec":
        """Scenario ``A`` (phi = psi = 0) or ``B`` (phi = psi = 0.1) with a CLI-style
        distribution name: ``normal``, ``t1``, ``t2``, ``t3``, ..."""
        ar = {"A": 0.0, "B": 0.1}
        if name not in ar:
            raise ParameterError(f"unknown scenario {name!r}; expected 'A' or 'B'")
        family, nu = parse_dist(dist)
        return cls(T=T, p1=p1, p2=p2, k1=k1, k2=k2, dist=family, nu=nu, phi=ar[name], psi=ar[name], seed=seed)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=seed)


def parse_dist(name: str) -> tuple[str, int | None]:
    if name == "normal":
        return "normal", None
    if name.startswith("t") and name[1:].isdigit() and int(name[1:]) >= 1:
        return "t", int(name[1:])
    raise ParameterError(f"unknown distribution {name!r}; expected 'normal' or 't<nu>'")


@dataclass(frozen=True)
class GroundTruth:
    R: np.ndarray
    C: np.ndarray
    F: np.ndarray  # (T, k1, k2)
    E: np.ndarray  # (T, p1, p2)
    S: np.ndarray  # (T, p1, p2), R F_t C^T


def corr_matrix(p: int, offdiag: float) -> np.ndarray:
    """Equicorrelation matrix: unit diagonal, constant ``offdiag`` elsewhere."""
    if p < 1:
        raise ParameterError("dimension must be positive")
    M = np.full((p, p), float(offdiag))
    np.fill_diagonal(M, 1.0)
    # eigenvalues are 1 + (p-1)*offdiag and 1 - offdiag
    if min(1.0 + (p - 1) * offdiag, 1.0 - offdiag if p > 1 else 1.0) <= 0:
        raise ParameterError(f"equicorrelation matrix with p={p}, offdiag={offdiag} is not positive definite")
    return M


def sqrtm_pd(M: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition; requires positive definiteness."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-10 * max(1.0, float(np.abs(M).max()))):
        raise ParameterError("matrix is not symmetric")
    w, V = np.linalg.eigh(M)
    if w[0] < EIG_FLOOR:
        raise ParameterError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3g})")
    return (V * np.sqrt(w)) @ V.T


def sample_matrix_normal(p1: int, p2: int, U: np.ndarray, V: np.ndarray, rng: np.random.Generator,
                         size: int | None = None) -> np.ndarray:
    """Draw ``U^{1/2} Z V^{1/2}``, i.e. ``vec(X) ~ N(0, V ⊗ U)``.

    With ``size`` a stack of shape ``(size, p1, p2)`` is returned.
    """
    A, B = sqrtm_pd(U), sqrtm_pd(V)
    if A.shape[0] != p1 or B.shape[0] != p2:
        raise ParameterError("row/column scale matrices do not match (p1, p2)")
    shape = (p1, p2) if size is None else (size, p1, p2)
    return A @ rng.standard_normal(shape) @ B


def _joint_innovations(spec: ScenarioSpec, A: np.ndarray, B: np.ndarray, n: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    eps = rng.standard_normal((n, spec.k1, spec.k2))
    U = A @ rng.standard_normal((n, spec.p1, spec.p2)) @ B
    if spec.dist == "t":
        # one mixing scalar shared by both blocks
        scale = 1.0 / np.sqrt(rng.chisquare(spec.nu, size=n) / spec.nu)
        eps = eps * scale[:, None, None]
        U = U * scale[:, None, None]
    return eps, U


def sample_joint_innovation(spec: ScenarioSpec, U_E: np.ndarray, V_E: np.ndarray,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One jointly elliptical (factor innovation, noise innovation) pair."""
    eps, U = _joint_innovations(spec, sqrtm_pd(U_E), sqrtm_pd(V_E), 1, rng)
    return eps[0], U[0]


def generate_scenario(spec: ScenarioSpec, loadings: tuple[np.ndarray, np.ndarray] | None = None
                      ) -> tuple[MatrixSeries, GroundTruth]:
    """Simulate one replication of the factor model described by ``spec``.

    ``loadings`` overrides the per-replication draw of ``(R, C)``.
    """
    if loadings is None:
        R, C = draw_loadings(spec.p1, spec.p2, spec.k1, spec.k2, stream(spec.seed, LOADINGS))
    else:
        R, C = (np.asarray(m, dtype=np.float64) for m in loadings)
        if R.shape != (spec.p1, spec.k1) or C.shape != (spec.p2, spec.k2):
            raise ParameterError("supplied loadings do not match the scenario dimensions")
    A = sqrtm_pd(corr_matrix(spec.p1, 1.0 / spec.p1))
    B = sqrtm_pd(corr_matrix(spec.p2, 1.0 / spec.p2))
    rng = stream(spec.seed, INNOVATIONS)
    n = BURN_IN + spec.T
    eps, U = _joint_innovations(spec, A, B, n, rng)

    F = _ar1(eps, spec.phi)[BURN_IN:]
    E = _ar1(U, spec.psi)[BURN_IN:]
    S = np.einsum("ia,tab,jb->tij", R, F, C)
    X = S + E
    # store the noise as X - S so that X - S == E holds bit for bit
    return MatrixSeries(X), GroundTruth(R=R, C=C, F=F, E=X - S, S=S)


def draw_loadings(p1: int, p2: int, k1: int, k2: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    R = rng.uniform(-1.0, 1.0, size=(p1, k1))
    C = rng.uniform(-1.0, 1.0, size=(p2, k2))
    return R, C


def _ar1(innov: np.ndarray, coef: float) -> np.ndarray:
    if coef == 0.0:
        return innov.copy()
    out = np.empty_like(innov)
    scale = np.sqrt(1.0 - coef * coef)
    prev = np.zeros(innov.shape[1:])
    for t in range(innov.shape[0]):
        prev = coef * prev + scale * innov[t]
        out[t] = prev
    return out
