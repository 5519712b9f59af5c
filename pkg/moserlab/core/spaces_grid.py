"""
Discrete domains, weights, grid functions and weighted norms.

Geometry is a cell-centered uniform grid on the unit box with an active-cell
mask (unit square, disc inscribed in the square, L-shape). Values live on
cell centers for time levels n = 0..nt; level 0 is the initial slice.
Inactive cells carry 0, which is the extension by zero across the boundary.

Space-time integrals use midpoint quadrature in space (h² per active cell) and
the right-endpoint rule in time (levels 1..nt, weight Δt), matching backward Euler.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from moserlab.exceptions import ParameterError

logger = logging.getLogger(__name__)

SHAPES = ("unit-square", "unit-ball", "L-shape")
DIRECTIONS = ("west", "east", "south", "north")
# outward normal → (axis, step)
_NORMALS = {"west": (0, -1), "east": (0, 1), "south": (1, -1), "north": (1, 1)}


# ==================== PARAMETER CHAIN ====================
def admissible_tbar_interval(N: int) -> Tuple[Fraction, Fraction]:
    """Open interval ((2N²+2N−2)/(N²+2N−1), 2) for t̄"""
    return Fraction(2 * N * N + 2 * N - 2, N * N + 2 * N - 1), Fraction(2)


@dataclass(frozen=True)
class ParamChain:
    N: int
    tbar: float
    r: float
    tbar_star: float
    rbar: float

    @property
    def kappa(self) -> float:
        return self.r / self.rbar

    def ordering_holds(self) -> bool:
        return 1 < self.tbar < 2 < self.r < self.tbar_star and 2 < self.rbar < self.r

    def as_dict(self) -> Dict[str, float]:
        return {"N": self.N, "tbar": self.tbar, "r": self.r, "tbar_star": self.tbar_star,
                "rbar": self.rbar, "kappa": self.kappa}


def derive_params(N: int, tbar: float, rbar_fraction: float = 0.5) -> ParamChain:
    """
    r = (t̄(N+1)−2)/(N−t̄), t̄* = t̄N/(N−t̄), r̄ = 2 + fraction·(r−2).
    Raises: ParameterError if t̄ or the fraction is outside its interval
    """
    if int(N) != N or N < 2:
        raise ParameterError(f"Dimension N must be an integer >= 2, got {N}")
    lo, hi = admissible_tbar_interval(int(N))
    if not lo < tbar < hi:
        raise ParameterError(f"tbar={tbar} outside ({lo} ≈ {float(lo):.6f}, {hi}) for N={N}")
    if not 0 < rbar_fraction < 1:
        raise ParameterError(f"rbar_fraction must lie in (0,1), got {rbar_fraction}")

    r = (tbar * (N + 1) - 2) / (N - tbar)
    tbar_star = tbar * N / (N - tbar)
    rbar = 2 + rbar_fraction * (r - 2)
    chain = ParamChain(N=int(N), tbar=float(tbar), r=r, tbar_star=tbar_star, rbar=rbar)
    if not chain.ordering_holds():
        raise ParameterError(f"Parameter chain ordering violated: {chain.as_dict()}")
    return chain


# ==================== DOMAIN & GRID ====================
@dataclass(frozen=True)
class Domain:
    shape: str = "unit-square"
    dirichlet_faces: Tuple[str, ...] = ("all",)
    T: float = 1.0
    N: int = 2

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ParameterError(f"Unsupported shape {self.shape!r}; choose from {SHAPES}")
        if self.N != 2:
            raise ParameterError("Only N = 2 grids are supported")
        faces = tuple(self.dirichlet_faces)
        if not faces or any(f not in DIRECTIONS + ("all",) for f in faces):
            raise ParameterError(f"Invalid Dirichlet face selector {faces}")
        object.__setattr__(self, "dirichlet_faces", faces)
        if not self.T > 0:
            raise ParameterError(f"Final time must be positive, got T={self.T}")

    def selected_directions(self) -> Tuple[str, ...]:
        return DIRECTIONS if "all" in self.dirichlet_faces else self.dirichlet_faces

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.shape == "unit-square":
            return np.ones(np.broadcast(x, y).shape, dtype=bool)
        if self.shape == "unit-ball":
            return (x - 0.5) ** 2 + (y - 0.5) ** 2 < 0.25
        return ~((x > 0.5) & (y > 0.5))

    def boundary_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Exact dist(x, ∂Ω) for interior points"""
        if self.shape == "unit-ball":
            return 0.5 - np.hypot(x - 0.5, y - 0.5)
        box = np.minimum(np.minimum(x, 1 - x), np.minimum(y, 1 - y))
        if self.shape == "unit-square":
            return box
        notch = np.hypot(np.maximum(0.5 - x, 0.0), np.maximum(0.5 - y, 0.0))
        return np.minimum(box, notch)


class Grid:
    """Cell-centered n×n grid over the unit box with nt backward-Euler steps"""

    def __init__(self, domain: Domain, n: int, nt: int):
        if n < 4 or nt < 1:
            raise ParameterError(f"Grid needs n >= 4 and nt >= 1, got n={n}, nt={nt}")
        self.domain = domain
        self.n = int(n)
        self.nt = int(nt)
        self.h = 1.0 / self.n
        self.dt = domain.T / self.nt
        self.centers = (np.arange(self.n) + 0.5) * self.h
        self.X, self.Y = np.meshgrid(self.centers, self.centers, indexing="ij")
        self.times = np.linspace(0.0, domain.T, self.nt + 1)
        self.mask = domain.contains(self.X, self.Y)

        # boundary faces: active cell whose neighbour in a direction is inactive or outside
        padded = np.pad(self.mask, 1, constant_values=False)
        self.boundary_faces: Dict[str, np.ndarray] = {}
        for direction, (axis, step) in _NORMALS.items():
            neighbour = np.roll(padded, -step, axis=axis)[1:-1, 1:-1]
            self.boundary_faces[direction] = self.mask & ~neighbour
        selected = domain.selected_directions()
        self.dirichlet_faces = {
            d: (faces if d in selected else np.zeros_like(faces))
            for d, faces in self.boundary_faces.items()
        }
        if not any(f.any() for f in self.dirichlet_faces.values()):
            raise ParameterError("Dirichlet set A has no faces on this grid")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.h * self.h

    @property
    def measure(self) -> float:
        """|Ω_h|"""
        return float(self.mask.sum()) * self.cell_volume

    @property
    def Q_measure(self) -> float:
        return self.domain.T * self.measure

    def dirichlet_face_midpoints(self) -> np.ndarray:
        points = []
        for direction, faces in self.dirichlet_faces.items():
            axis, step = _NORMALS[direction]
            xs, ys = self.X[faces].copy(), self.Y[faces].copy()
            if axis == 0:
                xs += step * self.h / 2
            else:
                ys += step * self.h / 2
            points.append(np.column_stack([xs, ys]))
        return np.vstack(points)

    def dirichlet_adjacent_cells(self) -> np.ndarray:
        touching = np.zeros(self.shape, dtype=bool)
        for faces in self.dirichlet_faces.values():
            touching |= faces
        return touching

    def distance_to_A(self) -> np.ndarray:
        """Distance from every cell center to the nearest Dirichlet face midpoint"""
        tree = cKDTree(self.dirichlet_face_midpoints())
        dist, _ = tree.query(np.column_stack([self.X.ravel(), self.Y.ravel()]))
        return np.where(self.mask, dist.reshape(self.shape), 0.0)


# ==================== FIELDS ====================
@dataclass
class WeightField:
    """Per-cell lower weight b, upper weight b̄ and matrix B"""
    grid: Grid
    b: np.ndarray
    bbar: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        self.b = np.broadcast_to(np.asarray(self.b, dtype=float), (n, n)).copy()
        self.bbar = np.broadcast_to(np.asarray(self.bbar, dtype=float), (n, n)).copy()
        self.B = np.asarray(self.B, dtype=float)
        if self.B.shape != (n, n, 2, 2):
            raise ParameterError(f"B must have shape {(n, n, 2, 2)}, got {self.B.shape}")

    @classmethod
    def identity(cls, grid: Grid, value: float = 1.0) -> "WeightField":
        return cls.diagonal(grid, [np.full(grid.shape, value), np.full(grid.shape, value)])

    @classmethod
    def diagonal(cls, grid: Grid, diag: Sequence[np.ndarray]) -> "WeightField":
        d = [np.broadcast_to(np.asarray(v, dtype=float), grid.shape) for v in diag]
        B = np.zeros(grid.shape + (2, 2))
        B[..., 0, 0], B[..., 1, 1] = d[0], d[1]
        return cls(grid=grid, b=np.minimum(d[0], d[1]), bbar=np.maximum(d[0], d[1]), B=B)

    def is_diagonal(self) -> bool:
        return bool(np.all(self.B[..., 0, 1] == 0) and np.all(self.B[..., 1, 0] == 0))


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.nt + 1,) + self.grid.shape
        if self.values.shape != expected:
            raise ParameterError(f"GridFunction values have shape {self.values.shape}, expected {expected}")

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros((grid.nt + 1,) + grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray, float], np.ndarray]) -> "GridFunction":
        values = np.stack([np.broadcast_to(fn(grid.X, grid.Y, t), grid.shape) for t in grid.times])
        return cls(grid, np.where(grid.mask, values, 0.0))

    def positive_part(self) -> "GridFunction":
        return GridFunction(self.grid, np.maximum(self.values, 0.0))

    def negative_part(self) -> "GridFunction":
        return GridFunction(self.grid, np.maximum(-self.values, 0.0))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values[:, self.grid.mask]))) if self.grid.mask.any() else 0.0


def _require_same_grid(u: GridFunction, w: WeightField) -> None:
    if u.grid is not w.grid and (u.grid.n != w.grid.n or u.grid.domain != w.grid.domain):
        raise ParameterError("GridFunction and WeightField live on different grids")


# ==================== DISCRETE CALCULUS ====================
def discrete_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """
    Central differences inside, one-sided at the box edges; the last two axes
    are space. Returns an array with a trailing axis of length 2.
    """
    gx, gy = np.gradient(values, h, h, axis=(-2, -1))
    return np.stack([gx, gy], axis=-1)


def _space_weights(grid: Grid) -> np.ndarray:
    return np.where(grid.mask, grid.cell_volume, 0.0)


def _time_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.nt + 1, grid.dt)
    w[0] = 0.0
    return w


def integrate(grid: Grid, density: np.ndarray) -> float:
    """Σ_n Δt Σ_cells h² density over levels 1..nt (or space only for 2-D input)"""
    space = _space_weights(grid)
    if density.ndim == 2:
        return float(np.sum(space * density))
    return float(np.einsum("n,nij,ij->", _time_weights(grid), density, space))


def lp_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    """
    Discrete L^p(Q) (3-D input) or L^p(Ω) (2-D input) norm, evaluated with the
    max-scaling ‖u‖_p = m·(∫(|u|/m)^p)^(1/p) so large p never overflows.
    """
    if p <= 0:
        raise ParameterError(f"L^p norm needs p > 0, got {p}")
    magnitude = np.abs(values)
    if values.ndim == 3:
        relevant = magnitude[1:][:, grid.mask]
    else:
        relevant = magnitude[grid.mask]
    m = float(relevant.max()) if relevant.size else 0.0
    if m == 0.0:
        return 0.0
    with np.errstate(under="ignore"):
        scaled = integrate(grid, np.where(grid.mask, magnitude / m, 0.0) ** p)
    return m * scaled ** (1.0 / p)


@dataclass
class NormSet:
    b_T: float
    B_T: float
    V_B_T: float
    lp: Dict[float, float] = field(default_factory=dict)


def weighted_norms(u: GridFunction, w: WeightField, p_list: Iterable[float] = (2.0,)) -> NormSet:
    """‖u‖_{b,T}, ‖u‖_{B,T}, ‖u‖_{V,B,T} and ‖u‖_{L^p(Q)} for each requested p"""
    _require_same_grid(u, w)
    grid = u.grid
    grad = discrete_gradient(u.values, grid.h)
    sq = np.einsum("nijk,nijk->nij", grad, grad)
    quad = np.einsum("nijk,ijkl,nijl->nij", grad, w.B, grad)

    b_T = math.sqrt(max(integrate(grid, w.b[None, :, :] * sq), 0.0))
    B_T = math.sqrt(max(integrate(grid, quad), 0.0))

    dudt = np.diff(u.values, axis=0) / grid.dt
    # forward differences on levels 0..nt-1, weight Δt each
    dt_sq = grid.dt * float(np.einsum("nij,ij->", dudt ** 2, _space_weights(grid)))
    V_B_T = math.sqrt(dt_sq) + B_T

    return NormSet(b_T=b_T, B_T=B_T, V_B_T=V_B_T,
                   lp={float(p): lp_norm(u.values, grid, float(p)) for p in p_list})


def spatial_norms(v: np.ndarray, w: WeightField, p_list: Iterable[float] = (2.0,)) -> Dict[str, float]:
    """One time slice: ‖v‖_b = (∫ b|∇v|²)^½, ‖v‖_B = (∫ ∇v·B∇v)^½ and L^p(Ω)"""
    grid = w.grid
    if v.shape != grid.shape:
        raise ParameterError(f"Slice shape {v.shape} does not match grid {grid.shape}")
    grad = discrete_gradient(v, grid.h)
    out = {
        "b": math.sqrt(max(integrate(grid, w.b * np.einsum("ijk,ijk->ij", grad, grad)), 0.0)),
        "B": math.sqrt(max(integrate(grid, np.einsum("ijk,ijkl,ijl->ij", grad, w.B, grad)), 0.0)),
    }
    for p in p_list:
        out[f"L{float(p):g}"] = lp_norm(v, grid, float(p))
    return out


# ==================== SANDWICH ====================
@dataclass
class SandwichResult:
    passed: bool
    cell: Optional[Tuple[int, int]] = None
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None


def check_sandwich(w: WeightField, tol: float = 1e-12) -> SandwichResult:
    """Per active cell: λ_min(B) ≥ b − tol and λ_max(B) ≤ b̄ + tol"""
    sym = 0.5 * (w.B + np.swapaxes(w.B, -1, -2))
    eig = np.linalg.eigvalsh(sym)
    lo, hi = eig[..., 0], eig[..., -1]
    bad = w.grid.mask & ((lo < w.b - tol) | (hi > w.bbar + tol))
    if bad.any():
        i, j = (int(k) for k in np.argwhere(bad)[0])
        logger.warning(f"⚠️ Sandwich violated in cell ({i},{j}): λ=({lo[i, j]:.4g},{hi[i, j]:.4g}), "
                       f"b={w.b[i, j]:.4g}, b̄={w.bbar[i, j]:.4g}")
        return SandwichResult(False, (i, j), float(lo[i, j]), float(hi[i, j]))
    return SandwichResult(True, None, float(lo[w.grid.mask].min()), float(hi[w.grid.mask].max()))


# ==================== ADMISSIBILITY ====================
SampleFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def admissibility_ratio(v: np.ndarray, grid: Grid, chain: ParamChain) -> Optional[float]:
    """‖v‖_{L^r(Ω)} / ‖∇v‖_{L^t̄(Ω)}, or None when the gradient vanishes"""
    v = np.where(grid.mask, v, 0.0)
    grad = discrete_gradient(v, grid.h)
    grad_norm = lp_norm(np.sqrt(np.einsum("ijk,ijk->ij", grad, grad)), grid, chain.tbar)
    if grad_norm == 0.0 or not np.isfinite(grad_norm):
        return None
    return lp_norm(v, grid, chain.r) / grad_norm


def random_test_family(grid: Grid, n_samples: int, seed: int) -> List[np.ndarray]:
    """
    Random trigonometric + Gaussian bump combinations times the distance-to-A
    cutoff. Draws happen in a fixed order per sample, so the first k samples
    do not depend on n_samples.
    """
    rng = np.random.default_rng(seed)
    cutoff = grid.distance_to_A()
    X, Y = grid.X, grid.Y
    family = []
    for _ in range(n_samples):
        modes = rng.integers(1, 4)
        v = np.zeros(grid.shape)
        for _ in range(3):
            kx, ky = rng.integers(0, 5, size=2)
            phase = rng.uniform(0, 2 * np.pi, size=2)
            amp = rng.normal()
            v += amp * np.cos(kx * np.pi * X + phase[0]) * np.cos(ky * np.pi * Y + phase[1])
        for _ in range(modes):
            cx, cy = rng.uniform(0, 1, size=2)
            width = rng.uniform(0.05, 0.5)
            v += rng.normal() * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / width ** 2)
        family.append(v * cutoff)
    return family


def estimate_admissibility(domain: Domain, chain: ParamChain, n_samples: int = 200,
                           seed: int = 0, grid_n: int = 64,
                           family: Optional[Sequence[SampleFunction]] = None) -> float:
    """
    C_est = max ‖v‖_{L^r}/‖∇v‖_{L^t̄} over sampled test functions vanishing on A.
    A custom family of callables v(X, Y) replaces the random one.
    Raises: ParameterError when every sample has zero gradient
    """
    grid = Grid(domain, grid_n, 1)
    if family is None:
        if n_samples < 100:
            raise ParameterError(f"estimate_admissibility needs at least 100 samples, got {n_samples}")
        samples = random_test_family(grid, n_samples, seed)
    else:
        samples = [np.broadcast_to(fn(grid.X, grid.Y), grid.shape) for fn in family]

    ratios = [admissibility_ratio(v, grid, chain) for v in samples]
    used = [r for r in ratios if r is not None]
    if not used:
        raise ParameterError("Every admissibility sample was degenerate (zero gradient)")
    if len(used) < len(ratios):
        logger.info(f"Skipped {len(ratios) - len(used)} degenerate admissibility samples")
    c_est = max(used)
    logger.info(f"Admissibility estimate C_est={c_est:.6g} from {len(used)} samples ({domain.shape})")
    return c_est


def check_embedding_chain(domain: Domain, chain: ParamChain, c_est: float,
                          n_samples: int = 100, seed: int = 0, grid_n: int = 64) -> Tuple[bool, float]:
    """
    Space-time form with b ≡ 1 on time-constant extensions w(x,t) = v(x):
    ‖w‖_{L^r(Q)} ≤ C_Q‖w‖_{b,T} with C_Q = C_est·T^(1/r−1/2)·|Ω|^(1/t̄−1/2).
    Returns: (holds on every sample, worst ratio ‖w‖_{L^r(Q)}/(C_Q‖w‖_{b,T}))
    """
    grid = Grid(domain, grid_n, 1)
    T = domain.T
    c_q = c_est * T ** (1 / chain.r - 0.5) * grid.measure ** (1 / chain.tbar - 0.5)
    worst = 0.0
    for v in random_test_family(grid, n_samples, seed):
        grad = discrete_gradient(np.where(grid.mask, v, 0.0), grid.h)
        energy = math.sqrt(T * integrate(grid, np.einsum("ijk,ijk->ij", grad, grad)))
        if energy == 0.0:
            continue
        lr = T ** (1 / chain.r) * lp_norm(v, grid, chain.r)
        worst = max(worst, lr / (c_q * energy))
    return worst <= 1.0 + 1e-12, worst
