"""
Claim registry and executable re-verification of the auxiliary-function lemmas.

Three kinds of claims:
  exact-identity         LHS and RHS expand to the same canonical Expr (no tolerance)
  certified-positivity   bisection certificate that a polynomial clears a threshold
  sampled-inequality     pointwise float check on deterministic grids plus seeded
                         random points, relative tolerance INEQUALITY_RTOL

Exact and positivity claims are data (data/claims_v1.sexp); sampled inequalities
are defined below because they need the float evaluators.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from moserlab.config import settings
from moserlab.core import aux_functions as aux
from moserlab.core.poly_algebra import (
    certify_positive,
    equal_exact,
    expand_collect,
    substitute,
    to_sexpr,
)
from moserlab.core.sexpr import Node, Quoted, dumps, parse_all
from moserlab.exceptions import (
    CounterexampleFound,
    InconclusiveCertification,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)


class ClaimKind(str, Enum):
    EXACT = "exact-identity"
    POSITIVITY = "certified-positivity"
    SAMPLED = "sampled-inequality"


class ClaimStatus(str, Enum):
    PENDING = "pending"
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"
    ERROR = "error"


# ==================== REGISTRY ====================
@dataclass
class ClaimRegistryEntry:
    label: str
    kind: ClaimKind
    domain: str
    payload: Any
    status: ClaimStatus = ClaimStatus.PENDING


@dataclass(frozen=True)
class IdentityPayload:
    lhs: Node
    rhs: Node


@dataclass(frozen=True)
class PositivityPayload:
    poly: Node
    lo: Fraction
    hi: Fraction
    threshold: Fraction
    var: str = "t"
    s_samples: Tuple[Fraction, ...] = ()


@dataclass(frozen=True)
class SampleSpec:
    """Grids for a sampled inequality; l_grid is ignored by the small-s family"""
    s_grid: Tuple[float, ...]
    t_grid: np.ndarray
    l_grid: Tuple[float, ...] = ()
    random_points: int = 0
    seed: int = 0


# check(s, l, t) -> list of (lhs, rhs) arrays that must satisfy lhs <= rhs
InequalityCheck = Callable[[float, Optional[float], np.ndarray], List[Tuple[np.ndarray, np.ndarray]]]


@dataclass(frozen=True)
class SampledPayload:
    family: str  # "sl" or "small"
    check: InequalityCheck
    default_spec: Callable[[], SampleSpec]
    t_range: Tuple[float, float]
    s_range: Tuple[float, float]
    l_range: Tuple[float, float] = (3.0, 10.0)


class ClaimRegistry:
    """Ordered collection of claims plus the named definitions they refer to"""

    def __init__(self, entries: Iterable[ClaimRegistryEntry] = (),
                 definitions: Optional[Dict[str, Node]] = None):
        self._entries: Dict[str, ClaimRegistryEntry] = {}
        self.definitions: Dict[str, Node] = dict(definitions or {})
        for entry in entries:
            self.register(entry)

    def register(self, entry: ClaimRegistryEntry) -> None:
        if entry.label in self._entries:
            raise ValueError(f"Duplicate claim label {entry.label!r}")
        self._entries[entry.label] = entry

    def get(self, label: str) -> ClaimRegistryEntry:
        try:
            return self._entries[label]
        except KeyError:
            raise UnknownLabelError(f"Unknown claim label {label!r}")

    @property
    def labels(self) -> List[str]:
        return sorted(self._entries)

    def __iter__(self) -> Iterator[ClaimRegistryEntry]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, label: str) -> bool:
        return label in self._entries

    @classmethod
    def from_suite_text(cls, text: str, include_sampled: bool = False) -> "ClaimRegistry":
        definitions, entries = load_suite(text)
        registry = cls(entries, definitions)
        if include_sampled:
            for entry in sampled_entries():
                registry.register(entry)
        return registry

    @classmethod
    def default(cls, path: Optional[Union[str, Path]] = None) -> "ClaimRegistry":
        path = Path(path or settings.CLAIMS_PATH)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise RuntimeError(f"Claim suite {path} not found. Installation is incomplete.")
        return cls.from_suite_text(text, include_sampled=True)


# ==================== SUITE LOADING ====================
def _options(forms: Iterable[Node]) -> Dict[str, Tuple[Node, ...]]:
    options = {}
    for form in forms:
        if not isinstance(form, tuple) or not form or not isinstance(form[0], str):
            raise ValueError(f"Malformed option {dumps(form)}")
        options[form[0]] = form[1:]
    return options


def load_suite(text: str) -> Tuple[Dict[str, Node], List[ClaimRegistryEntry]]:
    """Parse a claims file into definitions and registry entries"""
    definitions: Dict[str, Node] = {}
    entries: List[ClaimRegistryEntry] = []
    for form in parse_all(text):
        if not isinstance(form, tuple) or not form:
            raise ValueError(f"Top-level entries must be forms, got {dumps(form)}")
        head = form[0]
        if head == "define":
            _, name, body = form
            definitions[str(name)] = body
        elif head == "identity":
            _, label, domain, lhs, rhs = form
            entries.append(ClaimRegistryEntry(
                label=str(label), kind=ClaimKind.EXACT, domain=str(domain),
                payload=IdentityPayload(lhs=lhs, rhs=rhs),
            ))
        elif head == "positivity":
            _, label, domain, poly, lo, hi, threshold, *rest = form
            opts = _options(rest)
            entries.append(ClaimRegistryEntry(
                label=str(label), kind=ClaimKind.POSITIVITY, domain=str(domain),
                payload=PositivityPayload(
                    poly=poly, lo=Fraction(lo), hi=Fraction(hi), threshold=Fraction(threshold),
                    var=str(opts.get("var", ("t",))[0]),
                    s_samples=tuple(Fraction(v) for v in opts.get("s-samples", ())),
                ),
            ))
        else:
            raise ValueError(f"Unknown suite entry {head!r}")
    return definitions, entries


# ==================== RESULTS ====================
class ClaimResult(BaseModel):
    label: str
    kind: ClaimKind
    status: ClaimStatus
    domain: str = ""
    witness: Optional[Dict[str, Any]] = None
    margin: Optional[str] = None
    runtime_ms: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.status == ClaimStatus.PASS


class VerificationReport(BaseModel):
    seed: int
    results: List[ClaimResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failing_labels(self) -> List[str]:
        return [r.label for r in self.results if not r.passed]


def _resolve(registry: Optional[ClaimRegistry]) -> ClaimRegistry:
    return registry if registry is not None else default_registry()


def _expect_kind(entry: ClaimRegistryEntry, kind: ClaimKind) -> None:
    if entry.kind != kind:
        raise ValueError(f"Claim {entry.label!r} is {entry.kind.value}, not {kind.value}")


# ==================== EXACT IDENTITIES ====================
def verify_identity(label: str, registry: Optional[ClaimRegistry] = None) -> ClaimResult:
    """
    Expand both sides and compare canonical forms.
    Returns: pass, or fail with the exact residual LHS − RHS as an s-expression
    """
    registry = _resolve(registry)
    return _record(registry, _identity_result(registry.get(label), registry))


def _record(registry: ClaimRegistry, result: ClaimResult) -> ClaimResult:
    """Store the outcome on the registry entry; called on the caller's thread only"""
    registry.get(result.label).status = result.status
    return result


def _identity_result(entry: ClaimRegistryEntry, registry: ClaimRegistry) -> ClaimResult:
    _expect_kind(entry, ClaimKind.EXACT)
    env = registry.definitions
    lhs = expand_collect(entry.payload.lhs, env=env)
    rhs = expand_collect(entry.payload.rhs, env=env)
    if equal_exact(lhs, rhs):
        return ClaimResult(label=entry.label, kind=entry.kind, status=ClaimStatus.PASS, domain=entry.domain)
    residual = lhs - rhs
    logger.warning(f"⚠️ Identity {entry.label} failed, residual {to_sexpr(residual)}")
    return ClaimResult(
        label=entry.label, kind=entry.kind, status=ClaimStatus.FAIL, domain=entry.domain,
        witness={"residual": to_sexpr(residual)},
    )


# ==================== CERTIFIED POSITIVITY ====================
def verify_positivity(label: str, registry: Optional[ClaimRegistry] = None,
                      max_depth: Optional[int] = None) -> ClaimResult:
    """
    Certify the claim's polynomial above its threshold. Claims quantified over s
    are checked at each listed s-sample (the s-elimination itself is an identity
    elsewhere in the suite). The reported margin is the smallest certified
    lower bound minus the threshold.
    """
    registry = _resolve(registry)
    return _record(registry, _positivity_result(registry.get(label), registry, max_depth))


def _positivity_result(entry: ClaimRegistryEntry, registry: ClaimRegistry,
                       max_depth: Optional[int] = None) -> ClaimResult:
    label = entry.label
    _expect_kind(entry, ClaimKind.POSITIVITY)
    payload: PositivityPayload = entry.payload
    max_depth = settings.POSITIVITY_MAX_DEPTH if max_depth is None else max_depth

    poly = expand_collect(payload.poly, env=registry.definitions)
    instances = [(None, poly)] if not payload.s_samples else [
        (s_value, substitute(poly, "s", s_value)) for s_value in payload.s_samples
    ]

    margin: Optional[Fraction] = None
    for s_value, instance in instances:
        try:
            cert = certify_positive(
                instance, (payload.lo, payload.hi), payload.threshold,
                max_depth=max_depth, var=payload.var,
            )
        except CounterexampleFound as e:
            logger.warning(f"⚠️ Positivity {label} refuted at {payload.var}={e.t_star}")
            witness = {payload.var: str(e.t_star), "value": str(e.value)}
            if s_value is not None:
                witness["s"] = str(s_value)
            return ClaimResult(label=label, kind=entry.kind, status=ClaimStatus.FAIL,
                               domain=entry.domain, witness=witness)
        except InconclusiveCertification as e:
            logger.warning(f"⚠️ Positivity {label} inconclusive: {e}")
            witness = {"interval": [str(e.interval[0]), str(e.interval[1])], "depth": e.depth}
            if s_value is not None:
                witness["s"] = str(s_value)
            return ClaimResult(label=label, kind=entry.kind, status=ClaimStatus.INCONCLUSIVE,
                               domain=entry.domain, witness=witness)
        margin = cert.margin if margin is None else min(margin, cert.margin)

    return ClaimResult(label=label, kind=entry.kind, status=ClaimStatus.PASS,
                       domain=entry.domain, margin=f"{float(margin):.6g}")


# ==================== SAMPLED INEQUALITIES ====================
def _sl_spec() -> SampleSpec:
    return SampleSpec(
        s_grid=(1.1, 1.5, 2.0, 3.0), l_grid=(3.0, 5.0, 10.0),
        t_grid=np.linspace(-100.0, 100.0, 1000),
        random_points=settings.RANDOM_SAMPLES, seed=settings.SEED,
    )


def _sl_unit_spec() -> SampleSpec:
    return SampleSpec(
        s_grid=(1.1, 1.5, 2.0, 3.0), l_grid=(3.0, 5.0, 10.0),
        t_grid=np.linspace(-1.0, 1.0, 1000),
        random_points=settings.RANDOM_SAMPLES, seed=settings.SEED,
    )


def _small_s_values() -> Tuple[float, ...]:
    lo = 2.0 / 3.0 - aux.constants().delta_f
    return tuple(np.linspace(lo, 1.0, 21)[1:])


def _small_spec() -> SampleSpec:
    return SampleSpec(
        s_grid=_small_s_values(), t_grid=np.linspace(-5.0, 5.0, 1000),
        random_points=settings.RANDOM_SAMPLES, seed=settings.SEED,
    )


def _small_unit_spec() -> SampleSpec:
    return SampleSpec(
        s_grid=_small_s_values(), t_grid=np.linspace(-1.0, 1.0, 1000),
        random_points=settings.RANDOM_SAMPLES, seed=settings.SEED,
    )


def _half_spec() -> SampleSpec:
    return SampleSpec(
        s_grid=tuple(np.linspace(0.5, 1.0, 21)[1:]), t_grid=np.linspace(-1.0, 1.0, 1000),
        random_points=settings.RANDOM_SAMPLES, seed=settings.SEED,
    )


def _alpha_spec() -> SampleSpec:
    return SampleSpec(
        s_grid=_small_s_values(), t_grid=np.linspace(0.0, 1.0, 1001)[1:],
        random_points=settings.RANDOM_SAMPLES, seed=settings.SEED,
    )


def _ss1(s, l, t):
    p = aux.SLParams(s, l)
    return [(np.abs(t * aux.eval_sl("F'", p, t)), 4 * s * aux.eval_sl("F", p, t))]


def _ss2(s, l, t):
    p = aux.SLParams(s, l)
    return [(aux.eval_sl("F'", p, t) ** 2, s ** 2 * aux.eval_sl("G'", p, t))]


def _ss3(s, l, t):
    p = aux.SLParams(s, l)
    t = t[np.abs(t) <= 1]
    lhs = np.abs(aux.eval_sl("G", p, t))
    rhs = s * aux.eval_sl("F", p, t) ** (2 - 1 / s)
    return [(lhs, rhs), (rhs, lhs)]


def _ss4(s, l, t):
    p = aux.SLParams(s, l)
    pairs = []
    for k in (l + 4.0, 2 * l):
        pairs.append((aux.eval_sl("F", p, t), aux.eval_sl("F", aux.SLParams(s, k), t)))
    return pairs


def _sss1(s, l, t):
    p = aux.SmallSParams(s)
    return [(np.abs(t * aux.eval_small_s("F_s'", p, t)), 5 * aux.eval_small_s("F_s", p, t))]


def _sss2(s, l, t):
    p = aux.SmallSParams(s)
    c0 = aux.constants().c0_f
    return [(aux.eval_small_s("F_s'", p, t) ** 2, c0 * aux.eval_small_s("G_s'", p, t))]


def _sss3(s, l, t):
    p = aux.SmallSParams(s)
    t = t[np.abs(t) <= 1]
    k_s = aux.estimate_k_s(s)
    return [(np.abs(aux.eval_small_s("G_s", p, t)), k_s * aux.eval_small_s("F_s", p, t) ** (2 - 1 / s))]


def _sss4(s, l, t):
    p = aux.SmallSParams(s)
    root = aux.eval_small_s("F_s", p, t) ** (1 / s)
    fbar = aux.eval_small_s("Fbar", p, t)
    return [(fbar, root), (root, fbar + aux.constants().k0_f)]


def _step4(s, l, t):
    bracket = aux.derivative_bracket(s, np.abs(t))
    return [(bracket ** 2, np.full_like(bracket, 1e4))]


def _alpha(s, l, t):
    h = aux.h_alpha(aux.constants().alpha0_f, s, t)
    return [(np.full_like(h, 1e-4), h)]


def sampled_entries() -> List[ClaimRegistryEntry]:
    delta = aux.constants().delta_f
    small = (2.0 / 3.0 - delta, 1.0)
    table = [
        ("ss1", "s in {1.1,1.5,2,3}, l in {3,5,10}, t in [-100,100]", "sl", _ss1, _sl_spec, (-100.0, 100.0), (1.1, 3.0)),
        ("ss2", "s in {1.1,1.5,2,3}, l in {3,5,10}, t in [-100,100]", "sl", _ss2, _sl_spec, (-100.0, 100.0), (1.1, 3.0)),
        ("ss3", "equality on |t| <= 1", "sl", _ss3, _sl_unit_spec, (-1.0, 1.0), (1.1, 3.0)),
        ("ss4", "F_(s,l) <= F_(s,k) for l < k", "sl", _ss4, _sl_spec, (-100.0, 100.0), (1.1, 3.0)),
        ("sss1", "s in (2/3-delta, 1], t in [-5,5]", "small", _sss1, _small_spec, (-5.0, 5.0), small),
        ("sss2", "s in (2/3-delta, 1], t in [-5,5], c0 = 1e8", "small", _sss2, _small_spec, (-5.0, 5.0), small),
        ("sss3", "|t| <= 1 with estimated k_s", "small", _sss3, _small_unit_spec, (-1.0, 1.0), small),
        ("sss4", "Fbar <= F_s^(1/s) <= Fbar + k0", "small", _sss4, _small_spec, (-5.0, 5.0), small),
        ("step4-bound", "P_s(t)^2 <= 1e4 on (1/2,1] x [-1,1]", "small", _step4, _half_spec, (-1.0, 1.0), (0.5, 1.0)),
        ("alpha-sampled", "h(alpha0,s,t) > 1e-4 on (2/3-delta,1] x (0,1]", "small", _alpha, _alpha_spec, (0.0, 1.0), small),
    ]
    return [
        ClaimRegistryEntry(
            label=label, kind=ClaimKind.SAMPLED, domain=domain,
            payload=SampledPayload(family=family, check=check, default_spec=spec,
                                   t_range=t_range, s_range=s_range),
        )
        for label, domain, family, check, spec, t_range, s_range in table
    ]


def _violation(pairs, rtol) -> Optional[Tuple[int, int]]:
    for idx, (lhs, rhs) in enumerate(pairs):
        lhs = np.atleast_1d(lhs)
        rhs = np.atleast_1d(rhs)
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        bad = np.flatnonzero(~(lhs <= rhs + rtol * scale))
        if bad.size:
            return idx, int(bad[0])
    return None


def check_inequality(label: str, sample_spec: Optional[SampleSpec] = None,
                     registry: Optional[ClaimRegistry] = None) -> ClaimResult:
    """
    Evaluate a sampled inequality on every grid node (t = 0 removed) and on the
    seeded random points.
    Returns: pass, or fail with the first violating (s, l, t)
    """
    registry = _resolve(registry)
    return _record(registry, _inequality_result(registry.get(label), registry, sample_spec))


def _inequality_result(entry: ClaimRegistryEntry, registry: ClaimRegistry,
                       sample_spec: Optional[SampleSpec] = None) -> ClaimResult:
    label = entry.label
    _expect_kind(entry, ClaimKind.SAMPLED)
    payload: SampledPayload = entry.payload
    spec = sample_spec or payload.default_spec()
    if not spec.s_grid or len(spec.t_grid) == 0 or (payload.family == "sl" and not spec.l_grid):
        raise ValueError(f"Sample grids for {label} must be non-empty")
    rtol = settings.INEQUALITY_RTOL

    t_grid = np.asarray(spec.t_grid, dtype=float)
    t_grid = t_grid[t_grid != 0]
    l_values = spec.l_grid if payload.family == "sl" else (None,)

    def first_violation(s, l, t):
        pairs = payload.check(s, l, t)
        hit = _violation(pairs, rtol)
        if hit is None:
            return None
        idx, pos = hit
        lhs, rhs = pairs[idx]
        t_used = t if np.size(lhs) == np.size(t) else t[np.abs(t) <= 1]
        witness = {"s": float(s), "t": float(np.atleast_1d(t_used)[pos]),
                   "lhs": float(np.atleast_1d(lhs)[pos]), "rhs": float(np.atleast_1d(rhs)[pos])}
        if l is not None:
            witness["l"] = float(l)
        return witness

    for s in spec.s_grid:
        for l in l_values:
            witness = first_violation(float(s), l, t_grid)
            if witness:
                return _fail(entry, witness)

    if spec.random_points:
        rng = np.random.default_rng(spec.seed)
        s_lo, s_hi = payload.s_range
        t_lo, t_hi = payload.t_range
        s_draw = rng.uniform(s_lo, s_hi, spec.random_points)
        l_draw = rng.uniform(*payload.l_range, spec.random_points)
        t_draw = rng.uniform(t_lo, t_hi, spec.random_points)
        for i in range(spec.random_points):
            # keep s strictly inside the open end of the family's range
            s = float(s_draw[i]) if s_draw[i] > s_lo else s_hi
            l = float(l_draw[i]) if payload.family == "sl" else None
            t = np.array([t_draw[i] if t_draw[i] != 0 else t_hi])
            witness = first_violation(s, l, t)
            if witness:
                return _fail(entry, witness)

    return ClaimResult(label=label, kind=entry.kind, status=ClaimStatus.PASS, domain=entry.domain)


def _fail(entry: ClaimRegistryEntry, witness: Dict[str, float]) -> ClaimResult:
    logger.warning(f"⚠️ Inequality {entry.label} violated at {witness}")
    return ClaimResult(label=entry.label, kind=entry.kind, status=ClaimStatus.FAIL,
                       domain=entry.domain, witness=witness)


# ==================== RUN ALL ====================
_DISPATCH = {
    ClaimKind.EXACT: _identity_result,
    ClaimKind.POSITIVITY: _positivity_result,
    ClaimKind.SAMPLED: _inequality_result,
}


def _run_one(entry: ClaimRegistryEntry, registry: ClaimRegistry, include_timings: bool) -> ClaimResult:
    """Worker body: reads the registry, never writes it"""
    start = time.perf_counter()
    try:
        result = _DISPATCH[entry.kind](entry, registry)
    except Exception as e:
        logger.error(f"❌ Claim {entry.label} raised {type(e).__name__}: {e}")
        result = ClaimResult(label=entry.label, kind=entry.kind, status=ClaimStatus.ERROR,
                             domain=entry.domain, witness={"error": f"{type(e).__name__}: {e}"})
    if include_timings:
        result.runtime_ms = round((time.perf_counter() - start) * 1000.0, 3)
    return result


def run_all(registry: Optional[ClaimRegistry] = None, workers: Optional[int] = None,
            include_timings: bool = True) -> VerificationReport:
    """Execute every registry entry; failures become report entries, sorted by label"""
    registry = _resolve(registry)
    workers = settings.VERIFY_WORKERS if workers is None else workers
    entries = list(registry)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: _run_one(e, registry, include_timings), entries))
    else:
        results = [_run_one(e, registry, include_timings) for e in entries]
    for result in results:
        _record(registry, result)
    results.sort(key=lambda r: r.label)

    passed = sum(r.passed for r in results)
    logger.info(f"✅ {passed}/{len(results)} claims passed")
    return VerificationReport(seed=settings.SEED, results=results)


_DEFAULT_REGISTRY: Optional[ClaimRegistry] = None


def default_registry() -> ClaimRegistry:
    """Shared registry loaded from CLAIMS_PATH on first use"""
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = ClaimRegistry.default()
    return _DEFAULT_REGISTRY
