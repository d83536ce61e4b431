"""Algebra of multivariate normal densities.

Moment form (:class:`Gaussian`) holds a mean and covariance; information form
(:class:`InfoForm`) holds a precision matrix and information vector and may be
singular, which is how likelihood potentials from partial observations are
carried around without inverting anything.

All matrices returned from this module are explicitly symmetrized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg as sla

from .errors import DimMismatch, SingularCovariance, SingularPrecision, UnknownNode

SYM_TOL = 1e-9
PSD_TOL = 1e-9
# relative eigenvalue floor below which a PSD matrix is treated as singular
RANK_TOL = 1e-12


def as_vector(x) -> np.ndarray:
    return np.array(x, dtype=float).reshape(-1)


def as_matrix(m, shape: tuple[int, int] | None = None) -> np.ndarray:
    m = np.atleast_2d(np.array(m, dtype=float))
    if m.ndim != 2:
        raise DimMismatch(f"expected a matrix, got array of shape {m.shape}")
    if shape is not None and m.shape != shape:
        raise DimMismatch(f"expected shape {shape}, got {m.shape}")
    return m


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def asymmetry(m: np.ndarray) -> float:
    """Relative Frobenius asymmetry ``|M - M^T| / |M|`` (0 for the zero matrix)."""
    scale = np.linalg.norm(m)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(m - m.T) / scale)


def is_psd(m: np.ndarray, tol: float = PSD_TOL) -> bool:
    if m.size == 0:
        return True
    w = np.linalg.eigvalsh(symmetrize(m))
    return bool(w[0] >= -tol * max(abs(w[-1]), abs(w[0]), np.finfo(float).tiny))


def is_pd(m: np.ndarray, tol: float = RANK_TOL) -> bool:
    """True when ``m`` is symmetric PD with eigenvalues above ``tol * max``."""
    w = np.linalg.eigvalsh(symmetrize(m))
    return bool(w[-1] > 0.0 and w[0] > tol * w[-1])


def _check_square_sym_psd(m: np.ndarray, what: str) -> np.ndarray:
    if m.shape[0] != m.shape[1]:
        raise DimMismatch(f"{what} must be square, got {m.shape}")
    if asymmetry(m) > SYM_TOL:
        raise ValueError(f"{what} is not symmetric (relative asymmetry {asymmetry(m):.3g})")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} has non-finite entries")
    m = symmetrize(m)
    if not is_psd(m):
        raise ValueError(f"{what} is not positive semi-definite")
    return m


class _PDFactor:
    """Cholesky factor of an SPD matrix with an eigendecomposition fallback.

    The fallback catches matrices whose Cholesky fails only because of
    round-off while their spectrum is still clearly positive.
    """

    def __init__(self, m: np.ndarray, error=SingularCovariance, what: str = "matrix"):
        m = symmetrize(np.asarray(m, dtype=float))
        self.dim = m.shape[0]
        self._chol = None
        self._eig = None
        try:
            c, low = sla.cho_factor(m, lower=True, check_finite=False)
            d = np.diag(c)
            if d.min() <= math.sqrt(RANK_TOL) * d.max():
                raise np.linalg.LinAlgError("ill-conditioned")
            self._chol = (c, low)
        except (np.linalg.LinAlgError, ValueError):
            w, v = np.linalg.eigh(m)
            if w[-1] <= 0.0 or w[0] <= RANK_TOL * w[-1]:
                raise error(f"{what} is singular or not positive definite") from None
            self._eig = (w, v)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            return sla.cho_solve(self._chol, b, check_finite=False)
        w, v = self._eig
        return v @ ((v.T @ b) / (w if np.ndim(b) == 1 else w[:, None]))

    def inverse(self) -> np.ndarray:
        return symmetrize(self.solve(np.eye(self.dim)))

    def logdet(self) -> float:
        if self._chol is not None:
            return 2.0 * float(np.sum(np.log(np.diag(self._chol[0]))))
        return float(np.sum(np.log(self._eig[0])))


def pd_factor(m, error=SingularCovariance, what: str = "matrix") -> _PDFactor:
    return _PDFactor(m, error=error, what=what)


def pd_inverse(m, error=SingularCovariance, what: str = "matrix") -> np.ndarray:
    return _PDFactor(m, error=error, what=what).inverse()


def block_diag(*blocks: np.ndarray) -> np.ndarray:
    return sla.block_diag(*[as_matrix(b) for b in blocks])


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Moment-form normal ``N(mean, cov)``; ``cov`` may be PSD-singular."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean)
        if mean.size == 0:
            raise DimMismatch("zero-dimensional Gaussian")
        cov = _check_square_sym_psd(as_matrix(self.cov), "covariance")
        if cov.shape[0] != mean.size:
            raise DimMismatch(f"mean has dim {mean.size} but covariance is {cov.shape}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def delta(cls, value) -> Gaussian:
        """Point mass at ``value`` (zero covariance)."""
        value = as_vector(value)
        return cls(value, np.zeros((value.size, value.size)))

    @property
    def is_degenerate(self) -> bool:
        return not np.any(self.cov)

    def allclose(self, other: Gaussian, rtol=1e-9, atol=1e-12) -> bool:
        return (
            self.dim == other.dim
            and np.allclose(self.mean, other.mean, rtol=rtol, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=rtol, atol=atol)
        )

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True, eq=False)
class InfoForm:
    """Information-form potential ``exp(-x^T prec x / 2 + info^T x)``.

    ``prec`` is only required to be PSD.  ``prec == 0, info == 0`` is the unit
    potential (no information at all).  Normalization constants are dropped.
    """

    prec: np.ndarray
    info: np.ndarray

    def __post_init__(self):
        info = as_vector(self.info)
        if info.size == 0:
            raise DimMismatch("zero-dimensional potential")
        prec = _check_square_sym_psd(as_matrix(self.prec), "precision")
        if prec.shape[0] != info.size:
            raise DimMismatch(f"info has dim {info.size} but precision is {prec.shape}")
        info.setflags(write=False)
        prec.setflags(write=False)
        object.__setattr__(self, "prec", prec)
        object.__setattr__(self, "info", info)

    @property
    def dim(self) -> int:
        return self.info.size

    @classmethod
    def unit(cls, dim: int) -> InfoForm:
        return cls(np.zeros((dim, dim)), np.zeros(dim))

    @property
    def is_unit(self) -> bool:
        return not np.any(self.prec) and not np.any(self.info)

    def __add__(self, other: InfoForm) -> InfoForm:
        return info_product([self, other])

    def __repr__(self):
        return f"InfoForm(prec={self.prec.tolist()}, info={self.info.tolist()})"


def info_factor(f: InfoForm) -> tuple[np.ndarray, np.ndarray]:
    """Square-root factorization of a (possibly singular) potential.

    Returns ``(H, y)`` with ``H`` of shape ``(r, d)``, ``r = rank(prec)``, such
    that ``H^T H = prec`` and ``H^T y = info``.  The potential is then the
    likelihood of observing ``y = H x + w`` with ``w ~ N(0, I)``: the stacked
    sensor form with unit noise.  ``r == 0`` for the unit potential.
    """
    if not np.any(f.prec):
        return np.zeros((0, f.dim)), np.zeros(0)
    w, v = np.linalg.eigh(f.prec)
    keep = w > RANK_TOL * w[-1]
    s = np.sqrt(w[keep])
    vr = v[:, keep]
    h = s[:, None] * vr.T
    y = (vr.T @ f.info) / s
    return h, y


# --- products, pullbacks, marginals -------------------------------------------


def pdf_eval(g: Gaussian, x) -> float:
    """Density ``|2 pi P|^(-1/2) exp(-(x - m)^T P^-1 (x - m) / 2)``."""
    x = as_vector(x)
    if x.size != g.dim:
        raise DimMismatch(f"point has dim {x.size}, Gaussian has dim {g.dim}")
    fac = pd_factor(g.cov, what="covariance")
    r = x - g.mean
    quad = float(r @ fac.solve(r))
    logdet = g.dim * math.log(2.0 * math.pi) + fac.logdet()
    return math.exp(-0.5 * (quad + logdet))


def product(g1: Gaussian, g2: Gaussian, form: str = "auto") -> tuple[Gaussian, float]:
    """Pointwise product of two normal densities.

    Returns the normalized Gaussian and the scale constant
    ``a = N(m1; P1 + P2, m2)`` so that ``pdf(g1, x) * pdf(g2, x) = a * pdf(g, x)``.

    ``form`` selects the precision-sum algebra (``"precision"``, requires both
    inputs PD) or the covariance-gain algebra (``"covariance"``, requires only
    ``P1 + P2`` PD).  ``"auto"`` uses precision form when possible.
    """
    if g1.dim != g2.dim:
        raise DimMismatch(f"dims differ: {g1.dim} vs {g2.dim}")
    total = pd_factor(g1.cov + g2.cov, what="P1 + P2")
    r = g1.mean - g2.mean
    a = math.exp(
        -0.5 * (float(r @ total.solve(r)) + g1.dim * math.log(2 * math.pi) + total.logdet())
    )
    if form == "auto":
        form = "precision" if is_pd(g1.cov) and is_pd(g2.cov) else "covariance"
    if form == "precision":
        i1 = pd_inverse(g1.cov, what="P1")
        i2 = pd_inverse(g2.cov, what="P2")
        f = pd_factor(i1 + i2, what="P1^-1 + P2^-1")
        cov = f.inverse()
        mean = f.solve(i1 @ g1.mean + i2 @ g2.mean)
    elif form == "covariance":
        # gain against the sum; symmetric in the two inputs up to round-off
        p1, p2 = g1.cov, g2.cov
        k = total.solve(p2).T
        cov = symmetrize(p2 - k @ p2)
        mean = g2.mean + k @ (g1.mean - g2.mean)
    else:
        raise ValueError(f"unknown product form {form!r}")
    return Gaussian(mean, cov), a


def pullback(a, g_y: Gaussian, offset=None) -> InfoForm:
    """Potential on ``x`` from the density of ``y = A x + b`` evaluated at ``g_y``.

    Unnormalized; the precision ``A^T P_y^-1 A`` is never inverted.
    """
    a = as_matrix(a)
    if a.shape[0] != g_y.dim:
        raise DimMismatch(f"A has {a.shape[0]} rows but y has dim {g_y.dim}")
    b = np.zeros(g_y.dim) if offset is None else as_vector(offset)
    fac = pd_factor(g_y.cov, what="observation covariance")
    w = fac.solve(a)
    return InfoForm(symmetrize(a.T @ w), w.T @ (g_y.mean - b))


def info_product(terms: Iterable[InfoForm], dim: int | None = None) -> InfoForm:
    """Product of potentials: precisions and information vectors add.

    An empty product is the unit potential, which needs ``dim``.
    """
    terms = list(terms)
    if not terms:
        if dim is None:
            raise ValueError("dim is required for an empty product")
        return InfoForm.unit(dim)
    d = terms[0].dim if dim is None else dim
    prec = np.zeros((d, d))
    info = np.zeros(d)
    for t in terms:
        if t.dim != d:
            raise DimMismatch(f"potential of dim {t.dim} in product of dim {d}")
        prec = prec + t.prec
        info = info + t.info
    return InfoForm(symmetrize(prec), info)


def marginalize_linear(
    terms: Sequence[tuple[np.ndarray, Gaussian]], noise_cov, offset=None
) -> Gaussian:
    """Distribution of ``x = sum_i B_i u_i + b + v`` for independent ``u_i``.

    Covers the single-parent and identity-matrix special cases as well.
    """
    q = _check_square_sym_psd(as_matrix(noise_cov), "noise covariance")
    d = q.shape[0]
    mean = np.zeros(d) if offset is None else as_vector(offset).copy()
    cov = q.copy()
    for b, g in terms:
        b = as_matrix(b, (d, g.dim))
        mean = mean + b @ g.mean
        cov = cov + b @ g.cov @ b.T
    return Gaussian(mean, symmetrize(cov))


def moment_to_info(g: Gaussian) -> InfoForm:
    fac = pd_factor(g.cov, SingularCovariance, "covariance")
    return InfoForm(fac.inverse(), fac.solve(g.mean))


def info_to_moment(f: InfoForm) -> Gaussian:
    fac = pd_factor(f.prec, SingularPrecision, "precision")
    return Gaussian(fac.solve(f.info), fac.inverse())


# --- joint Gaussians ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointGaussian:
    """A Gaussian over a stacked vector plus ``node id -> slice`` bookkeeping."""

    gaussian: Gaussian
    blocks: Mapping[str, slice] = field(default_factory=dict)

    def __post_init__(self):
        blocks = dict(self.blocks)
        pos = 0
        for k, s in blocks.items():
            if s.start != pos or s.stop <= s.start:
                raise ValueError(f"block {k!r} does not continue the partition at {pos}")
            pos = s.stop
        if pos != self.gaussian.dim:
            raise DimMismatch(f"blocks cover {pos} of {self.gaussian.dim} dims")
        object.__setattr__(self, "blocks", blocks)

    @property
    def ids(self) -> list[str]:
        return list(self.blocks)

    def _slice(self, node: str) -> slice:
        try:
            return self.blocks[node]
        except KeyError:
            raise UnknownNode(node) from None

    def block(self, node: str) -> Gaussian:
        s = self._slice(node)
        return Gaussian(self.gaussian.mean[s], self.gaussian.cov[s, s])

    def cross_cov(self, a: str, b: str) -> np.ndarray:
        return self.gaussian.cov[self._slice(a), self._slice(b)]

    def marginal(self, ids: Sequence[str]) -> JointGaussian:
        """Joint over ``ids`` in the order given."""
        idx = np.concatenate([np.arange(self._slice(i).start, self._slice(i).stop) for i in ids])
        g = Gaussian(self.gaussian.mean[idx], self.gaussian.cov[np.ix_(idx, idx)])
        return JointGaussian(g, _layout((i, self.blocks[i].stop - self.blocks[i].start) for i in ids))


def _layout(sizes: Iterable[tuple[str, int]]) -> dict[str, slice]:
    out, pos = {}, 0
    for k, n in sizes:
        out[k] = slice(pos, pos + n)
        pos += n
    return out


def joint_from_blocks(mean, cov, sizes: Iterable[tuple[str, int]]) -> JointGaussian:
    return JointGaussian(Gaussian(mean, cov), _layout(sizes))


def condition(joint: JointGaussian, observed: str, value) -> JointGaussian:
    """Condition on one block taking ``value``; that block is dropped.

    Mean ``m_x + P_xy P_yy^-1 (y - m_y)``, covariance ``P_xx - P_xy P_yy^-1 P_yx``.
    """
    s = joint._slice(observed)
    value = as_vector(value)
    if value.size != s.stop - s.start:
        raise DimMismatch(f"value of dim {value.size} for block {observed!r} of dim {s.stop - s.start}")
    rest = [k for k in joint.blocks if k != observed]
    if not rest:
        raise ValueError("cannot condition on the only block")
    n = joint.gaussian.dim
    keep = np.concatenate([np.arange(0, s.start), np.arange(s.stop, n)])
    m, p = joint.gaussian.mean, joint.gaussian.cov
    fac = pd_factor(p[s, s], SingularCovariance, f"marginal covariance of {observed!r}")
    pxy = p[np.ix_(keep, np.arange(s.start, s.stop))]
    gain = fac.solve(pxy.T).T
    mean = m[keep] + gain @ (value - m[s])
    cov = symmetrize(p[np.ix_(keep, keep)] - gain @ pxy.T)
    return JointGaussian(
        Gaussian(mean, cov),
        _layout((k, joint.blocks[k].stop - joint.blocks[k].start) for k in rest),
    )
