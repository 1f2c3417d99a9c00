"""Additive quantization noise model (AQNM) and a real per-rail uniform quantizer.

Under the AQNM a ``b``-bit quantizer acting on ``z`` is modeled as
``(1 - f(b)) z + n_q`` with ``n_q`` uncorrelated with ``z``, where ``f(b)`` is
the normalized mean-squared distortion for a Gaussian input.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from ._validation import check_bit_vector, check_complex_matrix, check_count
from .exceptions import DimensionError, DomainError

# Lloyd-Max distortion of a Gaussian input for 1..5 bits
LLOYD_MAX_DISTORTION = (0.3634, 0.1175, 0.03454, 0.009497, 0.002499)

# high-resolution asymptote pi*sqrt(3)/2 * 2^(-2b)
HIGH_RES_CONSTANT = np.pi * np.sqrt(3) / 2

DEFAULT_MAX_BITS = 32


def high_resolution_distortion(b):
    return HIGH_RES_CONSTANT * 2.0 ** (-2 * np.asarray(b, dtype=float))


@dataclass(frozen=True)
class DistortionTable:
    """Distortion factors ``f(b)`` for ``b = 1..max_bits``.

    ``values[k]`` is ``f(k + 1)``; bit counts past the table use the
    high-resolution closed form.
    """

    values: tuple = LLOYD_MAX_DISTORTION
    max_bits: int = DEFAULT_MAX_BITS

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        check_count(self.max_bits, "max_bits")
        if len(self.values) == 0:
            raise DomainError("distortion table must not be empty")
        if len(self.values) > self.max_bits:
            raise DomainError("distortion table longer than max_bits")
        full = self._lookup(np.arange(1, self.max_bits + 1))
        if np.any(full <= 0) or np.any(full >= 1):
            raise DomainError("distortion factors must lie in (0, 1)")
        if np.any(np.diff(full) >= 0):
            raise DomainError("distortion factors must be strictly decreasing in b")

    @classmethod
    def from_pairs(cls, pairs, max_bits=DEFAULT_MAX_BITS):
        """Build from ``(b, f)`` pairs covering ``b = 1..k`` without gaps."""
        mapping = {}
        for b, f in pairs:
            b = check_count(int(b), "b")
            mapping[b] = float(f)
        keys = sorted(mapping)
        if keys != list(range(1, len(keys) + 1)):
            raise DomainError(f"table must cover b = 1..k contiguously, got {keys}")
        return cls(tuple(mapping[k] for k in keys), max(max_bits, len(keys)))

    def _lookup(self, b):
        b = np.asarray(b)
        vals = np.asarray(self.values)
        idx = np.clip(b - 1, 0, len(vals) - 1)
        return np.where(b <= len(vals), vals[idx], high_resolution_distortion(b))

    def f(self, b):
        """Vectorized distortion factor; raises :class:`DomainError` out of range."""
        arr = np.asarray(b)
        if np.any(arr < 1) or np.any(arr > self.max_bits) or np.any(arr != np.floor(arr)):
            raise DomainError(f"bit count must be an integer in [1, {self.max_bits}], got {b}")
        out = self._lookup(arr.astype(np.int64))
        return float(out) if out.ndim == 0 else out

    def g(self, b):
        f = np.asarray(self.f(b))
        out = f / (1 - f)
        return float(out) if out.ndim == 0 else out


DEFAULT_TABLE = DistortionTable()


def distortion_factor(b, table=DEFAULT_TABLE):
    """Distortion factor ``f(b)`` in ``(0, 1)``."""
    return table.f(b)


def gain(b, table=DEFAULT_TABLE):
    """``g(b) = f(b) / (1 - f(b))``; the quantization-noise-to-signal ratio after gain correction."""
    return table.g(b)


@dataclass(frozen=True, eq=False)
class QuantizerModel:
    """Diagonal AQNM matrices for one bit vector (stored as their diagonals)."""

    bits: np.ndarray
    f: np.ndarray
    alpha: np.ndarray
    Dq2_diag: np.ndarray
    row_power: np.ndarray

    @property
    def W_alpha(self):
        return np.diag(self.alpha)

    @property
    def W_one_minus_alpha(self):
        return np.diag(self.f)

    @property
    def Dq2(self):
        return np.diag(self.Dq2_diag)


def build_quantizer_model(b, WAH_H, table=DEFAULT_TABLE):
    """AQNM matrices for bit vector ``b`` behind the combined channel ``W_A^H H``.

    ``D_q^2 = W_alpha W_{1-alpha} diag(W_A^H H (W_A^H H)^H + I)``.
    """
    WAH_H = check_complex_matrix(WAH_H, "WAH_H")
    b = check_bit_vector(b, table.max_bits, n_streams=WAH_H.shape[0])
    f = np.asarray(table.f(b), dtype=float)
    alpha = 1.0 - f
    row_power = np.sum(np.abs(WAH_H) ** 2, axis=1)
    Dq2 = alpha * f * (row_power + 1.0)
    return QuantizerModel(bits=b, f=f, alpha=alpha, Dq2_diag=Dq2, row_power=row_power)


def _cell_moments(edges):
    """Per-cell Gaussian mass, first and second moments for sorted cell edges."""
    cdf = stats.norm.cdf(edges)
    pdf = stats.norm.pdf(edges)
    # x*pdf vanishes at +-inf
    finite = np.where(np.isfinite(edges), edges, 0.0)
    xpdf = finite * pdf
    m0 = np.diff(cdf)
    m1 = pdf[:-1] - pdf[1:]
    m2 = m0 + xpdf[:-1] - xpdf[1:]
    return m0, m1, m2


def uniform_distortion(b, loading):
    """MSE of a ``2^b``-level mid-rise quantizer with full scale ``loading`` on a unit Gaussian."""
    b = check_count(int(b), "b")
    levels = 2**b
    step = 2.0 * loading / levels
    inner = (np.arange(1, levels) - levels // 2) * step
    edges = np.concatenate(([-np.inf], inner, [np.inf]))
    recon = (np.arange(levels) - levels // 2 + 0.5) * step
    m0, m1, m2 = _cell_moments(edges)
    return float(np.sum(m2 - 2 * recon * m1 + recon**2 * m0))


@lru_cache(maxsize=None)
def optimal_loading(b):
    """Full scale (in units of the rail RMS) minimizing :func:`uniform_distortion`.

    At the optimum ``E[Q(x) x] = E[Q(x)^2]``, so the quantizer output splits
    exactly as ``(1 - D) x + e`` with ``e`` uncorrelated with ``x`` and
    ``E e^2 = D (1 - D)``: the AQNM form with ``f = D``.
    """
    b = check_count(int(b), "b")
    hi = 2.0 + 0.6 * b
    res = optimize.minimize_scalar(lambda fs: uniform_distortion(b, fs), bounds=(1e-3, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def uniform_distortion_table(max_bits=16, loading="optimal"):
    """Distortion table of the real uniform quantizer (every entry tabulated)."""
    values = []
    for b in range(1, max_bits + 1):
        fs = optimal_loading(b) if loading == "optimal" else float(loading)
        values.append(uniform_distortion(b, fs))
    return DistortionTable(tuple(values), max_bits)


def _quantize_rail(x, bits, full_scale):
    levels = 2.0**bits
    step = 2.0 * full_scale / levels
    idx = np.floor(x / step)
    idx = np.clip(idx, -levels / 2, levels / 2 - 1)
    return (idx + 0.5) * step


def quantize_uniform(z, b, loading="optimal", rms=None, max_bits=DEFAULT_MAX_BITS):
    """Quantize each I/Q rail of ``z[..., i]`` with ``b[i]`` bits.

    Parameters
    ----------
    z : complex array of shape (N_s,) or (n_samples, N_s)
    b : bit vector of length N_s
    loading : "optimal" or float
        Full scale as a multiple of the per-rail RMS.  ``"optimal"`` uses
        :func:`optimal_loading` per entry.
    rms : array of shape (N_s,), optional
        Per-entry complex RMS ``sqrt(E|z_i|^2)``.  Estimated from ``z`` along
        the sample axis when omitted.
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim not in (1, 2):
        raise DimensionError("z must be 1-D or 2-D")
    b = check_bit_vector(b, max_bits, n_streams=z.shape[-1])
    if rms is None:
        rms = np.sqrt(np.mean(np.abs(z.reshape(-1, z.shape[-1])) ** 2, axis=0))
    rms = np.broadcast_to(np.asarray(rms, dtype=float), (z.shape[-1],))
    if loading == "optimal":
        load = np.array([optimal_loading(int(bi)) for bi in b])
    else:
        if float(loading) <= 0:
            raise DomainError("loading must be > 0")
        load = np.full(b.shape, float(loading))
    rail_rms = rms / np.sqrt(2.0)
    full_scale = np.where(rail_rms > 0, load * rail_rms, 1.0)
    out = _quantize_rail(z.real, b, full_scale) + 1j * _quantize_rail(z.imag, b, full_scale)
    return out
