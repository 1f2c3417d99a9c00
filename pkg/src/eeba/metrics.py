"""Power model, information rate, energy efficiency, and the separable surrogate.

With ``q_i = p sigma_i^2 / (sigma_n2 + g(b_i) l_i) = p / crlb_i`` the rate is

    R = N_s log2 p + sum_i log2(1/crlb_i + 1/p) = sum_i log2(1 + q_i)

and energy efficiency is ``R / p(b)``.  The surrogate replaces each
``log2(1 + q_i)`` by a piecewise first-order expansion (``q`` for ``q < 1``,
``1 - 1/q`` otherwise, both up to the common ``1/ln 2``).
"""

from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_bit_vector, check_count, check_positive
from .exceptions import DimensionError, DomainError, SingularityError
from .quantization import DEFAULT_TABLE
from .transceiver import CrlbDiagonal, LinkModel

LN2 = np.log(2.0)

BUDGET_FORMS = ("factor2", "eq24")


@dataclass(frozen=True)
class PowerModel:
    """Transmit, receive-front-end and ADC power consumption (watts).

    ``P_ADC`` caps the ADC power of a bit vector.  ``budget_form`` selects how
    the cap is charged: ``"factor2"`` counts both I and Q converters
    (``2 c f_s sum 2^b``, as in the total power), ``"eq24"`` a single one
    (``c f_s sum 2^b``).  ``P_ADC=None`` leaves the allocation unconstrained.
    """

    c: float = 1432e-15
    f_s: float = 400e6
    P_out: float = 1.0
    eta_PA: float = 0.4
    P_CIR: float = 10.0
    P_PS: float = 0.05
    P_LNA: float = 0.07
    P_VCO: float = 0.015
    N_r: int = 128
    N_s: int = 8
    P_ADC: float | None = None
    budget_form: str = "factor2"

    def __post_init__(self):
        for name in ("c", "f_s", "P_out", "eta_PA"):
            check_positive(getattr(self, name), name)
        for name in ("P_CIR", "P_PS", "P_LNA", "P_VCO"):
            check_positive(getattr(self, name), name, strict=False)
        if self.eta_PA > 1:
            raise DomainError("eta_PA must lie in (0, 1]")
        check_count(self.N_r, "N_r")
        check_count(self.N_s, "N_s")
        if self.P_ADC is not None:
            check_positive(self.P_ADC, "P_ADC")
        if self.budget_form not in BUDGET_FORMS:
            raise DomainError(f"budget_form must be one of {BUDGET_FORMS}")

    @property
    def P_T(self):
        return self.P_out / self.eta_PA + self.P_CIR

    @property
    def P_R(self):
        return self.N_r * self.N_s * self.P_PS + self.N_r * self.P_LNA + self.N_s * self.P_VCO

    @property
    def P_fixed(self):
        return self.P_T + self.P_R

    @property
    def adc_unit(self):
        """Watts per unit of ``sum 2^b`` in the total power."""
        return 2.0 * self.c * self.f_s

    @property
    def budget_unit(self):
        """Watts per unit of ``sum 2^b`` charged against ``P_ADC``."""
        return self.adc_unit if self.budget_form == "factor2" else self.c * self.f_s

    @property
    def max_level_sum(self):
        """Largest admissible ``sum 2^b`` under the budget (``None`` if unconstrained)."""
        if self.P_ADC is None:
            return None
        return int(np.floor(self.P_ADC / self.budget_unit * (1 + 1e-12)))

    def adc_power(self, b):
        return self.adc_unit * np.sum(2.0 ** np.asarray(b), axis=-1)

    def total_power(self, b):
        return self.P_fixed + self.adc_power(b)

    def with_streams(self, n_streams):
        return replace(self, N_s=n_streams)


def total_power(b, pm=None):
    """``P_T + P_R + 2 c f_s sum_i 2^{b_i}``; vectorized over leading axes of ``b``."""
    pm = PowerModel() if pm is None else pm
    b = np.asarray(b)
    if b.ndim == 1:
        check_bit_vector(b)
    elif b.ndim == 0:
        raise DimensionError("b must have at least one axis")
    return pm.total_power(b)


def q_statistic(b_i, p, sigma_n2, sigma_i2, l_i, table=DEFAULT_TABLE):
    """Per-stream SNR after quantization, ``p sigma_i^2 / (sigma_n2 + g(b_i) l_i)``."""
    den = sigma_n2 + table.g(b_i) * np.asarray(l_i)
    if np.any(den <= 0):
        raise SingularityError("noise-plus-distortion power vanished")
    return p * np.asarray(sigma_i2) / den


def rate_from_q(q):
    return float(np.sum(np.log2(1.0 + np.asarray(q))))


def information_rate(crlb_entries, p):
    """``N_s log2 p + sum_i log2(1/crlb_i + 1/p)`` in bits per channel use."""
    c = crlb_entries.entries if isinstance(crlb_entries, CrlbDiagonal) else np.asarray(crlb_entries, dtype=float)
    check_positive(p, "p")
    if np.any(c <= 0):
        raise SingularityError("CRLB entries must be positive")
    return float(c.size * np.log2(p) + np.sum(np.log2(1.0 / c + 1.0 / p)))


def information_rate_matrix(K, Phi, p):
    """``log2 det(p K K^H Phi^{-1} + I)`` for arbitrary combiners."""
    n = K.shape[0]
    A = p * K @ K.conj().T @ np.linalg.inv(Phi) + np.eye(n)
    sign, logdet = np.linalg.slogdet(A)
    return float(logdet / LN2)


@dataclass(frozen=True)
class RateEnergyReport:
    """Rate (bits/channel use), power (W) and energy efficiency (bits/channel use/W)."""

    bits: tuple
    rate: float
    rate_q: float
    total_power: float
    ee: float
    surrogate: float
    crlb: tuple
    form: str


def q_values(link, b, p, sigma_n2):
    """``q_i = p / crlb_i`` for either CRLB form."""
    return p / link.crlb(b, sigma_n2).entries


def report_for(link, b, pm, p, sigma_n2):
    b = check_bit_vector(b, link.table.max_bits, n_streams=link.n_streams)
    cr = link.crlb(b, sigma_n2)
    rate = information_rate(cr, p)
    q = p / cr.entries
    power = float(pm.total_power(b))
    return RateEnergyReport(bits=tuple(int(v) for v in b), rate=rate, rate_q=rate_from_q(q),
                            total_power=power, ee=rate / power,
                            surrogate=surrogate_objective(b, q, pm), crlb=tuple(cr.entries.tolist()),
                            form=cr.form)


def energy_efficiency(b, chan, combiner, pm=None, p=1.0, sigma_n2=1.0, table=DEFAULT_TABLE):
    """Rate, total power and ``EE = R / p(b)`` for one bit vector."""
    pm = PowerModel(N_s=chan.n_streams) if pm is None else pm
    check_positive(p, "p")
    check_positive(sigma_n2, "sigma_n2", strict=False)
    return report_for(LinkModel(chan, combiner, table), b, pm, p, sigma_n2)


def lemma1_approx(q):
    """``q / ln 2``, the first-order expansion of ``log2(1 + q)`` about 0 (``0 <= q < 1``)."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(q >= 1):
        raise DomainError("expansion about 0 needs 0 <= q < 1")
    return q / LN2


def lemma1_remainder_bound(q):
    """Bound ``q^2 / (2 ln 2)`` on ``|log2(1 + q) - q / ln 2|``."""
    return np.asarray(q, dtype=float) ** 2 / (2 * LN2)


def lemma2_approx(q):
    """``(1 - 1/q) / ln 2``, the expansion of ``log2(1 + q)`` in ``1/q`` terms (``q >= 1``)."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 1):
        raise DomainError("expansion needs q >= 1")
    return (1.0 - 1.0 / q) / LN2


def lemma2_residual(q):
    """``log2(1 + q) - (1 - 1/q) / ln 2``."""
    q = np.asarray(q, dtype=float)
    return np.log2(1.0 + q) - lemma2_approx(q)


def lemma2_slope_bound(a, b):
    """Upper bound on ``|d/dq lemma2_residual|`` over ``[a, b]`` with ``1 <= a <= b``.

    The derivative is ``((q - 1)/q^2 - 1/(q (q + 1))) / ln 2``; the first term
    peaks at ``q = 2`` and the second decreases, so each is bounded termwise.
    """
    if a < 1 or b < a:
        raise DomainError("need 1 <= a <= b")
    qs = min(max(2.0, a), b)
    first = (qs - 1) / qs**2
    second = 1.0 / (a * (a + 1))
    return max(first, second) / LN2


def surrogate_terms(q):
    """Per-stream surrogate value: ``q`` if ``q < 1`` else ``1 - 1/q``."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise DomainError("q must be non-negative")
    safe = np.where(q >= 1, q, 1.0)
    return np.where(q < 1, q, 1.0 - 1.0 / safe)


def surrogate_objective(b, q, pm=None):
    """``sum_i Q(q_i) / p(b)``: the energy-efficiency surrogate without the ``1/ln 2`` factor."""
    pm = PowerModel(N_s=len(b)) if pm is None else pm
    return float(np.sum(surrogate_terms(q)) / pm.total_power(np.asarray(b)))


@dataclass(frozen=True, eq=False)
class QTable:
    """``q[k, i]`` and ``Q[k, i]`` for ``b_i = k + 1``; shape ``(max_bits, N_s)``."""

    q: np.ndarray
    Q: np.ndarray

    @property
    def max_bits(self):
        return self.Q.shape[0]

    @property
    def n_streams(self):
        return self.Q.shape[1]

    def lookup(self, b):
        b = np.asarray(b)
        return self.Q[b - 1, np.arange(b.shape[-1])]


def build_qtable(sigma2, l, p, sigma_n2, max_bits, table=DEFAULT_TABLE):
    """Tabulate ``q`` and its surrogate ``Q`` for every stream and bit count ``1..max_bits``."""
    sigma2 = np.asarray(sigma2, dtype=float)
    l = np.broadcast_to(np.asarray(l, dtype=float), sigma2.shape)
    check_count(max_bits, "max_bits")
    bits = np.arange(1, max_bits + 1)[:, None]
    g = table.g(np.broadcast_to(bits, (max_bits, sigma2.size)))
    den = sigma_n2 + g * l[None, :]
    if np.any(den <= 0):
        raise SingularityError("noise-plus-distortion power vanished")
    q = p * sigma2[None, :] / den
    return QTable(q=q, Q=surrogate_terms(q))

