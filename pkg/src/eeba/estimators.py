"""scikit-learn style wrappers around the functional API.

:class:`BitAllocator` treats a channel matrix as its input: ``fit`` solves the
allocation for one channel, ``predict`` solves it for another with the same
settings.  :class:`AqnmQuantizer` is a transformer over complex samples.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_bit_vector, check_complex_matrix
from .allocation import (AllocationContext, SaConfig, fixed_allocation, solve_exhaustive,
                         solve_min_crlb, solve_qsearch, solve_sa)
from .channel import svd_factors
from .exceptions import DomainError
from .metrics import PowerModel
from .quantization import DEFAULT_TABLE, optimal_loading, quantize_uniform
from .transceiver import make_combiner

SOLVERS = ("es", "qsearch", "sa", "min_crlb", "fixed")


class BitAllocator(BaseEstimator):
    """Energy-efficient per-stream ADC bit allocation for a channel matrix.

    Parameters
    ----------
    solver : {"es", "qsearch", "sa", "min_crlb", "fixed"}
    n_streams : int
    max_bits : int
    snr_db : float
        ``10 log10(p / sigma_n2)`` with ``p = 1``.
    combiner : {"ideal", "hybrid"}
    power_model : PowerModel, optional
        Defaults to the standard constants; ``N_s`` is overridden.
    sa_r, sa_seed : float, int
        Cooling factor and seed for ``solver="sa"``.
    fixed_bits : int
        Bits per stream for ``solver="fixed"``.

    Attributes
    ----------
    b_ : ndarray of int
    report_ : RateEnergyReport
    result_ : AllocationResult
    """

    def __init__(self, solver="qsearch", n_streams=8, max_bits=4, snr_db=10.0, combiner="ideal",
                 power_model=None, sa_r=0.9, sa_seed=0, fixed_bits=1):
        self.solver = solver
        self.n_streams = n_streams
        self.max_bits = max_bits
        self.snr_db = snr_db
        self.combiner = combiner
        self.power_model = power_model
        self.sa_r = sa_r
        self.sa_seed = sa_seed
        self.fixed_bits = fixed_bits

    def _solve(self, X):
        if self.solver not in SOLVERS:
            raise DomainError(f"solver must be one of {SOLVERS}")
        H = check_complex_matrix(X, "X")
        chan = svd_factors(H, self.n_streams)
        comb = make_combiner(chan, self.combiner)
        ctx = AllocationContext(chan, comb, self.power_model or PowerModel(), p=1.0,
                                sigma_n2=10 ** (-self.snr_db / 10), max_bits=self.max_bits)
        space = ctx.space()
        if self.solver == "es":
            return solve_exhaustive(space, ctx)
        if self.solver == "qsearch":
            return solve_qsearch(space, ctx.qtable, ctx=ctx)
        if self.solver == "sa":
            return solve_sa(space, ctx.qtable, cfg=SaConfig(r=self.sa_r, seed=self.sa_seed), ctx=ctx)
        if self.solver == "min_crlb":
            return solve_min_crlb(space, ctx)
        return fixed_allocation(space, ctx, self.fixed_bits)

    def fit(self, X, y=None):
        """Solve the allocation for channel matrix ``X`` (``N_r x N_t``)."""
        self.result_ = self._solve(X)
        self.b_ = self.result_.b_star
        self.report_ = self.result_.report
        return self

    def predict(self, X):
        """Allocation for channel ``X`` under the fitted settings."""
        check_is_fitted(self, "b_")
        return self._solve(X).b_star

    def score(self, X, y=None):
        """Energy efficiency of the allocation solved for ``X``."""
        check_is_fitted(self, "b_")
        return self._solve(X).report.ee


class AqnmQuantizer(TransformerMixin, BaseEstimator):
    """Per-column low-resolution quantization of complex samples.

    ``mode="uniform"`` runs the real mid-rise quantizer per I/Q rail;
    ``mode="aqnm"`` draws the additive model ``(1 - f) z + n_q`` with
    ``E|n_q|^2 = (1 - f) f E|z|^2``.

    Parameters
    ----------
    bits : array-like of int
        Bits per column.
    mode : {"uniform", "aqnm"}
    loading : "optimal" or float
        Full scale of the uniform quantizer in rail-RMS units.
    random_state : int, optional
        Seed of the AQNM noise.
    """

    def __init__(self, bits=(4,), mode="uniform", loading="optimal", random_state=None):
        self.bits = bits
        self.mode = mode
        self.loading = loading
        self.random_state = random_state

    def fit(self, X, y=None):
        Z = check_complex_matrix(X, "X")
        self.bits_ = check_bit_vector(self.bits, DEFAULT_TABLE.max_bits, n_streams=Z.shape[1], name="bits")
        if self.mode not in ("uniform", "aqnm"):
            raise DomainError("mode must be 'uniform' or 'aqnm'")
        self.rms_ = np.sqrt(np.mean(np.abs(Z) ** 2, axis=0))
        if self.mode == "uniform" and self.loading == "optimal":
            self.loading_ = np.array([optimal_loading(int(b)) for b in self.bits_])
        else:
            self.loading_ = np.full(self.bits_.shape, float(self.loading) if self.mode == "uniform" else np.nan)
        self.n_features_in_ = Z.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "rms_")
        Z = check_complex_matrix(X, "X", shape=(None, self.n_features_in_))
        if self.mode == "uniform":
            return quantize_uniform(Z, self.bits_, loading=self.loading, rms=self.rms_)
        f = DEFAULT_TABLE.f(self.bits_)
        alpha = 1.0 - f
        rng = np.random.default_rng(self.random_state)
        noise = (rng.standard_normal(Z.shape) + 1j * rng.standard_normal(Z.shape)) / np.sqrt(2)
        return alpha * Z + np.sqrt(alpha * f) * self.rms_ * noise
