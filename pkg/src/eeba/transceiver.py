"""Hybrid combiner design, the quantized receive chain, and its analytic MSE/CRLB.

Receive chain for symbols ``x ~ CN(0, p I)``::

    r = H F_opt x + n            n   ~ CN(0, sigma_n2 I)
    z = W_A^H r                  effective analog combiner (N_s x N_r)
    y~ = W_alpha z + n_q         AQNM, n_q ~ CN(0, D_q^2)
    y = W_D^H y~                 post-quantization digital combiner

The post-quantization combiner is the unbiased equalizer
``(W_alpha W_A^H U Sigma)^{-1}``, which makes ``K = I`` so the MSE reduces to
``sigma_n2 Sigma^-2 + W_D^H D_q^2 W_D`` when ``W_A^H = U^H``.  The CRLB and the
information rate do not depend on which invertible post-quantization combiner
is used.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_bit_vector, check_count, check_positive
from .exceptions import DomainError, SingularityError
from .quantization import DEFAULT_TABLE, build_quantizer_model, quantize_uniform

IDENTITY_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class HybridCombiner:
    """Analog/digital combiner pair approximating ``U^H``.

    ``W_A_tilde`` (N_r x N_s) has constant-modulus entries ``1/sqrt(N_r)`` and
    ``U ~= W_A_tilde @ W_D_H``.  ``W_A_tilde is None`` marks the ideal
    (unconstrained) combiner ``W_A^H = U^H``.
    """

    W_A_H: np.ndarray
    W_A_tilde: np.ndarray | None
    W_D_H: np.ndarray
    residual: float
    identity_error: float
    residual_trace: tuple = ()
    iterations: int = 0
    warnings: tuple = field(default=())

    @property
    def effective_H(self):
        """The combiner applied before quantization, ``W_D W_A_tilde^H``."""
        if self.W_A_tilde is None:
            return self.W_A_H
        return self.W_D_H.conj().T @ self.W_A_tilde.conj().T

    @property
    def identity_ok(self):
        return self.identity_error <= IDENTITY_TOL

    @property
    def is_ideal(self):
        return self.W_A_tilde is None


def _phase_project(A, n_rows):
    return np.exp(1j * np.angle(A)) / np.sqrt(n_rows)


def projection_step(U, W_D_H, W_prev=None):
    """Constant-modulus update of the analog combiner given ``W_D^H``.

    Without ``W_prev`` this is the plain phase projection of ``U W_D``.  With
    ``W_prev`` it is the majorize-minimize variant, which reduces to the same
    projection when ``W_D^H W_D`` is a multiple of the identity and otherwise
    guarantees the residual does not increase.
    """
    n_rows = U.shape[0]
    B = W_D_H
    target = U @ B.conj().T
    if W_prev is not None:
        BB = B @ B.conj().T
        lam = np.linalg.eigvalsh(BB)[-1]
        target = target + lam * W_prev - W_prev @ BB
    return _phase_project(target, n_rows)


def _identity_error(W_eff_H, U):
    return float(np.linalg.norm(W_eff_H @ U - np.eye(U.shape[1]), 2))


def design_combiner(chan, max_iters=200, tol=1e-8):
    """Alternating minimization of ``||U - W_A_tilde W_D^H||_F`` over constant-modulus ``W_A_tilde``.

    Each iteration solves the least-squares ``W_D^H`` for the current analog
    combiner, then takes a projection step.  ``W_D^H`` is finally rescaled so
    ``||W_A_tilde W_D^H||_F^2 = N_s``.
    """
    U = chan.U
    n_rows, n_streams = U.shape
    check_count(max_iters, "max_iters")
    W = projection_step(U, np.eye(n_streams))
    trace = []
    it = 0
    for it in range(1, max_iters + 1):
        B = np.linalg.lstsq(W, U, rcond=None)[0]
        res = float(np.linalg.norm(U - W @ B))
        trace.append(res)
        if len(trace) > 1 and trace[-2] - res <= tol * max(trace[-2], np.finfo(float).tiny):
            break
        if res <= 1e-14 * np.sqrt(n_streams):
            break
        W = projection_step(U, B, W_prev=W)
    B = np.linalg.lstsq(W, U, rcond=None)[0]
    approx = W @ B
    B = B * (np.sqrt(n_streams) / np.linalg.norm(approx))
    residual = float(np.linalg.norm(U - W @ B))
    W_eff_H = B.conj().T @ W.conj().T
    err = _identity_error(W_eff_H, U)
    warnings = ()
    if err > IDENTITY_TOL:
        warnings = (f"combiner identity ||W_A^H U - I|| = {err:.3e} exceeds {IDENTITY_TOL:g}; "
                    "analytic formulas use the exact matrix CRLB",)
    return HybridCombiner(W_A_H=U.conj().T, W_A_tilde=W, W_D_H=B, residual=residual,
                          identity_error=err, residual_trace=tuple(trace), iterations=it,
                          warnings=warnings)


def ideal_combiner(chan):
    """Unconstrained combiner ``W_A^H = U^H`` with an identity digital factor."""
    U = chan.U
    return HybridCombiner(W_A_H=U.conj().T, W_A_tilde=None, W_D_H=np.eye(U.shape[1], dtype=complex),
                          residual=0.0, identity_error=_identity_error(U.conj().T, U))


def make_combiner(chan, mode="ideal", **kwargs):
    if mode == "ideal":
        return ideal_combiner(chan)
    if mode == "hybrid":
        return design_combiner(chan, **kwargs)
    raise DomainError(f"unknown combiner mode {mode!r}")


@dataclass(frozen=True, eq=False)
class CrlbDiagonal:
    """Per-stream CRLB entries with their components.

    For the diagonal form ``entries = (noise_power + quant) / sigma2`` with
    ``quant = g(b_i) l_i``.  ``form`` is ``"diagonal"`` or ``"fisher"`` (the
    exact matrix bound used when the combiner identity fails).
    """

    entries: np.ndarray
    sigma2: np.ndarray
    noise_power: float
    quant: np.ndarray
    form: str = "diagonal"


class LinkModel:
    """b-independent pieces of one (channel, combiner, distortion table) link."""

    def __init__(self, chan, combiner, table=DEFAULT_TABLE):
        self.chan = chan
        self.combiner = combiner
        self.table = table
        self.W_eff_H = combiner.effective_H
        self.M = self.W_eff_H @ chan.U
        self.WAH_H = self.W_eff_H @ chan.H
        self.sigma = chan.singular_values
        self.sigma2 = self.sigma**2
        if np.any(self.sigma2 <= 0):
            raise SingularityError("retained singular values must be positive")
        # diag(I + W_A^H H (W_A^H H)^H)
        self.l = 1.0 + np.sum(np.abs(self.WAH_H) ** 2, axis=1)
        self.C = self.W_eff_H @ self.W_eff_H.conj().T
        self.diagonal = combiner.identity_ok

    @property
    def n_streams(self):
        return self.chan.n_streams

    def quantizer(self, b):
        return build_quantizer_model(b, self.WAH_H, self.table)

    def equalizer(self, b):
        """Post-quantization digital combiner ``(W_alpha M Sigma)^{-1}``."""
        qm = self.quantizer(b)
        return np.linalg.inv(qm.alpha[:, None] * self.M * self.sigma[None, :])

    def matrices(self, b, sigma_n2):
        """Return ``(K, G, Phi, E, qm)`` for bit vector ``b``."""
        qm = self.quantizer(b)
        E = np.linalg.inv(qm.alpha[:, None] * self.M * self.sigma[None, :])
        G = E @ (qm.alpha[:, None] * self.W_eff_H)
        K = G @ self.chan.U * self.sigma[None, :]
        Phi = sigma_n2 * G @ G.conj().T + (E * qm.Dq2_diag[None, :]) @ E.conj().T
        return K, G, Phi, E, qm

    def crlb_diagonal(self, b, sigma_n2):
        b = check_bit_vector(b, self.table.max_bits, n_streams=self.n_streams)
        quant = self.table.g(b) * self.l
        return CrlbDiagonal(entries=(sigma_n2 + quant) / self.sigma2, sigma2=self.sigma2.copy(),
                            noise_power=float(sigma_n2), quant=np.asarray(quant, dtype=float))

    def crlb_matrix(self, b, sigma_n2, form="fisher"):
        """Full CRLB matrix.

        ``"fisher"``: ``(K^H Phi^-1 K)^-1 = K^-1 Phi K^-H``.
        ``"literal"``: ``sigma_n2 Sigma^-2 + K^-1 W_D^H D_q^2 W_D K^-H``.
        """
        K, G, Phi, E, qm = self.matrices(b, sigma_n2)
        Kinv = np.linalg.inv(K)
        if form == "fisher":
            return Kinv @ Phi @ Kinv.conj().T
        if form == "literal":
            quant = Kinv @ (E * qm.Dq2_diag[None, :]) @ E.conj().T @ Kinv.conj().T
            return sigma_n2 * np.diag(1.0 / self.sigma2) + quant
        raise DomainError(f"unknown CRLB form {form!r}")

    def crlb(self, b, sigma_n2):
        if self.diagonal:
            return self.crlb_diagonal(b, sigma_n2)
        b = check_bit_vector(b, self.table.max_bits, n_streams=self.n_streams)
        entries = np.real(np.diag(self.crlb_matrix(b, sigma_n2, "fisher")))
        return CrlbDiagonal(entries=entries, sigma2=self.sigma2.copy(), noise_power=float(sigma_n2),
                            quant=entries * self.sigma2 - sigma_n2, form="fisher")

    def mse(self, b, p, sigma_n2):
        K, G, Phi, E, qm = self.matrices(b, sigma_n2)
        quant = np.real(np.sum(np.abs(E) ** 2 * qm.Dq2_diag[None, :], axis=1))
        if self.diagonal:
            return sigma_n2 / self.sigma2 + quant
        KmI = K - np.eye(self.n_streams)
        return np.real(p * np.sum(np.abs(KmI) ** 2, axis=1)
                       + sigma_n2 * np.sum(np.abs(G) ** 2, axis=1)) + quant


def analytic_mse(chan, combiner, b, p, sigma_n2, table=DEFAULT_TABLE):
    """Per-stream MSE; closed form when the combiner identity holds, full expression otherwise."""
    return LinkModel(chan, combiner, table).mse(b, p, sigma_n2)


def crlb(chan, combiner, b, sigma_n2, table=DEFAULT_TABLE):
    """Per-stream CRLB ``(sigma_n2 + g(b_i) l_i) / sigma_i^2``."""
    return LinkModel(chan, combiner, table).crlb(b, sigma_n2)


def crlb_matrix(chan, combiner, b, sigma_n2, form="fisher", table=DEFAULT_TABLE):
    return LinkModel(chan, combiner, table).crlb_matrix(b, sigma_n2, form)


@dataclass(frozen=True, eq=False)
class SignalChainSample:
    """One batch of chain samples; every array has shape ``(n_samples, dim)``."""

    x: np.ndarray
    x_tilde: np.ndarray
    r: np.ndarray
    z: np.ndarray
    y_tilde: np.ndarray
    y: np.ndarray
    n: np.ndarray
    n_q: np.ndarray


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def run_signal_chain(chan, combiner, b, p, sigma_n2, num_samples, seed, mode="aqnm",
                     table=DEFAULT_TABLE, loading="optimal", chunk_size=8192):
    """Yield :class:`SignalChainSample` batches of the quantized receive chain.

    Chunk ``k`` draws from ``default_rng([seed, k])`` so results depend only
    on ``(seed, chunk_size)``, never on how chunks are distributed.

    ``mode="aqnm"`` draws ``n_q ~ CN(0, D_q^2)``; ``mode="real-quantizer"``
    applies :func:`quantize_uniform` to ``z`` with the analytic per-entry RMS
    and reports ``n_q = y~ - W_alpha z``.
    """
    if mode not in ("aqnm", "real-quantizer"):
        raise DomainError(f"unknown chain mode {mode!r}")
    check_count(num_samples, "num_samples")
    check_positive(p, "p")
    check_positive(sigma_n2, "sigma_n2", strict=False)
    link = LinkModel(chan, combiner, table)
    qm = link.quantizer(b)
    E = link.equalizer(b)
    W = link.W_eff_H
    HF = chan.H @ chan.F_opt
    rms = np.sqrt(p * np.sum(np.abs(W @ HF) ** 2, axis=1) + sigma_n2 * np.sum(np.abs(W) ** 2, axis=1))
    ns, nr = chan.n_streams, chan.num_rx_antennas
    for k, start in enumerate(range(0, num_samples, chunk_size)):
        cnt = min(chunk_size, num_samples - start)
        rng = np.random.default_rng([seed, k])
        x = np.sqrt(p) * _cn(rng, (cnt, ns))
        n = np.sqrt(sigma_n2) * _cn(rng, (cnt, nr))
        x_tilde = x @ chan.F_opt.T
        r = x_tilde @ chan.H.T + n
        z = r @ W.T
        if mode == "aqnm":
            n_q = np.sqrt(qm.Dq2_diag)[None, :] * _cn(rng, (cnt, ns))
            y_tilde = qm.alpha[None, :] * z + n_q
        else:
            y_tilde = quantize_uniform(z, qm.bits, loading=loading, rms=rms, max_bits=table.max_bits)
            n_q = y_tilde - qm.alpha[None, :] * z
        y = y_tilde @ E.T
        yield SignalChainSample(x=x, x_tilde=x_tilde, r=r, z=z, y_tilde=y_tilde, y=y, n=n, n_q=n_q)


def monte_carlo_moments(chan, combiner, b, p, sigma_n2, num_samples, seed, mode="aqnm",
                        table=DEFAULT_TABLE, loading="optimal", chunk_size=8192):
    """Empirical per-stream MSE ``E|y - x|^2`` and output covariance ``E[y y^H]``."""
    ns = chan.n_streams
    sq = np.zeros(ns)
    cov = np.zeros((ns, ns), dtype=complex)
    for batch in run_signal_chain(chan, combiner, b, p, sigma_n2, num_samples, seed, mode,
                                  table, loading, chunk_size):
        sq += np.sum(np.abs(batch.y - batch.x) ** 2, axis=0)
        cov += batch.y.T @ batch.y.conj()
    return sq / num_samples, cov / num_samples


@dataclass(frozen=True, eq=False)
class PseudoCovarianceReport:
    num_samples: int
    Phi: np.ndarray
    Phi_hat: np.ndarray
    pseudo_cov: np.ndarray
    mean: np.ndarray
    pseudo_max_normalized: float
    mean_max_normalized: float
    clt_bound: float
    cov_rel_error: float
    cov_tol: float = 0.03

    @property
    def pseudo_ok(self):
        return self.pseudo_max_normalized <= self.clt_bound

    @property
    def mean_ok(self):
        return self.mean_max_normalized <= self.clt_bound

    @property
    def cov_ok(self):
        return self.cov_rel_error <= self.cov_tol

    @property
    def passed(self):
        return self.pseudo_ok and self.mean_ok and self.cov_ok


def pseudo_covariance_test(chan, combiner, b, sigma_n2, num_samples, seed, table=DEFAULT_TABLE,
                           chunk_size=16384, n_sigma=4.0):
    """Check that ``n_1 = G n + W_D^H n_q`` is circularly symmetric with covariance ``Phi``.

    Entries of the pseudo-covariance and mean estimates are normalized by
    their CLT standard error scale ``sqrt(Phi_ii Phi_jj / N)`` (resp.
    ``sqrt(Phi_ii / N)``) and compared against ``n_sigma``.  The Hermitian
    covariance estimate is compared to ``Phi`` in relative Frobenius norm.
    """
    check_count(num_samples, "num_samples")
    link = LinkModel(chan, combiner, table)
    K, G, Phi, E, qm = link.matrices(b, sigma_n2)
    ns, nr = chan.n_streams, chan.num_rx_antennas
    total = np.zeros(ns, dtype=complex)
    herm = np.zeros((ns, ns), dtype=complex)
    pseudo = np.zeros((ns, ns), dtype=complex)
    for k, start in enumerate(range(0, num_samples, chunk_size)):
        cnt = min(chunk_size, num_samples - start)
        rng = np.random.default_rng([seed, k])
        n = np.sqrt(sigma_n2) * _cn(rng, (cnt, nr))
        n_q = np.sqrt(qm.Dq2_diag)[None, :] * _cn(rng, (cnt, ns))
        n1 = n @ G.T + n_q @ E.T
        total += n1.sum(axis=0)
        herm += n1.T @ n1.conj()
        pseudo += n1.T @ n1
    N = num_samples
    mean, herm, pseudo = total / N, herm / N, pseudo / N
    d = np.real(np.diag(Phi))
    scale = np.sqrt(np.outer(d, d))
    return PseudoCovarianceReport(
        num_samples=N, Phi=Phi, Phi_hat=herm, pseudo_cov=pseudo, mean=mean,
        pseudo_max_normalized=float(np.max(np.abs(pseudo) / scale) * np.sqrt(N)),
        mean_max_normalized=float(np.max(np.abs(mean) / np.sqrt(d)) * np.sqrt(N)),
        clt_bound=float(n_sigma),
        cov_rel_error=float(np.linalg.norm(herm - Phi) / np.linalg.norm(Phi)),
    )
