"""Clustered line-of-sight mmWave channels for uniform linear arrays.

Channels are sums of rank-one outer products of ULA steering vectors (one
dominant ray per scatterer plus weaker intra-cluster rays), optionally with a
weak i.i.d. diffuse floor, normalized to ``||H||_F^2 = N_t N_r``.  Downstream
code only sees a channel through its truncated SVD, :class:`ChannelRealization`.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_complex_matrix, check_count, check_positive
from .exceptions import DimensionError, DomainError, RankDeficiencyError

SPEED_OF_LIGHT = 299_792_458.0

# sigma_Ns / sigma_1 below this counts as rank deficient
RANK_TOL = 1e-12


@dataclass(frozen=True)
class ArrayConfig:
    """Transmit/receive ULA geometry. Defaults follow the 28 GHz backhaul link."""

    num_tx_antennas: int = 64
    num_rx_antennas: int = 128
    element_spacing: float = 0.5
    carrier_frequency: float = 28e9
    tx_rx_separation: float = 100.0

    def __post_init__(self):
        check_count(self.num_tx_antennas, "num_tx_antennas")
        check_count(self.num_rx_antennas, "num_rx_antennas")
        check_positive(self.element_spacing, "element_spacing")
        check_positive(self.carrier_frequency, "carrier_frequency")
        check_positive(self.tx_rx_separation, "tx_rx_separation")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_frequency


@dataclass(frozen=True)
class ScattererScenario:
    """Scatterer layout and gain statistics.

    ``aod``/``aoa``/``gains`` pin the dominant rays when given (one entry per
    dominant scatterer); otherwise angles are uniform in ``[-angle_range,
    angle_range]`` and gains are complex Gaussian.  The first scatterer is
    the LOS path; the others sit ``los_excess_db`` below it, further
    attenuated by the path-loss exponent over their excess path length.
    Every cluster carries ``rays_per_cluster - 1`` extra rays spread around
    the dominant angle, ``los_excess_db`` below the cluster's dominant ray.
    """

    num_dominant_scatterers: int = 2
    aod: tuple | None = None
    aoa: tuple | None = None
    gains: tuple | None = None
    los_excess_db: float = 10.0
    path_loss_exponent: float = 2.0
    rays_per_cluster: int = 8
    angular_spread: float = 0.1
    diffuse_db: float | None = -20.0
    angle_range: float = np.pi / 3
    normalize: bool = True

    def __post_init__(self):
        if self.num_dominant_scatterers not in (1, 2):
            raise DomainError("num_dominant_scatterers must be 1 or 2")
        for name in ("aod", "aoa", "gains"):
            val = getattr(self, name)
            if val is None:
                continue
            val = tuple(val)
            object.__setattr__(self, name, val)
            if len(val) != self.num_dominant_scatterers:
                raise DimensionError(f"{name} needs {self.num_dominant_scatterers} entries")
            if name != "gains" and any(abs(a) > np.pi / 2 for a in val):
                raise DomainError(f"{name} angles must lie in [-pi/2, pi/2]")
        if not 0 < self.angle_range <= np.pi / 2:
            raise DomainError("angle_range must lie in (0, pi/2]")
        check_count(self.rays_per_cluster, "rays_per_cluster")
        check_positive(self.angular_spread, "angular_spread", strict=False)
        check_positive(self.path_loss_exponent, "path_loss_exponent", strict=False)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """A channel matrix with its top-``n_streams`` SVD factors.

    ``H ~= U diag(singular_values) F_opt^H`` on the retained subspace.
    """

    H: np.ndarray
    U: np.ndarray
    singular_values: np.ndarray
    F_opt: np.ndarray
    n_streams: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def Sigma(self):
        return np.diag(self.singular_values)

    @property
    def sigma2(self):
        return self.singular_values**2

    @property
    def num_rx_antennas(self):
        return self.H.shape[0]

    @property
    def num_tx_antennas(self):
        return self.H.shape[1]

    def to_dict(self):
        return {
            "dims": [int(self.H.shape[0]), int(self.H.shape[1])],
            "n_streams": int(self.n_streams),
            "seed": self.seed,
            "H": [[[float(z.real), float(z.imag)] for z in row] for row in self.H],
            "meta": self.meta,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc):
        dims = doc["dims"]
        H = np.array([[complex(re, im) for re, im in row] for row in doc["H"]], dtype=np.complex128)
        if H.shape != tuple(dims):
            raise DimensionError(f"H entries have shape {H.shape}, header says {tuple(dims)}")
        chan = svd_factors(H, doc["n_streams"])
        return cls(chan.H, chan.U, chan.singular_values, chan.F_opt, chan.n_streams,
                   seed=doc.get("seed"), meta=dict(doc.get("meta") or {}))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def steering_vector(n, angle, spacing=0.5):
    """ULA response ``exp(j 2 pi d k sin(angle))`` for ``k = 0..n-1`` (unit-modulus entries)."""
    k = np.arange(n)
    return np.exp(2j * np.pi * spacing * k * np.sin(angle))


def svd_factors(H, n_streams):
    """Truncated SVD of ``H`` keeping ``n_streams`` streams.

    Raises
    ------
    DimensionError
        ``n_streams`` exceeds ``min(N_r, N_t)``.
    RankDeficiencyError
        ``sigma_{n_streams} < 1e-12 * sigma_1``.
    """
    H = check_complex_matrix(H, "H")
    n_streams = check_count(n_streams, "n_streams")
    if n_streams > min(H.shape):
        raise DimensionError(f"n_streams={n_streams} exceeds min(N_r, N_t)={min(H.shape)}")
    u, s, vh = np.linalg.svd(H, full_matrices=False)
    if s[0] == 0 or s[n_streams - 1] < RANK_TOL * s[0]:
        raise RankDeficiencyError(
            f"sigma_{n_streams}={s[n_streams - 1]:.3e} is below {RANK_TOL:g} * sigma_1={s[0]:.3e}")
    return ChannelRealization(
        H=H,
        U=u[:, :n_streams],
        singular_values=s[:n_streams].copy(),
        F_opt=vh[:n_streams].conj().T,
        n_streams=n_streams,
    )


def numerical_rank(H, tol=RANK_TOL):
    s = np.linalg.svd(np.asarray(H), compute_uv=False)
    return int(np.sum(s >= tol * s[0])) if s[0] > 0 else 0


def _complex_normal(rng, size=None):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def channel_matrix(cfg, scenario, seed):
    """Draw the raw ``N_r x N_t`` channel matrix; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    nt, nr, d = cfg.num_tx_antennas, cfg.num_rx_antennas, cfg.element_spacing
    H = np.zeros((nr, nt), dtype=np.complex128)
    sub_db = 10 ** (-scenario.los_excess_db / 10)
    for c in range(scenario.num_dominant_scatterers):
        aod = scenario.aod[c] if scenario.aod is not None else rng.uniform(-scenario.angle_range, scenario.angle_range)
        aoa = scenario.aoa[c] if scenario.aoa is not None else rng.uniform(-scenario.angle_range, scenario.angle_range)
        if c == 0:
            power = 1.0
            phase = np.exp(-2j * np.pi * cfg.tx_rx_separation / cfg.wavelength)
        else:
            excess = rng.uniform(1.1, 2.0)
            power = sub_db * excess ** (-scenario.path_loss_exponent)
            phase = 1.0
        if scenario.gains is not None:
            gain = complex(scenario.gains[c])
        else:
            gain = np.sqrt(power) * phase * _complex_normal(rng)
        H += gain * np.outer(steering_vector(nr, aoa, d), steering_vector(nt, aod, d).conj())
        n_extra = scenario.rays_per_cluster - 1
        if n_extra:
            ray_power = abs(gain) ** 2 * sub_db / n_extra
            for _ in range(n_extra):
                ray_aod = np.clip(aod + scenario.angular_spread * rng.standard_normal(), -np.pi / 2, np.pi / 2)
                ray_aoa = np.clip(aoa + scenario.angular_spread * rng.standard_normal(), -np.pi / 2, np.pi / 2)
                g = np.sqrt(ray_power) * _complex_normal(rng)
                H += g * np.outer(steering_vector(nr, ray_aoa, d), steering_vector(nt, ray_aod, d).conj())
    if scenario.diffuse_db is not None:
        per_entry = 10 ** (scenario.diffuse_db / 10) * np.linalg.norm(H) ** 2 / (nr * nt)
        H += np.sqrt(per_entry) * _complex_normal(rng, (nr, nt))
    if scenario.normalize:
        H *= np.sqrt(nr * nt) / np.linalg.norm(H)
    return H


def generate_channel(cfg, scenario, seed, n_streams=None):
    """Generate a seeded channel realization.

    Parameters
    ----------
    cfg : ArrayConfig
    scenario : ScattererScenario
    seed : int
    n_streams : int, optional
        Streams to retain.  Defaults to the numerical rank of the draw.
    """
    H = channel_matrix(cfg, scenario, seed)
    if n_streams is None:
        n_streams = max(numerical_rank(H), 1)
    chan = svd_factors(H, n_streams)
    meta = {"num_dominant_scatterers": scenario.num_dominant_scatterers}
    return ChannelRealization(chan.H, chan.U, chan.singular_values, chan.F_opt,
                              chan.n_streams, seed=seed, meta=meta)
