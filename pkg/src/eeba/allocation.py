"""Per-stream ADC bit allocation: solution space, exhaustive search, Q-search and annealing.

Bit vectors are enumerated lexicographically (first stream most significant).
Objectives that split into per-stream terms are scanned in blocks: the sums
over a head prefix and a tail block of streams are tabulated separately and
combined with one outer sum per block, which keeps ``4^12`` candidates to a
few seconds.

Every solver breaks ties the same way: largest objective, then smallest total
power, then the lexicographically smallest bit vector.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._validation import check_bit_vector, check_count, check_positive
from .exceptions import DomainError, InfeasibleBudgetError
from .metrics import LN2, PowerModel, build_qtable, report_for
from .quantization import DEFAULT_TABLE
from .transceiver import LinkModel

TAIL_BLOCK = 1 << 16
SCAN_BLOCK = 1 << 20

# operation counts printed in the complexity table of the reference design, keyed by (solver, N_s)
PUBLISHED_COUNTS = {
    ("es", 8): {"complex_mults": 1_502_400, "real_mults": 192, "complex_adds": 1_218_822},
    ("es", 12): {"complex_mults": 223_865_040, "real_mults": 432, "complex_adds": 193_616_609},
    ("qsearch", 8): {"real_mults": 288, "real_adds": 30_272},
    ("qsearch", 12): {"real_mults": 576, "real_adds": 3_198_552},
    ("sa9", 8): {"real_mults": 288, "real_adds": 2_916},
    ("sa9", 12): {"real_mults": 576, "real_adds": 6_516},
    ("sa5", 8): {"real_mults": 288, "real_adds": 396},
    ("sa5", 12): {"real_mults": 576, "real_adds": 780},
}
# evaluation counts implied by the published ES multiplication counts
PUBLISHED_GAMMA = {8: 18_780, 12: 1_332_530}


@dataclass
class OpCounter:
    """Arithmetic operation tallies; complex and real operations are kept apart."""

    complex_mults: int = 0
    complex_adds: int = 0
    real_mults: int = 0
    real_adds: int = 0
    objective_evals: int = 0

    def add(self, **kw):
        for k, v in kw.items():
            setattr(self, k, getattr(self, k) + int(v))

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("complex_mults", "complex_adds", "real_mults", "real_adds", "objective_evals")}


class SolutionSpace:
    """Bit vectors in ``{1..max_bits}^N_s`` whose ADC power respects the budget.

    Parameters
    ----------
    n_streams, max_bits : int
    pm : PowerModel, optional
        Supplies ``P_ADC`` and how it is charged.  Without a budget every
        vector is feasible.
    """

    def __init__(self, n_streams, max_bits, pm=None):
        self.n_streams = check_count(n_streams, "n_streams")
        self.max_bits = check_count(max_bits, "max_bits")
        self.pm = PowerModel(N_s=self.n_streams) if pm is None else pm
        self.level_cap = self.pm.max_level_sum
        self.levels = 2 ** np.arange(1, self.max_bits + 1, dtype=np.int64)
        if self.level_cap is not None and self.level_cap < 2 * self.n_streams:
            raise InfeasibleBudgetError(
                f"P_ADC={self.pm.P_ADC:g} W is below the cost of the all-one-bit vector "
                f"({2 * self.n_streams * self.pm.budget_unit:.6g} W)",
                budget=self.pm.P_ADC, minimum=2 * self.n_streams * self.pm.budget_unit)
        self._size = None

    @property
    def grid_size(self):
        return self.max_bits**self.n_streams

    def __len__(self):
        return self.cardinality()

    def cardinality(self):
        """Number of feasible vectors, by dynamic programming over ``sum 2^b``."""
        if self._size is None:
            if self.level_cap is None:
                self._size = self.grid_size
            else:
                cap = self.level_cap
                ways = np.zeros(cap + 1, dtype=object)
                ways[0] = 1
                for _ in range(self.n_streams):
                    nxt = np.zeros_like(ways)
                    for lv in self.levels:
                        if lv <= cap:
                            nxt[lv:] += ways[: cap + 1 - lv]
                    ways = nxt
                self._size = int(ways.sum())
        return self._size

    def contains(self, b):
        b = np.asarray(b)
        if b.shape != (self.n_streams,) or np.any(b < 1) or np.any(b > self.max_bits):
            return False
        return self.level_cap is None or int(np.sum(2 ** b.astype(np.int64))) <= self.level_cap

    def feasible_mask(self, level_sums):
        if self.level_cap is None:
            return np.ones(np.shape(level_sums), dtype=bool)
        return level_sums <= self.level_cap

    def decode(self, index):
        """Bit vector at lexicographic grid position ``index``."""
        digits = np.unravel_index(np.asarray(index), (self.max_bits,) * self.n_streams)
        return np.stack(digits, axis=-1).astype(np.int64) + 1

    def _split(self):
        tail = 1
        while tail < self.n_streams and self.max_bits ** (tail + 1) <= TAIL_BLOCK:
            tail += 1
        return self.n_streams - tail, tail

    @staticmethod
    def _outer_sums(table, cols):
        s = np.zeros(1)
        for c in cols:
            s = (s[:, None] + table[:, c][None, :]).ravel()
        return s

    def scan(self, tables):
        """Yield ``(start, sums, level_sums, mask)`` over the grid in lexicographic blocks.

        ``tables`` is a list of ``(max_bits, N_s)`` arrays; ``sums[k]`` holds
        ``sum_i tables[k][b_i - 1, i]`` for every vector of the block.
        """
        head, tail = self._split()
        lv = np.broadcast_to(self.levels[:, None].astype(float), (self.max_bits, self.n_streams))
        tables = [np.asarray(t, dtype=float) for t in tables] + [lv]
        head_cols, tail_cols = range(head), range(head, self.n_streams)
        tail_sums = [self._outer_sums(t, tail_cols) for t in tables]
        head_sums = [self._outer_sums(t, head_cols) for t in tables]
        n_tail = self.max_bits**tail
        rows = max(1, SCAN_BLOCK // n_tail)
        for h0 in range(0, head_sums[0].size, rows):
            h1 = min(h0 + rows, head_sums[0].size)
            sums = [(hs[h0:h1, None] + ts[None, :]).ravel() for hs, ts in zip(head_sums, tail_sums)]
            level_sums = np.rint(sums.pop()).astype(np.int64)
            yield h0 * n_tail, sums, level_sums, self.feasible_mask(level_sums)

    def blocks(self, block=SCAN_BLOCK):
        """Yield ``(start, B, mask)`` with the bit vectors ``B`` materialized."""
        for start in range(0, self.grid_size, block):
            idx = np.arange(start, min(start + block, self.grid_size))
            B = self.decode(idx)
            yield start, B, self.feasible_mask(np.sum(2 ** B, axis=1))

    def members(self):
        """All feasible vectors in lexicographic order (small spaces only)."""
        return np.concatenate([B[m] for _, B, m in self.blocks()], axis=0)

    def random_member(self, rng, max_tries=10_000):
        for _ in range(max_tries):
            b = rng.integers(1, self.max_bits + 1, size=self.n_streams)
            if self.contains(b):
                return b.astype(np.int64)
        return np.ones(self.n_streams, dtype=np.int64)


def build_solution_space(n_streams, max_bits, pm=None):
    """Feasible set; raises :class:`InfeasibleBudgetError` when it is empty."""
    return SolutionSpace(n_streams, max_bits, pm)


class _Best:
    """Running argmax with the shared tie-break."""

    def __init__(self):
        self.value = -np.inf
        self.level = None
        self.index = None

    def offer(self, values, level_sums, indices):
        if values.size == 0:
            return
        vmax = values.max()
        if vmax < self.value:
            return
        tie = values == vmax
        lv = level_sums[tie]
        lmin = lv.min()
        idx = indices[tie][lv == lmin].min()
        key_better = (vmax > self.value or lmin < self.level
                      or (lmin == self.level and idx < self.index))
        if key_better:
            self.value, self.level, self.index = float(vmax), int(lmin), int(idx)


@dataclass
class AllocationResult:
    b_star: np.ndarray
    solver: str
    objective: float
    report: object = None
    counters: OpCounter = field(default_factory=OpCounter)
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


class AllocationContext:
    """Everything the solvers need for one channel, combiner and operating point."""

    def __init__(self, chan, combiner, pm=None, p=1.0, sigma_n2=1.0, max_bits=4, table=DEFAULT_TABLE):
        self.chan = chan
        self.combiner = combiner
        self.pm = (pm or PowerModel()).with_streams(chan.n_streams)
        self.p = check_positive(p, "p")
        self.sigma_n2 = check_positive(sigma_n2, "sigma_n2", strict=False)
        self.max_bits = check_count(max_bits, "max_bits")
        if max_bits > table.max_bits:
            raise DomainError(f"max_bits={max_bits} exceeds the distortion table range {table.max_bits}")
        self.table = table
        self.link = LinkModel(chan, combiner, table)
        self.diagonal = self.link.diagonal
        # q table from the diagonal CRLB form; exact when the combiner identity holds
        self.qtable = build_qtable(self.link.sigma2, self.link.l, self.p, self.sigma_n2, max_bits, table)
        self.crlb_table = self.p / self.qtable.q
        self.rate_table = np.log2(1.0 / self.crlb_table + 1.0 / self.p)

    @property
    def n_streams(self):
        return self.chan.n_streams

    def space(self):
        return build_solution_space(self.n_streams, self.max_bits, self.pm)

    def report(self, b):
        return report_for(self.link, b, self.pm, self.p, self.sigma_n2)

    def exact_ee(self, B):
        """Energy efficiency of each row of ``B``."""
        B = np.atleast_2d(B)
        power = self.pm.total_power(B)
        if self.diagonal:
            rate = self.n_streams * np.log2(self.p) + self.rate_table[B - 1, np.arange(self.n_streams)].sum(axis=1)
        else:
            rate = np.array([self.link_rate(b) for b in B])
        return rate / power

    def link_rate(self, b):
        cr = self.link.crlb(b, self.sigma_n2)
        return self.n_streams * np.log2(self.p) + float(np.sum(np.log2(1.0 / cr.entries + 1.0 / self.p)))


def _finish(ctx, b, solver, objective, counter, trace=None, **diag):
    b = np.asarray(b, dtype=np.int64)
    report = ctx.report(b) if ctx is not None else None
    return AllocationResult(b_star=b, solver=solver, objective=float(objective), report=report,
                            counters=counter, trace=trace or [], diagnostics=diag)


def solve_exhaustive(space, ctx, counter=None):
    """Exact energy-efficiency maximizer over every feasible vector."""
    counter = OpCounter() if counter is None else counter
    ns = space.n_streams
    best = _Best()
    n_feasible = 0
    if ctx.diagonal:
        const = ns * np.log2(ctx.p)
        for start, (rate_sum,), lv, mask in space.scan([ctx.rate_table]):
            ee = (const + rate_sum) / (ctx.pm.P_fixed + ctx.pm.adc_unit * lv)
            idx = np.arange(start, start + lv.size)
            best.offer(ee[mask], lv[mask], idx[mask])
            n_feasible += int(mask.sum())
    else:
        for start, B, mask in space.blocks(block=1 << 12):
            ee = ctx.exact_ee(B[mask])
            best.offer(ee, np.sum(2 ** B[mask], axis=1), np.arange(start, start + len(B))[mask])
            n_feasible += int(mask.sum())
    counter.add(real_mults=3 * ns * ns,
                complex_mults=n_feasible * (ns * ns + 2 * ns),
                complex_adds=n_feasible * (ns * (ns - 1) + ns),
                objective_evals=n_feasible)
    return _finish(ctx, space.decode(best.index), "es", best.value, counter, n_feasible=n_feasible)


def ptot_values(level_sums, pm):
    """``-log2 p(b)`` from ``sum 2^b``, written as in the Q-search derivation."""
    k = pm.adc_unit
    return -np.log2(k) - np.log2(pm.P_fixed / k + level_sums)


def _fixed_point(x, frac_bits=16):
    return np.floor(x * 2.0**frac_bits) / 2.0**frac_bits


def solve_qsearch(space, qtable, ptot_table=None, *, ctx=None, fixed_point=False, counter=None):
    """Maximize ``log2(sum_i Q[b_i, i]) - log2 p(b)`` over the feasible set.

    Parameters
    ----------
    space : SolutionSpace
    qtable : QTable
    ptot_table : array, optional
        ``-log2 p(b)`` for every feasible vector in enumeration order.
        Computed on the fly from ``space.pm`` when omitted.
    ctx : AllocationContext, optional
        Used only to attach an exact :class:`RateEnergyReport`.
    fixed_point : bool
        Round both log terms to 16 fractional bits, as a lookup-table
        implementation would.
    """
    counter = OpCounter() if counter is None else counter
    ns, nb = space.n_streams, space.max_bits
    if qtable.Q.shape[0] < nb or qtable.n_streams != ns:
        raise DomainError("Q-table does not cover the solution space")
    Q = qtable.Q[:nb]
    best = _Best()
    n_feasible = 0
    offset = 0
    for start, (msum,), lv, mask in space.scan([Q]):
        msum, lvm = msum[mask], lv[mask]
        with np.errstate(divide="ignore"):
            logm = np.log2(msum)
        if ptot_table is None:
            pt = ptot_values(lvm, space.pm)
        else:
            pt = np.asarray(ptot_table)[offset: offset + msum.size]
        if fixed_point:
            logm, pt = _fixed_point(logm), _fixed_point(pt)
        best.offer(logm + pt, lvm, np.arange(start, start + lv.size)[mask])
        offset += msum.size
        n_feasible += msum.size
    counter.add(real_mults=3 * ns * ns + 3 * ns * nb,
                real_adds=3 * ns * ns + ns * nb + n_feasible * (ns - 1),
                objective_evals=n_feasible)
    return _finish(ctx, space.decode(best.index), "qsearch", best.value, counter, n_feasible=n_feasible)


def solve_min_crlb(space, ctx, counter=None):
    """Minimize ``trace(CRLB)`` (diagonal form) over the feasible set."""
    counter = OpCounter() if counter is None else counter
    best = _Best()
    for start, (tr,), lv, mask in space.scan([ctx.crlb_table]):
        best.offer(-tr[mask], lv[mask], np.arange(start, start + lv.size)[mask])
    counter.add(objective_evals=space.cardinality())
    return _finish(ctx, space.decode(best.index), "min_crlb", -best.value, counter)


def fixed_allocation(space, ctx, bits):
    """Every stream gets ``bits`` bits."""
    b = np.full(space.n_streams, bits, dtype=np.int64)
    if not space.contains(b):
        raise InfeasibleBudgetError(f"uniform {bits}-bit allocation violates the ADC budget",
                                    budget=space.pm.P_ADC)
    counter = OpCounter(objective_evals=1)
    return _finish(ctx, b, f"fixed{bits}", float(ctx.exact_ee(b)[0]), counter)


@dataclass(frozen=True)
class SaConfig:
    """Annealing schedule.

    ``T0`` is the start temperature (``None``: set so a typical worsening move
    is accepted with probability ``initial_acceptance``); the loop runs while
    ``t > 1`` with ``t <- r t`` and ``m`` proposals per temperature
    (``None``: ``4 N_s``).  ``cost_scale`` multiplies the objective before it
    enters the acceptance rule (``None``: ``kappa / mean|delta|`` over sampled
    neighbour moves).  ``objective`` is ``"surrogate"`` or ``"exact"``.
    """

    T0: float | None = None
    r: float = 0.9
    m: int | None = None
    seed: int = 0
    cost_scale: float | None = None
    objective: str = "surrogate"
    kappa: float = 5.0
    initial_acceptance: float = 0.4
    calibration_moves: int = 64

    def __post_init__(self):
        if self.T0 is not None and not self.T0 > 1:
            raise DomainError("T0 must exceed 1")
        if not 0 < self.r < 1:
            raise DomainError("r must lie in (0, 1)")
        if self.m is not None:
            check_count(self.m, "m")
        if self.cost_scale is not None:
            check_positive(self.cost_scale, "cost_scale")
        if self.objective not in ("surrogate", "exact"):
            raise DomainError("objective must be 'surrogate' or 'exact'")
        if not 0 < self.initial_acceptance < 0.5:
            raise DomainError("initial_acceptance must lie in (0, 0.5)")
        check_positive(self.kappa, "kappa")

    @classmethod
    def from_degree(cls, r, n_streams, degree, **kw):
        """Start temperature ``r^(-N_s^(degree - 1))``: about ``N_s^(degree - 1)`` cooling steps."""
        return cls(T0=float(r ** (-(n_streams ** (degree - 1)))), r=r, **kw)

    def start_temperature(self):
        if self.T0 is not None:
            return self.T0
        return self.kappa / math.log(1.0 / self.initial_acceptance - 1.0)

    def temperature_steps(self):
        return math.ceil(math.log(1.0 / self.start_temperature()) / math.log(self.r))


def neighbor(b, space, rng, max_tries=None):
    """Move one uniformly chosen stream up or down one bit, keeping feasibility.

    Infeasible proposals are redrawn up to ``4 N_s`` times; if none is
    feasible ``b`` comes back unchanged.
    """
    b = np.asarray(b, dtype=np.int64)
    ns = space.n_streams
    tries = 4 * ns if max_tries is None else max_tries
    for _ in range(tries):
        i = rng.integers(ns)
        step = 1 if rng.random() < 0.5 else -1
        cand = b.copy()
        cand[i] += step
        if space.contains(cand):
            return cand
    return b.copy()


def solve_sa(space, qtable, ptot_lookup=None, cfg=None, *, ctx=None, counter=None):
    """Simulated annealing on the surrogate (or exact) energy efficiency.

    Worse moves are accepted with probability ``1 / (1 + exp(-delta / t))``
    where ``delta`` is the scaled cost change, so acceptance of a worsening
    move never exceeds 1/2.  The incumbent is updated only on accepted moves.
    """
    cfg = SaConfig() if cfg is None else cfg
    counter = OpCounter() if counter is None else counter
    ns, nb = space.n_streams, space.max_bits
    Q = qtable.Q[:nb]
    cols = np.arange(ns)
    pm = space.pm

    if cfg.objective == "exact":
        if ctx is None:
            raise DomainError("exact objective needs an AllocationContext")

        def objective(b):
            return float(ctx.exact_ee(b)[0])
    elif ptot_lookup is None:
        def objective(b):
            return float(Q[b - 1, cols].sum() / pm.total_power(b))
    else:
        def objective(b):
            return float(Q[b - 1, cols].sum() * 2.0 ** ptot_lookup(b))

    run_ss, cal_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(run_ss)
    m = 4 * ns if cfg.m is None else cfg.m
    T0 = cfg.start_temperature()

    scale = cfg.cost_scale
    if scale is None:
        cal = np.random.default_rng(cal_ss)
        deltas = []
        for _ in range(cfg.calibration_moves):
            b0 = space.random_member(cal)
            deltas.append(abs(objective(neighbor(b0, space, cal)) - objective(b0)))
        mean = float(np.mean(deltas))
        scale = cfg.kappa / mean if mean > 0 else 1.0

    evals = 0
    b = space.random_member(rng)
    c = scale * objective(b)
    evals += 1
    b_opt, c_opt = b.copy(), c
    t = T0
    trace = []
    step = 0
    while t > 1:
        accepted = 0
        for _ in range(m):
            b_new = neighbor(b, space, rng)
            c_new = scale * objective(b_new)
            evals += 1
            delta = c_new - c
            if rng.random() <= expit(delta / t):
                b, c = b_new, c_new
                accepted += 1
                if c_new > c_opt:
                    b_opt, c_opt = b_new.copy(), c_new
        trace.append({"step": step, "temperature": t, "cost": c / scale,
                      "best": c_opt / scale, "accepted": accepted})
        t *= cfg.r
        step += 1
    counter.add(real_mults=3 * ns * ns + 3 * ns * nb, real_adds=3 * ns * ns + evals * (2 * ns + 5),
                objective_evals=evals)
    return _finish(ctx, b_opt, "sa", c_opt / scale, counter, trace, T0=T0, cost_scale=scale,
                   temperature_steps=step, proposals_per_step=m)


def predicted_counts(solver, n_streams, max_bits, feasible=None, sa_cfg=None, evals=None):
    """Closed-form operation counts for ``solver`` (``es``, ``qsearch`` or ``sa``)."""
    ns, nb = n_streams, max_bits
    if solver == "es":
        return {"complex_mults": feasible * (ns * ns + 2 * ns),
                "complex_adds": feasible * (ns * (ns - 1) + ns),
                "real_mults": 3 * ns * ns}
    if solver == "qsearch":
        return {"real_mults": 3 * ns * ns + 3 * ns * nb,
                "real_adds": 3 * ns * ns + ns * nb + feasible * (ns - 1)}
    if solver == "sa":
        cfg = sa_cfg or SaConfig()
        if evals is None:
            m = 4 * ns if cfg.m is None else cfg.m
            evals = 1 + m * cfg.temperature_steps()
        return {"real_mults": 3 * ns * ns + 3 * ns * nb, "real_adds": 3 * ns * ns + evals * (2 * ns + 5),
                "temperature_steps": cfg.temperature_steps()}
    raise DomainError(f"unknown solver {solver!r}")


def count_report(result, space=None, sa_cfg=None, label=None):
    """Measured counts next to the closed forms and any published figures.

    ``label`` selects the published row (``"sa9"``/``"sa5"`` for the two
    cooling factors); it defaults to the solver name.
    """
    ns = len(result.b_star)
    nb = space.max_bits if space is not None else None
    row = {"solver": label or result.solver, "N_s": ns, "N_b": nb, **result.counters.as_dict()}
    if space is not None and result.solver in ("es", "qsearch", "sa"):
        pred = predicted_counts(result.solver, ns, nb, feasible=space.cardinality(), sa_cfg=sa_cfg,
                                evals=result.counters.objective_evals)
        row.update({f"predicted_{k}": v for k, v in pred.items()})
        row["feasible"] = space.cardinality()
    published = PUBLISHED_COUNTS.get((label or result.solver, ns))
    if published:
        row.update({f"published_{k}": v for k, v in published.items()})
    return row


def rate_surrogate_gap(ctx, b):
    """``|sum log2(1+q) - sum Q(q)/ln 2|`` for one vector; how loose the surrogate is."""
    b = check_bit_vector(b, ctx.max_bits, n_streams=ctx.n_streams)
    q = ctx.qtable.q[b - 1, np.arange(ctx.n_streams)]
    Q = ctx.qtable.Q[b - 1, np.arange(ctx.n_streams)]
    return float(abs(np.sum(np.log2(1 + q)) - np.sum(Q) / LN2))
