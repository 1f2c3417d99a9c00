"""Property-based checks of the invariants that hold for every input."""

import itertools

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from eeba.allocation import (AllocationContext, SaConfig, build_solution_space, neighbor, solve_exhaustive,
                             solve_qsearch, solve_sa)
from eeba.channel import ArrayConfig, ChannelRealization, ScattererScenario, generate_channel
from eeba.metrics import (PowerModel, information_rate, lemma1_approx, lemma1_remainder_bound, surrogate_objective,
                          surrogate_terms)
from eeba.quantization import DEFAULT_TABLE, quantize_uniform
from eeba.transceiver import LinkModel, ideal_combiner

ARRAY = ArrayConfig(num_tx_antennas=8, num_rx_antennas=16)

seeds = st.integers(0, 2**31 - 1)
snrs = st.floats(-15, 30)


def make_context(seed, ns, snr, budget=None, max_bits=4):
    chan = generate_channel(ARRAY, ScattererScenario(), seed=seed, n_streams=ns)
    pm = PowerModel() if budget is None else PowerModel(P_ADC=float(budget), budget_form="eq24", c=1.0, f_s=1.0)
    return AllocationContext(chan, ideal_combiner(chan), pm, p=1.0, sigma_n2=10 ** (-snr / 10), max_bits=max_bits)


@given(seeds, st.integers(1, 3), snrs, st.one_of(st.none(), st.integers(6, 40)))
def test_es_dominates_and_solutions_feasible(seed, ns, snr, budget):
    budget = None if budget is None else max(budget, 2 * ns)
    ctx = make_context(seed, ns, snr, budget)
    sp = ctx.space()
    es = solve_exhaustive(sp, ctx)
    qs = solve_qsearch(sp, ctx.qtable, ctx=ctx)
    sa = solve_sa(sp, ctx.qtable, cfg=SaConfig(seed=seed % 1000, r=0.5), ctx=ctx)
    for res in (es, qs, sa):
        assert sp.contains(res.b_star)
        assert es.report.ee >= res.report.ee * (1 - 1e-12)
    all_ee = ctx.exact_ee(sp.members())
    assert np.isclose(es.report.ee, all_ee.max(), rtol=1e-12)
    assert ctx.exact_ee(es.b_star)[0] >= all_ee.max() * (1 - 1e-13)


@given(seeds, st.integers(1, 3), snrs, st.one_of(st.none(), st.integers(6, 40)))
def test_qsearch_is_surrogate_argmax(seed, ns, snr, budget):
    budget = None if budget is None else max(budget, 2 * ns)
    ctx = make_context(seed, ns, snr, budget)
    sp = ctx.space()
    members = sp.members()
    cols = np.arange(ns)
    vals = np.array([surrogate_objective(b, ctx.qtable.q[b - 1, cols], sp.pm) for b in members])
    best = vals.max()
    res = solve_qsearch(sp, ctx.qtable, ctx=ctx)
    got = surrogate_objective(res.b_star, ctx.qtable.q[res.b_star - 1, cols], sp.pm)
    assert got >= best * (1 - 1e-14)


@given(seeds, st.integers(1, 4), st.floats(1e-3, 1e2), st.lists(st.integers(1, 8), min_size=4, max_size=4))
def test_crlb_forms_and_rate_identity(seed, ns, sigma_n2, bits):
    chan = generate_channel(ARRAY, ScattererScenario(), seed=seed, n_streams=ns)
    link = LinkModel(chan, ideal_combiner(chan))
    b = np.array(bits[:ns])
    diag = link.crlb(b, sigma_n2).entries
    lit = link.crlb_matrix(b, sigma_n2, "literal")
    assert np.max(np.abs(lit - np.diag(diag))) <= 1e-9 * diag.max()
    q = 1.0 / diag
    assert np.isclose(information_rate(diag, 1.0), np.sum(np.log2(1 + q)), rtol=1e-12)


@given(st.floats(0, 0.5))
def test_lemma1_remainder(q):
    exact = np.log1p(q) / np.log(2)
    assert abs(lemma1_approx(q) - exact) <= lemma1_remainder_bound(q) + 4 * np.spacing(exact)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=12))
def test_surrogate_terms_bounded(qs):
    t = surrogate_terms(qs)
    assert np.all(t >= 0) and np.all(t < 1)
    q = np.asarray(qs)
    assert np.all(t <= q + 1e-15)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_neighbor_moves_one_step(ns, nb, seed):
    rng = np.random.default_rng(seed)
    sp = build_solution_space(ns, nb)
    b = sp.random_member(rng)
    nbr = neighbor(b, sp, rng)
    assert sp.contains(nbr)
    # unchanged only when every redraw was infeasible
    assert np.abs(nbr - b).sum() in (0, 1)


@given(st.integers(1, 4), st.integers(2, 4), st.integers(4, 60))
def test_cardinality_matches_brute_force(ns, nb, cap):
    cap = max(cap, 2 * ns)
    pm = PowerModel(N_s=ns, P_ADC=float(cap), budget_form="eq24", c=1.0, f_s=1.0)
    sp = build_solution_space(ns, nb, pm)
    brute = sum(1 for b in itertools.product(range(1, nb + 1), repeat=ns) if sum(2**x for x in b) <= cap)
    assert sp.cardinality() == brute


@given(st.integers(1, 8), st.integers(0, 10_000), st.floats(0.1, 10))
def test_quantizer_output_on_grid(b, seed, scale):
    rng = np.random.default_rng(seed)
    z = scale * (rng.standard_normal((200, 1)) + 1j * rng.standard_normal((200, 1)))
    rms = scale * np.sqrt(2)
    y = quantize_uniform(z, [b], loading=2.0, rms=rms)
    fs = 2.0 * rms / np.sqrt(2)
    step = 2 * fs / 2**b
    for rail in (y.real, y.imag):
        assert np.all(np.abs(rail) <= fs)
        r = rail / step - 0.5
        assert np.allclose(r, np.round(r), atol=1e-9)
    assert len(np.unique(np.round(y.real / step, 6))) <= 2**b


@given(st.lists(st.integers(1, 32), min_size=2, max_size=6))
def test_gain_strictly_decreasing(bits):
    b = np.unique(bits)
    assert np.all(np.diff(DEFAULT_TABLE.g(b)) < 0)


@given(seeds, st.integers(1, 3))
def test_channel_json_round_trip(seed, ns):
    chan = generate_channel(ARRAY, ScattererScenario(), seed=seed, n_streams=ns)
    back = ChannelRealization.from_json(chan.to_json())
    assert np.array_equal(back.H, chan.H)
    assert np.allclose(back.singular_values, chan.singular_values)
