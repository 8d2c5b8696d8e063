import numpy as np
import pytest

from dmfvi import badmm, bpca, network

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo, hi, iters=120, xtol=1e-13):
    """Plain golden-section search for the minimizer of a unimodal ``f`` on [lo, hi].

    Stops once the bracket is narrower than ``xtol`` (relative beyond magnitude 1).
    """
    a, b = float(lo), float(hi)
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        if b - a < xtol * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def golden_log(f, lo, hi, iters=160, xtol=1e-13):
    """Golden-section search over a positive interval, carried out in log space."""
    return float(np.exp(golden_section(lambda u: f(np.exp(u)), np.log(lo), np.log(hi), iters, xtol)))


def lowrank_data(rng, D, N, M, noise=0.1, offset=1.0):
    W = rng.normal(size=(D, M))
    Z = rng.normal(size=(N, M))
    mu = offset * rng.normal(size=D)
    return W @ Z.T + mu[:, None] + noise * rng.normal(size=(D, N))


def mid_run_state(seed, D=4, M=2, N=12, nodes=2, rounds=3, eta=10.0, topology="chain"):
    """A small distributed problem advanced a few rounds, so duals and auxiliaries are nontrivial."""
    rng = np.random.default_rng(seed)
    X = lowrank_data(rng, D, N, M, noise=0.3)
    cfg = bpca.BpcaModelConfig(D, M)
    graph = network.build_topology(topology, nodes)
    part = network.partition_equal(N, graph)
    nds = badmm.build_nodes(X, None, graph, part, cfg, np.random.default_rng(seed))
    aux = badmm.init_aux(nds, graph)
    duals = badmm.DualState.zeros(len(aux.edges), D, M)
    weight = 1.0 / nodes
    for _ in range(rounds):
        for nd in nds:
            badmm.local_update_phase(nd, aux, duals, eta, weight)
        aux = badmm.aux_update_phase(nds, aux, duals, eta)
        duals = badmm.dual_update_phase(nds, aux, duals, eta)
    # random dual perturbation so the linear terms are exercised in both signs
    for f in badmm._DUAL_FIELDS:
        arr = getattr(duals, f)
        setattr(duals, f, arr + rng.normal(scale=0.5, size=arr.shape))
    return nds, aux, duals, weight


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``report(number, ok, detail)`` records one acceptance line and fails the test if not ``ok``."""
    def report(number, ok, detail):
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
