import math

import numpy as np
import pytest

from jumbo.acquisition import exploration_weight, ucb
from jumbo.benchmarks import TabularBenchmark, make_fig3_pair, make_hpo_table
from jumbo.errors import BudgetExhausted, InvalidArgument
from jumbo.gp import KernelSpec, gp_condition
from jumbo.loop import (RunOptions, Strategy, compare, no_repeat_filter, read_trace_csv, run,
                        trace_f_star)
from jumbo.nn import MLPConfig, embed, pretrain
from jumbo.space import SearchSpace

FAST = RunOptions(restarts=2, generations=10)


@pytest.fixture(scope="module")
def grid():
    return make_fig3_pair().grid_table(101)


@pytest.fixture(scope="module")
def grid_model(grid):
    return pretrain(grid.offline_dataset(None, seed=0),
                    MLPConfig(learning_rate=3e-3, epochs=200, batch_size=32))


def xs(trace):
    return trace.X.tobytes(), trace.y_values.tobytes(), trace.simple_regret.tobytes()


def test_strategy_parse_and_labels():
    assert Strategy.parse("jumbo") == Strategy.Jumbo(0.1)
    assert Strategy.parse("jumbo:0.05").l_alpha == 0.05
    assert Strategy.parse("jumbo:inf").l_alpha == math.inf
    assert Strategy.parse("jumbo-const:0.3") == Strategy.JumboConstLambda(0.3)
    assert Strategy.Jumbo(0.1).label == "jumbo-0.1"
    assert Strategy.GpUcb().label == "gp-ucb" and not Strategy.GpUcb().needs_model
    for bad in ("bogus", "jumbo:x", "jumbo:-1", "jumbo-const:2"):
        with pytest.raises(InvalidArgument):
            Strategy.parse(bad)


def test_model_required(grid):
    with pytest.raises(InvalidArgument, match="requires a pretrained model"):
        run(Strategy.Jumbo(), grid, None, T=2)
    with pytest.raises(InvalidArgument):
        run(Strategy.GpUcb(), grid, None, T=0)


def test_no_repeat_filter():
    np.testing.assert_array_equal(no_repeat_filter(10, set()), np.arange(10))
    np.testing.assert_array_equal(no_repeat_filter(10, {2, 5, 7}), [0, 1, 3, 4, 6, 8, 9])
    with pytest.raises(BudgetExhausted):
        no_repeat_filter(3, {0, 1, 2})


@pytest.mark.parametrize("seed", range(3))
def test_infinite_threshold_is_gp_ucb_discrete(grid, grid_model, seed):
    a = run(Strategy.Jumbo(math.inf), grid, grid_model, T=8, seed=seed)
    b = run(Strategy.GpUcb(), grid, None, T=8, seed=seed)
    assert xs(a) == xs(b)


@pytest.mark.parametrize("seed", range(2))
def test_infinite_threshold_is_gp_ucb_continuous(fig3_model, seed):
    pair = make_fig3_pair(noise_std=0.05)
    a = run(Strategy.Jumbo(math.inf), pair, fig3_model, T=6, seed=seed, options=FAST)
    b = run(Strategy.GpUcb(), pair, None, T=6, seed=seed, options=FAST)
    assert xs(a) == xs(b)


@pytest.mark.parametrize("seed", range(3))
def test_zero_threshold_is_offline_dkl(grid, grid_model, seed):
    a = run(Strategy.Jumbo(0.0), grid, grid_model, T=8, seed=seed)
    b = run(Strategy.OfflineDkl(), grid, grid_model, T=8, seed=seed)
    assert xs(a) == xs(b)


def test_first_query_is_round_one_argmax(grid, grid_model):
    beta = exploration_weight(1, 1)
    C = grid.candidates
    prior_c = gp_condition(KernelSpec("Matern52", 0.5, 1.0), 0.1, [], [], dim=1)
    prior_w = gp_condition(KernelSpec("Matern52", 0.5, 1.0), 0.1, [], [], dim=grid_model.latent_dim)
    a_c = ucb(prior_c, C, beta)
    a_w = ucb(prior_w, embed(grid_model, C), beta)
    t = run(Strategy.GpUcb(), grid, None, T=1)
    assert t.X[0].tobytes() == C[int(np.argmax(a_c))].tobytes()
    t = run(Strategy.OfflineDkl(), grid, grid_model, T=1)
    assert t.X[0].tobytes() == C[int(np.argmax(a_w))].tobytes()
    t = run(Strategy.Jumbo(0.1), grid, grid_model, T=1)
    span = a_w.max() - a_w.min()
    near = (a_w.max() - a_w) <= 0.1 * span if span > 0 else np.ones(len(C), bool)
    score = np.where(near, a_c, -np.inf)
    assert t.X[0].tobytes() == C[int(np.argmax(score))].tobytes()


def five_rows():
    X = np.linspace(0, 1, 5)[:, None]
    return TabularBenchmark(SearchSpace.unit_box(1), X, np.array([0.1, 0.5, 0.2, 0.9, 0.3])[:, None],
                            ["target"], "five")


def test_exhaustion_reaches_zero_regret():
    t = run(Strategy.GpUcb(), five_rows(), T=5)
    assert t.simple_regret[-1] == 0.0 and t.status == "ok"
    assert len({r.x.tobytes() for r in t.records}) == 5


def test_budget_exhausted_ends_cleanly():
    t = run(Strategy.GpUcb(), five_rows(), T=8)
    assert t.status == "budget-exhausted" and len(t.records) == 5


def test_failure_keeps_partial_trace():
    class Flaky(TabularBenchmark):
        def query(self, x, rng=None):
            if self.calls == 2:
                raise ValueError("lookup service down")
            self.calls += 1
            return super().query(x, rng)

    b = Flaky(SearchSpace.unit_box(1), np.linspace(0, 1, 5)[:, None], np.arange(5.0)[:, None],
              ["target"], "flaky")
    b.calls = 0
    t = run(Strategy.GpUcb(), b, T=5)
    assert t.status.startswith("failed: round 3") and len(t.records) == 2


def test_trace_invariants(fig3_model):
    pair = make_fig3_pair(noise_std=0.05)
    t = run(Strategy.Jumbo(0.1), pair, fig3_model, T=6, seed=1, options=FAST)
    assert len(t.records) == 6
    assert set(np.unique(t.lambdas)) <= {0.0, 1.0}
    best = np.array([r.best for r in t.records])
    assert np.all(np.diff(best) >= 0) and np.all(t.simple_regret >= 0)
    np.testing.assert_allclose(t.simple_regret, pair.f_star - best, atol=0)
    assert trace_f_star(t) == pytest.approx(pair.f_star, abs=1e-15)
    c = run(Strategy.JumboConstLambda(0.3), pair, fig3_model, T=4, seed=1, options=FAST)
    np.testing.assert_array_equal(c.lambdas, 0.3)


def test_run_is_deterministic(fig3_model, tmp_path):
    pair = make_fig3_pair(noise_std=0.05)
    a = run(Strategy.Jumbo(0.1), pair, fig3_model, T=5, seed=3, options=FAST)
    b = run(Strategy.Jumbo(0.1), pair, fig3_model, T=5, seed=3, options=FAST)
    assert a.to_csv() == b.to_csv() and a.sidecar() == b.sidecar()
    path = a.save(tmp_path)
    cols = read_trace_csv(path)
    np.testing.assert_array_equal(cols["simple_regret"], a.simple_regret)
    assert list(cols)[:3] == ["t", "x0", "y"]


def test_blr_variant_runs(grid, grid_model):
    t = run(Strategy.JumboBlr(0.1), grid, grid_model, T=5)
    assert t.status == "ok" and len(t.records) == 5


def test_mixed_space_run():
    b = make_hpo_table(80, seed=1)
    m = pretrain(b.offline_dataset(None), MLPConfig(epochs=20, learning_rate=1e-3))
    t = run(Strategy.Jumbo(0.1), b, m, T=4)
    assert t.status == "ok"
    for x in t.X:
        b.row_of(x)


def test_initial_data_seeds_both_models(grid, grid_model):
    X0 = grid.candidates[[10, 50]]
    y0 = grid.f(X0)
    t = run(Strategy.Jumbo(0.1), grid, grid_model, T=3, initial_data=(X0, y0))
    plain = run(Strategy.Jumbo(0.1), grid, grid_model, T=3)
    assert t.status == "ok" and xs(t) != xs(plain)


def test_n_init_random_design(grid):
    t = run(Strategy.GpUcb(), grid, None, T=3, seed=4, options=RunOptions(n_init=2))
    u = run(Strategy.GpUcb(), grid, None, T=3, seed=5, options=RunOptions(n_init=2))
    assert xs(t) != xs(u)


def test_compare_single_strategy_single_seed(grid):
    comp = compare([Strategy.GpUcb()], grid, T=6, seeds=[0])
    med, se = comp.summary()["gp-ucb"]
    np.testing.assert_array_equal(med, run(Strategy.GpUcb(), grid, None, 6, 0).simple_regret)
    np.testing.assert_array_equal(se, 0.0)


def test_compare_equivalent_strategies_give_identical_columns(grid, grid_model):
    comp = compare([Strategy.GpUcb(), Strategy.Jumbo(math.inf)], grid, T=5, seeds=[0, 1, 2], model=grid_model)
    s = comp.summary()
    np.testing.assert_array_equal(s["gp-ucb"][0], s["jumbo-inf"][0])
    np.testing.assert_array_equal(s["gp-ucb"][1], s["jumbo-inf"][1])
    header = comp.to_csv().splitlines()[0].split(",")
    assert header == ["t", "gp-ucb_median", "gp-ucb_stderr", "jumbo-inf_median", "jumbo-inf_stderr"]


def test_compare_threads_match_serial(grid):
    a = compare([Strategy.GpUcb()], grid, T=4, seeds=[0, 1])
    b = compare([Strategy.GpUcb()], grid, T=4, seeds=[0, 1], workers=2)
    assert a.to_csv() == b.to_csv()


def test_compare_needs_input(grid):
    with pytest.raises(InvalidArgument):
        compare([], grid, 3, [0])


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="on the HPO-style tables constant lambda=0.5 beats the "
                   "indicator at T=10; see the decisions ledger")
def test_constant_lambda_ablation_hpo_tables():
    final = {"jumbo-0.1": [], "jumbo-const-0.5": []}
    for k in range(20):
        table = make_hpo_table(seed=k)
        model = pretrain(table.offline_dataset(None, seed=k),
                         MLPConfig(learning_rate=1e-3, epochs=300, batch_size=32, patience=50, seed=k))
        for s in (Strategy.Jumbo(0.1), Strategy.JumboConstLambda(0.5)):
            final[s.label].append(run(s, table, model, T=10, seed=k).simple_regret[-1])
    assert np.median(final["jumbo-const-0.5"]) >= np.median(final["jumbo-0.1"])
