"""The elimination engine: exact, capped, bounded, max-marginal, moments."""

import json
import math

import numpy as np
import pytest

from helpers import (
    all_states,
    brute_log_c,
    eval_pbf,
    log_sum_exp,
    random_test_model,
)
from pbmrf import (
    EliminationConfig,
    LatticeSpec,
    PseudoBooleanFunction,
    ResourceCapError,
    build_independence,
    build_ising,
    eliminate,
    eliminate_approx,
    eliminate_bound,
    eliminate_exact_sum,
    eliminate_max,
    moment,
)
from pbmrf.pomm import log_density_many


def test_single_variable_analytic():
    f = PseudoBooleanFunction(1, {(0,): 0.5})
    res = eliminate_exact_sum(f)
    assert abs(res.log_value - math.log(1 + math.exp(0.5))) < 1e-12


def test_zero_interaction_energy_any_mode():
    f = PseudoBooleanFunction(4, {(): 1.25})
    for mode in ("exact", "approximate", "lower_bound", "upper_bound"):
        cfg = EliminationConfig(mode=mode, nu=None if mode == "exact" else 1)
        res = eliminate(f, cfg)
        assert abs(res.log_value - (4 * math.log(2) + 1.25)) < 1e-12


def test_exact_4x4_ising_vs_brute_force():
    m = build_ising(LatticeSpec(4, 4), 0.8)
    assert abs(eliminate_exact_sum(m).log_value - brute_log_c(m, 4, 4)) < 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_exact_elimination_is_order_invariant(seed):
    rng = np.random.default_rng(800 + seed)
    model, rows, cols = random_test_model(rng, max_rows=3, max_cols=4)
    reference = eliminate_exact_sum(model).log_value
    order = rng.permutation(model.n)
    res = eliminate(model, EliminationConfig(order=tuple(order)))
    assert abs(res.log_value - reference) < 1e-9


def test_order_must_be_permutation():
    m = build_ising(LatticeSpec(2, 2), 0.4)
    with pytest.raises(ValueError):
        eliminate(m, EliminationConfig(order=(0, 1, 2, 2)))


def test_cap_error_names_step_and_eta():
    # a 27-star: variable 0 shares a pair with 26 others, tiny dense family
    star = PseudoBooleanFunction(27, {(0, k): 0.1 for k in range(1, 27)})
    with pytest.raises(ResourceCapError) as info:
        eliminate_exact_sum(star)
    message = str(info.value)
    assert "step 0" in message and "26" in message


def test_config_validation():
    with pytest.raises(ValueError):
        EliminationConfig(mode="approximate")  # nu missing
    with pytest.raises(ValueError):
        EliminationConfig(mode="magic")
    with pytest.raises(ValueError):
        EliminationConfig(marginal="product")
    with pytest.raises(ValueError):
        EliminationConfig(pomm_variant="sometimes")
    with pytest.raises(ValueError):
        EliminationConfig(marginal="max", pomm_variant="pre_approximation")
    with pytest.raises(ValueError):
        eliminate_approx(
            build_ising(LatticeSpec(2, 2), 0.1), EliminationConfig(mode="exact")
        )


# -- approximate mode ---------------------------------------------------------


def test_saturated_nu_reproduces_exact():
    rng = np.random.default_rng(13)
    for _ in range(4):
        model, rows, cols = random_test_model(rng, max_rows=3, max_cols=4)
        exact = eliminate_exact_sum(model).log_value
        for mode in ("approximate", "lower_bound", "upper_bound"):
            res = eliminate(model, EliminationConfig(mode=mode, nu=model.n))
            assert abs(res.log_value - exact) < 1e-10, mode


def test_weak_interactions_approximate_better():
    lat = LatticeSpec(4, 4)
    errors = {}
    for theta in (0.4, 0.8):
        m = build_ising(lat, theta)
        exact = brute_log_c(m, 4, 4)
        approx = eliminate_approx(m, EliminationConfig(mode="approximate", nu=2))
        errors[theta] = abs(approx.log_value - exact)
    assert errors[0.4] <= errors[0.8]


def test_eta_respects_nu_in_capped_modes():
    m = build_ising(LatticeSpec(4, 4), 0.6)
    for mode in ("approximate", "lower_bound", "upper_bound"):
        res = eliminate(m, EliminationConfig(mode=mode, nu=2))
        assert all(step.eta_after <= 2 for step in res.per_step)
        assert any(step.partners for step in res.per_step)


# -- bound mode ----------------------------------------------------------------


@pytest.mark.parametrize("nu", [1, 2, 3])
def test_bound_sandwich_on_4x4_ising(nu):
    m = build_ising(LatticeSpec(4, 4), 0.8)
    exact = brute_log_c(m, 4, 4)
    lower = eliminate_bound(m, EliminationConfig(mode="lower_bound", nu=nu)).log_value
    upper = eliminate_bound(m, EliminationConfig(mode="upper_bound", nu=nu)).log_value
    assert lower <= exact + 1e-12
    assert exact <= upper + 1e-12


def test_bound_gap_trend_is_logged_not_asserted(caplog):
    # gap(nu=4) <= gap(nu=2) is the expected trend; log a warning otherwise
    m = build_ising(LatticeSpec(4, 4), 0.8)
    gaps = {}
    for nu in (2, 4):
        lo = eliminate_bound(m, EliminationConfig(mode="lower_bound", nu=nu)).log_value
        hi = eliminate_bound(m, EliminationConfig(mode="upper_bound", nu=nu)).log_value
        gaps[nu] = hi - lo
    if gaps[4] > gaps[2]:
        import logging

        logging.getLogger(__name__).warning(
            "bound gap grew when nu rose: %s", gaps
        )
    assert gaps[2] >= 0 and gaps[4] >= 0


def test_forced_splitting_with_table_cap_one():
    # higher-order cliques give pair removals with several extra variables,
    # so table_cap=1 forces the recursive split path
    rng = np.random.default_rng(5)
    from pbmrf import build_higher_order

    m = build_higher_order(LatticeSpec(3, 4), rng.uniform(-0.8, 0.8, size=10))
    exact = brute_log_c(m, 3, 4)
    for mode in ("lower_bound", "upper_bound"):
        res = eliminate(m, EliminationConfig(mode=mode, nu=2, table_cap=1))
        if mode == "lower_bound":
            assert res.log_value <= exact + 1e-12
        else:
            assert exact <= res.log_value + 1e-12
    assert any(
        step.splits > 0
        for step in eliminate(
            m, EliminationConfig(mode="upper_bound", nu=2, table_cap=1)
        ).per_step
    )


# -- max marginal ---------------------------------------------------------------


def test_max_mode_independence_argmax():
    m = build_independence(LatticeSpec(2, 3), 0.7)
    res = eliminate_max(m, EliminationConfig(marginal="max"))
    assert abs(res.log_value - 6 * 0.7) < 1e-12
    assert (res.argmax == 1).all()


def test_max_mode_exact_vs_exhaustive():
    m = build_ising(LatticeSpec(4, 4), 0.6)
    X = all_states(16)
    u = eval_pbf(m.energy, X)
    res = eliminate_max(m, EliminationConfig(marginal="max"))
    assert abs(res.log_value - u.max()) < 1e-9
    assert abs(eval_pbf(m.energy, res.argmax.reshape(1, -1))[0] - res.log_value) < 1e-9


def test_max_mode_saturated_matches_exact():
    m = build_ising(LatticeSpec(3, 3), -0.5)
    exact = eliminate_max(m, EliminationConfig(marginal="max"))
    approx = eliminate_max(
        m, EliminationConfig(mode="approximate", marginal="max", nu=9)
    )
    assert abs(exact.log_value - approx.log_value) < 1e-10
    assert (exact.argmax == approx.argmax).all()


def test_max_mode_bounds_bracket_maximum():
    rng = np.random.default_rng(31)
    model, rows, cols = random_test_model(rng, max_rows=3, max_cols=4)
    from helpers import model_energy_direct

    u = model_energy_direct(
        model.label, model.params, rows, cols, all_states(model.n)
    )
    lo = eliminate_max(
        model, EliminationConfig(mode="lower_bound", marginal="max", nu=2)
    ).log_value
    hi = eliminate_max(
        model, EliminationConfig(mode="upper_bound", marginal="max", nu=2)
    ).log_value
    assert lo <= u.max() + 1e-12 <= hi + 2e-12


# -- moments --------------------------------------------------------------------


def test_moment_of_constant_function_is_one():
    m = build_ising(LatticeSpec(2, 2), 0.4)
    log_psi = PseudoBooleanFunction(4, {})
    assert abs(moment(m, log_psi, EliminationConfig()) - 1.0) < 1e-12


def test_moment_exponential_site_vs_brute_force():
    m = build_ising(LatticeSpec(2, 2), 0.4)
    log_psi = PseudoBooleanFunction(4, {(0,): 1.0})  # psi = e^{x_0}
    X = all_states(4)
    u = eval_pbf(m.energy, X)
    p = np.exp(u - log_sum_exp(u))
    want = float((np.exp(X[:, 0].astype(float)) * p).sum())
    got = moment(m, log_psi, EliminationConfig())
    assert abs(got - want) < 1e-10
    approx = moment(m, log_psi, EliminationConfig(mode="approximate", nu=4))
    assert abs(approx - want) < 1e-10  # nu saturates, so still exact
    lo, hi = moment(m, log_psi, EliminationConfig(mode="lower_bound", nu=1))
    assert lo - 1e-12 <= want <= hi + 1e-12


# -- POMM extraction --------------------------------------------------------------


def test_pomm_normalises_and_matches_exact_distribution():
    m = build_ising(LatticeSpec(3, 3), 0.4)
    res = eliminate(
        m, EliminationConfig(mode="exact", pomm_variant="post_approximation")
    )
    X = all_states(9)
    u = eval_pbf(m.energy, X)
    p = np.exp(u - log_sum_exp(u))
    q = np.exp(log_density_many(res.pomm, X))
    assert abs(q.sum() - 1.0) < 1e-10
    assert 0.5 * np.abs(p - q).sum() < 1e-10


@pytest.mark.parametrize("variant", ["pre_approximation", "post_approximation"])
def test_pomm_normalises_under_approximation(variant):
    m = build_ising(LatticeSpec(3, 4), 0.6)
    res = eliminate(m, EliminationConfig(mode="approximate", nu=2, pomm_variant=variant))
    X = all_states(12)
    q = np.exp(log_density_many(res.pomm, X))
    assert abs(q.sum() - 1.0) < 1e-10
    if variant == "post_approximation":
        assert res.pomm.max_dependencies() <= 2


def test_pomm_pre_variant_can_exceed_nu():
    m = build_ising(LatticeSpec(3, 4), 0.6)
    res = eliminate(
        m,
        EliminationConfig(mode="approximate", nu=1, pomm_variant="pre_approximation"),
    )
    assert res.pomm.max_dependencies() > 1


def test_pomm_normalises_under_custom_order():
    m = build_ising(LatticeSpec(3, 3), 0.5)
    rng = np.random.default_rng(0)
    cfg = EliminationConfig(
        mode="approximate",
        nu=2,
        pomm_variant="post_approximation",
        order=tuple(rng.permutation(9)),
    )
    pomm = eliminate(m, cfg).pomm
    X = all_states(9)
    assert abs(np.exp(log_density_many(pomm, X)).sum() - 1.0) < 1e-10


# -- diagnostics and serialization ---------------------------------------------


def test_result_serialization_layout():
    m = build_ising(LatticeSpec(2, 2), 0.4)
    res = eliminate_approx(m, EliminationConfig(mode="approximate", nu=2))
    doc = json.loads(res.to_json())
    assert doc["mode"] == "approximate"
    assert doc["nu"] == 2
    assert len(doc["eta_trace"]) == 4
    assert abs(doc["log_value"] - res.log_value) < 1e-15


def test_partner_diagnostics_recorded():
    m = build_ising(LatticeSpec(4, 4), 0.6)
    res = eliminate_approx(m, EliminationConfig(mode="approximate", nu=2))
    removed = [p for step in res.per_step for p in step.partners]
    assert removed, "nu=2 on a 4x4 lattice must force removals"
    assert all(step.eta_before >= step.eta_after for step in res.per_step)


def test_partner_fallback_when_scores_vanish():
    # all pair coefficients zero and no triples: every candidate scores 0,
    # so the smallest index is removed and the fallback is counted
    f = PseudoBooleanFunction(
        4, {(0, 1): 0.0, (0, 2): 0.0, (0, 3): 0.0, (1,): 0.3}, prune=False
    )
    res = eliminate(f, EliminationConfig(mode="approximate", nu=1))
    first = res.per_step[0]
    assert first.variable == 0
    assert first.fallback_partners >= 1
    assert first.partners[0] == 1
    # removing zero coefficients is exact
    assert abs(
        res.log_value
        - (3 * math.log(2) + math.log(1 + math.exp(0.3)))
    ) < 1e-12
