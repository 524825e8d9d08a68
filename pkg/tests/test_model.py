import itertools

import numpy as np
import pytest

from biflux.errors import (
    InfeasibleSupportError,
    ParseError,
    SizeLimitError,
    SpecInvariantError,
)
from biflux.model import (
    ModelSpec,
    builtin_model_path,
    compute_Q,
    load_model_spec,
    max_cyclic_residual,
    parse_model_spec,
    q_table,
    synthesize_model,
    synthesize_rates,
    two_lane_tasep,
    two_species_exclusion,
    two_species_support,
    validate_model,
    write_model_spec,
)

TASEP_TEXT = """
# two independent exclusion lanes
[states]
00 01 10 11
[zeta]
00 0
01 0
10 1
11 1
[eta]
00 0
01 1
10 0
11 1
[pi]
00 0.25
01 0.25
10 0.25
11 0.25
[rates]
10 00 -> 00 10 : 1
10 01 -> 00 11 : 1
11 00 -> 01 10 : 1
11 01 -> 01 11 : 1
01 00 -> 00 01 : 1
01 10 -> 00 11 : 1
11 00 -> 10 01 : 1
11 10 -> 10 11 : 1
"""


def expected_tasep_rates():
    # independent enumeration of the two lane moves over the 4x4 pair table
    rates = {}
    for s1, s2 in itertools.product("00 01 10 11".split(), repeat=2):
        if s1[0] == "1" and s2[0] == "0":
            rates[(s1, s2, "0" + s1[1], "1" + s2[1])] = 1.0
        if s1[1] == "1" and s2[1] == "0":
            rates[(s1, s2, s1[0] + "0", s2[0] + "1")] = 1.0
    return rates


class TestLoading:
    def test_builtin_two_lane_tasep_file(self):
        spec = load_model_spec(builtin_model_path("two_lane_tasep"))
        assert len(spec.states) == 4
        assert len(spec.rates) == 8
        assert spec.rates == expected_tasep_rates()

    def test_parse_matches_constructor(self):
        spec = parse_model_spec(TASEP_TEXT, name="two_lane_tasep")
        built = two_lane_tasep()
        assert spec.states == built.states
        assert spec.rates == built.rates
        assert spec.base_measure == built.base_measure

    def test_zero_mass_state_rejected(self):
        text = TASEP_TEXT.replace("00 0.25", "00 0.0", 1)
        with pytest.raises(SpecInvariantError, match="base_measure"):
            parse_model_spec(text)

    def test_pi_not_normalized_rejected(self):
        text = TASEP_TEXT.replace("11 0.25", "11 0.30", 1)
        with pytest.raises(SpecInvariantError, match="base_measure"):
            parse_model_spec(text)

    def test_dependent_conserved_quantities_rejected(self):
        text = TASEP_TEXT.replace(
            "[eta]\n00 0\n01 1\n10 0\n11 1", "[eta]\n00 0\n01 0\n10 1\n11 1"
        )
        with pytest.raises(SpecInvariantError, match="linearly dependent"):
            parse_model_spec(text)

    def test_self_map_rejected(self):
        text = TASEP_TEXT + "\n10 00 -> 10 00 : 0.5\n"
        with pytest.raises(SpecInvariantError, match="itself"):
            parse_model_spec(text)

    def test_missing_section(self):
        with pytest.raises(ParseError, match="missing sections"):
            parse_model_spec("[states]\na b c\n")

    def test_malformed_rate_line(self):
        with pytest.raises(ParseError, match="rate line"):
            parse_model_spec(TASEP_TEXT + "\nbroken line\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="not found"):
            load_model_spec(tmp_path / "nope.model")

    def test_write_read_round_trip(self, tmp_path, coupled):
        path = tmp_path / "coupled.model"
        write_model_spec(coupled, path)
        back = load_model_spec(path)
        assert back.states == coupled.states
        assert back.rates == coupled.rates
        assert back.zeta == coupled.zeta
        np.testing.assert_allclose(back.pi_values(), coupled.pi_values(), rtol=0, atol=0)


class TestQ:
    def test_cyclic_sums_vanish_exhaustively(self, tasep):
        labels = tasep.states
        for w1, w2, w3 in itertools.product(labels, repeat=3):
            total = (
                compute_Q(tasep, w1, w2)
                + compute_Q(tasep, w2, w3)
                + compute_Q(tasep, w3, w1)
            )
            assert abs(total) <= 1e-14

    def test_zero_rates_give_zero_Q(self, zero_rate_spec):
        assert np.all(q_table(zero_rate_spec) == 0.0)

    def test_reversible_spec_has_zero_Q(self):
        # symmetric pair swaps under the uniform measure are reversible
        states = ("a", "b", "c")
        rates = {}
        for s1, s2 in itertools.product(states, repeat=2):
            if s1 != s2:
                rates[(s1, s2, s2, s1)] = 1.0
        spec = ModelSpec(
            name="swap",
            states=states,
            zeta={"a": 0, "b": 1, "c": 0},
            eta={"a": 0, "b": 0, "c": 1},
            base_measure={s: 1.0 / 3.0 for s in states},
            rates=rates,
        )
        assert np.abs(q_table(spec)).max() <= 1e-15
        assert max_cyclic_residual(spec) <= 1e-15

    def test_coupled_model_q_is_potential_difference(self, coupled):
        q = q_table(coupled)
        # Q(w1, w2) = f(w2) - f(w1) forces antisymmetry
        assert np.abs(q + q.T).max() <= 1e-14
        assert max_cyclic_residual(coupled) <= 1e-14


class TestValidate:
    def test_two_lane_tasep_all_ok(self, tasep):
        report = validate_model(tasep, [4])
        assert report.all_ok
        assert report.max_cyclic_residual <= 1e-10
        assert report.stationarity_residual <= 1e-12
        assert report.tested_torus_sizes == (4,)

    def test_coupled_model_all_ok(self, coupled):
        report = validate_model(coupled, [3, 4, 5])
        assert report.all_ok
        assert report.stationarity_residual <= 1e-12

    def test_planted_conservation_violation_named(self, tasep):
        bad = ModelSpec(
            name="bad_a",
            states=tasep.states,
            zeta=dict(tasep.zeta),
            eta=dict(tasep.eta),
            base_measure=dict(tasep.base_measure),
            rates={**tasep.rates, ("10", "00", "00", "00"): 0.5},
        )
        report = validate_model(bad, [3])
        assert not report.condition_a_ok
        assert any("('10', '00', '00', '00')" in v for v in report.violations)

    def test_single_lane_rates_break_irreducibility(self, tasep):
        lane1_only = {k: v for k, v in tasep.rates.items() if k[0][0] == "1" and k[1][0] == "0"}
        frozen = ModelSpec(
            name="lane1_only",
            states=tasep.states,
            zeta=dict(tasep.zeta),
            eta=dict(tasep.eta),
            base_measure=dict(tasep.base_measure),
            rates=lane1_only,
        )
        report = validate_model(frozen, [3])
        assert not report.condition_b_ok
        assert any("sector" in v for v in report.violations)

    def test_broken_cyclic_balance_detected(self, tasep):
        bad = ModelSpec(
            name="bad_c",
            states=tasep.states,
            zeta=dict(tasep.zeta),
            eta=dict(tasep.eta),
            base_measure=dict(tasep.base_measure),
            rates={**tasep.rates, ("10", "00", "00", "10"): 1.4},
        )
        report = validate_model(bad, [3])
        assert not report.condition_c_ok
        assert report.max_cyclic_residual > 1e-10

    def test_oversized_torus_is_configuration_error(self, tasep):
        with pytest.raises(SizeLimitError):
            validate_model(tasep, [12])

    def test_deterministic_reports(self, tasep):
        a = validate_model(tasep, [3, 4])
        b = validate_model(tasep, [3, 4])
        assert a.as_dict() == b.as_dict()


class TestSynthesis:
    def test_recovers_two_lane_tasep(self, tasep):
        rates = synthesize_rates(
            tasep.states,
            tasep.zeta,
            tasep.eta,
            tasep.base_measure,
            list(tasep.rates.keys()),
        )
        assert set(rates) == set(tasep.rates)
        values = np.array(list(rates.values()))
        np.testing.assert_allclose(values, 1.0, atol=1e-9)

    def test_two_species_support_gives_coupled_model(self, coupled):
        rates = synthesize_rates(
            ("0", "A", "B"),
            {"0": 0, "A": 1, "B": 0},
            {"0": 0, "A": 0, "B": 1},
            {s: 1.0 / 3.0 for s in ("0", "A", "B")},
            two_species_support(),
        )
        assert rates == pytest.approx(coupled.rates)
        # the exchange rate is pinned at twice the hop rate by cyclic balance
        assert rates[("A", "B", "B", "A")] == pytest.approx(1.0)
        assert rates[("A", "0", "0", "A")] == pytest.approx(0.5)

    def test_single_unbalanced_transition_infeasible(self):
        with pytest.raises(InfeasibleSupportError):
            synthesize_rates(
                ("0", "A", "B"),
                {"0": 0, "A": 1, "B": 0},
                {"0": 0, "A": 0, "B": 1},
                {s: 1.0 / 3.0 for s in ("0", "A", "B")},
                [("A", "0", "0", "A")],
            )

    def test_empty_support_infeasible(self):
        with pytest.raises(InfeasibleSupportError):
            synthesize_rates(
                ("0", "A", "B"),
                {"0": 0, "A": 1, "B": 0},
                {"0": 0, "A": 0, "B": 1},
                {s: 1.0 / 3.0 for s in ("0", "A", "B")},
                [],
            )

    def test_support_violating_conservation_rejected(self):
        with pytest.raises(SpecInvariantError, match="conservation"):
            synthesize_rates(
                ("0", "A", "B"),
                {"0": 0, "A": 1, "B": 0},
                {"0": 0, "A": 0, "B": 1},
                {s: 1.0 / 3.0 for s in ("0", "A", "B")},
                [("A", "0", "0", "0")],
            )

    def test_synthesized_model_repasses_validation(self):
        spec = synthesize_model(
            "synth",
            ("0", "A", "B"),
            {"0": 0, "A": 1, "B": 0},
            {"0": 0, "A": 0, "B": 1},
            {s: 1.0 / 3.0 for s in ("0", "A", "B")},
            two_species_support(),
        )
        report = validate_model(spec, [3, 4])
        assert report.condition_a_ok and report.condition_c_ok
        assert report.all_ok

    def test_max_rate_scaled_to_one(self, tasep):
        rates = synthesize_rates(
            tasep.states,
            tasep.zeta,
            tasep.eta,
            tasep.base_measure,
            list(tasep.rates.keys()),
        )
        assert max(rates.values()) == pytest.approx(1.0, abs=0)
