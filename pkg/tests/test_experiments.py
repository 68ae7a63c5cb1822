import json
import math

import numpy as np
import pytest

from hqs import experiments
from hqs.config import ConfigError, default_config
from hqs.experiments import (
    ExperimentError,
    beamsplitter_output,
    run_beamsplitter_demo,
    run_born_check,
    run_chsh,
    run_contextuality_demo,
    run_experiment,
    run_no_signaling_check,
    run_nonlocality_demo,
    run_sequential,
)
from hqs.report import TraceLog, frequency_stderr

from oracles import chsh_born, fock_output_by_operators


def qubit(*weights):
    return [[math.sqrt(w), 0.0] for w in weights]


class TestBornCheck:
    def test_qubit(self):
        cfg = default_config("born-check", system={"dims": [2], "psi": qubit(0.7, 0.3)},
                             measurements=["z"], seed=1)
        r = run_born_check(cfg)
        assert r.verdict == "pass"
        assert abs(r.get("freq[0]").value - 0.7) < 0.005
        assert abs(r.get("freq[1]").value - 0.3) < 0.005

    def test_qutrit_example_state(self):
        r = run_born_check(default_config("born-check", seed=2))
        freqs = [r.get(f"freq[{lab}]").value for lab in ("-1", "0", "+1")]
        assert np.max(np.abs(np.array(freqs) - [0.26, 0.25, 0.49])) < 0.01
        assert r.verdict == "pass"

    def test_deterministic_state(self):
        cfg = default_config("born-check", system={"dims": [2], "psi": [[1, 0], [0, 0]]},
                             measurements=["z"], trials=3000)
        r = run_born_check(cfg)
        assert r.get("freq[0]").value == 1.0 and r.get("freq[1]").value == 0.0

    def test_stderr_formula(self):
        r = run_born_check(default_config("born-check", trials=5000))
        for e in r.estimates:
            if e.name.startswith("freq["):
                assert e.stderr == pytest.approx(math.sqrt(e.value * (1 - e.value) / 5000))

    def test_wrong_expected_fails(self):
        cfg = default_config("born-check", trials=5000, params={"expected": [0.5, 0.25, 0.25]})
        assert run_born_check(cfg).verdict == "fail"

    def test_expected_length_checked(self):
        with pytest.raises(ConfigError):
            run_born_check(default_config("born-check", params={"expected": [1.0]}))

    def test_chunking_does_not_change_results(self, monkeypatch):
        cfg = default_config("born-check", trials=3001)
        a = run_born_check(cfg).to_json()
        monkeypatch.setattr(experiments, "CHUNK", 97)
        b = run_born_check(cfg).to_json()
        assert a == b

    def test_product_haar_uses_empirical_strategy(self):
        cfg = default_config("born-check", system={"dims": [2, 2], "psi": qubit(0.5, 0.1, 0.0, 0.4)},
                             measurements=[{"tensor": ["z", "z"]}],
                             hidden={"distribution": "product_haar", "dims": [2, 2]},
                             strategy={"kind": "empirical", "sample_count": 50_000},
                             trials=1500, params={"tolerance": 0.05})
        r = run_born_check(cfg)
        assert r.verdict == "pass"
        assert r.get("freq[1⊗0]").value == 0.0


class TestContextuality:
    def test_default_golden(self):
        r = run_contextuality_demo(default_config("contextuality"))
        assert r.verdict == "pass"
        assert [g.actual for g in r.golden_checks[:2]] == ["+1", "+"]
        assert r.get("context1.pi1").value == pytest.approx(0.3, abs=1e-12)

    def test_hidden_equals_standard(self):
        cfg = default_config("contextuality", hidden={"state": qubit(0.26, 0.25, 0.49)},
                             params={"expected": ["+1", None]})
        r = run_contextuality_demo(cfg)
        assert r.golden_checks[0].actual == "+1" and r.golden_checks[0].passed

    def test_context_fraction_positive(self):
        r = run_contextuality_demo(default_config("contextuality"))
        assert r.get("context_dependent_fraction").value > 0


class TestNonlocality:
    def test_default(self):
        r = run_nonlocality_demo(default_config("nonlocality"))
        assert r.verdict == "pass"
        assert r.get("context1.b_outcome").value == 0
        assert r.get("context2.b_outcome").value == 1
        assert r.get("b_flip_fraction").value > 0

    def test_product_state_b_fixed(self):
        cfg = default_config("nonlocality", system={"psi": [[1, 0], [0, 0], [0, 0], [0, 0]]},
                             params={"expected": None})
        r = run_nonlocality_demo(cfg)
        assert r.get("context1.b_outcome").value == 0
        assert r.get("context2.b_outcome").value == 0
        assert r.get("b_flip_fraction").value == 0


class TestNoSignaling:
    def test_default(self):
        r = run_no_signaling_check(default_config("no-signaling"))
        assert r.verdict == "pass"
        assert r.get("born_marginal[B=0]").value == pytest.approx(0.5)
        assert r.get("fixed_hidden.marginal_difference").value == 1.0
        assert r.get("fixed_hidden.marginal_difference").exploratory

    def test_product_state(self):
        cfg = default_config("no-signaling", system={"psi": [[0.6, 0], [0.8, 0], [0, 0], [0, 0]]},
                             trials=20_000)
        r = run_no_signaling_check(cfg)
        assert r.gates[0].value < 4 * math.sqrt(2 * 0.24 / 20_000)


class TestChsh:
    def test_born_oracle(self):
        r = run_chsh(default_config("chsh", trials=2000))
        ang = default_config("chsh").params["angles"]
        settings = [(ang["a"], ang["b"]), (ang["a"], ang["b_prime"]), (ang["a_prime"], ang["b"]),
                    (ang["a_prime"], ang["b_prime"])]
        s, es = chsh_born(np.array([0, 1, -1, 0]) / math.sqrt(2), settings)
        assert s == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        assert r.get("S_born").value == pytest.approx(s, abs=1e-12)
        for name, e in zip(("ab", "ab'", "a'b", "a'b'"), es):
            assert r.get(f"E_born[{name}]").value == pytest.approx(e, abs=1e-12)

    def test_singlet_correlator_formula(self):
        # singlet with real-plane bases: E = -cos(2 (ta - tb))
        psi = experiments.StateVector([0, 1, -1, 0])
        for ta, tb in ((0.0, 0.3), (1.1, -0.4)):
            assert experiments.chsh_correlator(psi, ta, tb) == pytest.approx(-math.cos(2 * (ta - tb)))

    def test_within_three_standard_errors(self):
        r = run_chsh(default_config("chsh", trials=20_000, seed=3))
        s = r.get("S")
        assert abs(s.value - r.get("S_born").value) < 3 * s.stderr

    def test_product_state_classical(self):
        r = run_chsh(default_config("chsh", trials=20_000))
        assert abs(r.get("control.S_born").value) <= 2
        assert abs(r.get("control.S").value) <= 2.03


class TestSequential:
    def test_full_refresh_uncorrelated(self):
        r = run_sequential(default_config("sequential", params={"kappa_sweep": []}))
        assert r.verdict == "pass"
        assert abs(r.get("r[x]").value) < 0.02 and abs(r.get("r[z]").value) < 0.02

    def test_first_x_on_plus_state(self):
        cfg = default_config("sequential", system={"psi": [[1, 0], [1, 0]]}, measurements=["x", "z"],
                             trials=2000, params={"kappa_sweep": []})
        r = run_sequential(cfg)
        assert r.get("first.x[+]").value == 1.0

    def test_persistent_reported_not_gated(self):
        cfg = default_config("sequential", hidden={"refresh": "persistent"}, trials=2000,
                             params={"kappa_sweep": []})
        r = run_sequential(cfg)
        assert not r.gates
        est = r.get("r[x]")
        assert est.exploratory and est.stderr is not None
        assert est.value > 0.5

    def test_odd_length_rejected(self):
        with pytest.raises(ExperimentError):
            run_sequential(default_config("sequential", params={"length": 7}))

    def test_sweep_endpoints(self):
        r = run_sequential(default_config("sequential", trials=2000))
        assert r.get("sweep.kappa=0.r[x]").value == r.get("r[x]").value
        assert r.get("sweep.kappa=1.r[x]").value == pytest.approx(1.0)


class TestBeamsplitter:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_amplitudes_match_operator_oracle(self, n):
        np.testing.assert_allclose(beamsplitter_output(n), fock_output_by_operators(n), atol=1e-12)

    @pytest.mark.parametrize("n", range(1, 7))
    def test_normalized_and_odd_counts_vanish(self, n):
        amps = beamsplitter_output(n)
        assert sum(amps ** 2) == pytest.approx(1.0, abs=1e-12)
        assert np.all(amps[1::2] == 0)

    def test_hong_ou_mandel(self):
        np.testing.assert_allclose(beamsplitter_output(1) ** 2, [0.5, 0, 0.5], atol=1e-15)

    def test_photon_cap(self):
        with pytest.raises(ExperimentError):
            beamsplitter_output(7)

    def test_default_passes(self):
        r = run_beamsplitter_demo(default_config("beamsplitter", trials=20_000))
        assert r.verdict == "pass"
        assert r.get("N=1.unequal_fraction").value == 1.0

    @pytest.mark.parametrize("state, label", [([0, 0, 1], "|2,0>"), ([1, 0, 0], "|0,2>")])
    def test_concentrated_hidden_state(self, state, label):
        cfg = default_config("beamsplitter", hidden={"distribution": "fixed", "state": state},
                             trials=10, params={"photons": [1]})
        r = run_beamsplitter_demo(cfg)
        assert r.get(f"N=1.freq[{label}]").value == 1.0

    def test_fixed_state_needs_single_sector(self):
        cfg = default_config("beamsplitter", hidden={"distribution": "fixed", "state": [1, 0, 0]})
        with pytest.raises(ConfigError):
            run_beamsplitter_demo(cfg)


@pytest.mark.parametrize("name", experiments.RUNNERS)
def test_reports_reproducible(name):
    cfg = default_config(name, trials=2000)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()
    data = json.loads(a.to_json())
    assert data["config"]["seed"] == cfg.seed
    assert data["verdict"] in ("pass", "fail")


def test_trace_log_cap():
    log = TraceLog(cap=25)
    run_born_check(default_config("born-check", trials=100), trace=log)
    assert len(log.lines) == 25
    first = log.lines[0]
    assert first["context"] == "born-check" and first["trial"] == 0
    assert first["thresholds"][-1] is None


def test_frequency_stderr():
    assert frequency_stderr(0.5, 100) == pytest.approx(0.05)
    assert frequency_stderr(0.0, 100) == 0.0
