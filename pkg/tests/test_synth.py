import itertools
import json

import numpy as np
import pytest

from belieftrack.corpus import dialogues_to_woz, load_woz
from belieftrack.errors import TemplateCoverageError
from belieftrack.ontology import NONE
from belieftrack.synth import (
    SynthDynamics,
    generate_dialogues,
    hmm_forward_filter,
    make_synthetic_ontology,
    recover_constrained_params,
    saturating_tracker,
)
from belieftrack.update import Constrained, constrained_update


@pytest.fixture(scope="module")
def ontology():
    return make_synthetic_ontology(2, 4)


class TestGenerateDialogues:
    def test_deterministic_per_seed(self, ontology):
        dyn = SynthDynamics(seed=7)
        first = generate_dialogues(ontology, dyn, 20, 6)
        second = generate_dialogues(ontology, SynthDynamics(seed=7), 20, 6)
        assert first == second
        assert json.dumps(dialogues_to_woz(first)) == json.dumps(dialogues_to_woz(second))

    def test_different_seed_differs(self, ontology):
        a = generate_dialogues(ontology, SynthDynamics(seed=1), 10, 6)
        b = generate_dialogues(ontology, SynthDynamics(seed=2), 10, 6)
        assert a != b

    def test_no_change_means_constant_goals(self, ontology):
        dialogues = generate_dialogues(
            ontology, SynthDynamics(seed=3, goal_change_prob=0.0), 20, 6
        )
        for d in dialogues:
            first = d.turns[0].gold_goal_state
            for turn in d.turns:
                assert turn.gold_goal_state == first

    def test_full_mention_puts_goal_tokens_in_utterance(self, ontology):
        dialogues = generate_dialogues(
            ontology, SynthDynamics(seed=4, mention_prob=1.0), 20, 5
        )
        for d in dialogues:
            for turn in d.turns:
                for slot_name, label in turn.gold_goal_state.items():
                    if label != NONE:
                        assert label in turn.user_tokens

    def test_gold_tracks_latent_goal_via_override(self, ontology):
        dialogues = generate_dialogues(ontology, SynthDynamics(seed=5), 30, 6)
        for d in dialogues:
            state = {s.name: NONE for s in ontology.informable_slots}
            for turn in d.turns:
                state = dict(state)
                state.update(turn.turn_goal_labels)
                assert turn.gold_goal_state == state

    def test_roundtrips_through_corpus_loader(self, ontology):
        dialogues = generate_dialogues(ontology, SynthDynamics(seed=6), 15, 5)
        reloaded = load_woz(json.dumps(dialogues_to_woz(dialogues)), ontology)
        assert reloaded == dialogues

    def test_template_without_placeholder_rejected(self, ontology):
        dyn = SynthDynamics(seed=0, templates=("i want please",))
        with pytest.raises(TemplateCoverageError, match="placeholder"):
            generate_dialogues(ontology, dyn, 1, 1)

    def test_dontcare_goals_when_enabled(self, ontology):
        dyn = SynthDynamics(seed=8, include_dontcare=True, goal_change_prob=0.5)
        dialogues = generate_dialogues(ontology, dyn, 40, 6)
        labels = {
            label
            for d in dialogues
            for t in d.turns
            for label in t.gold_goal_state.values()
        }
        assert "dontcare" in labels

    def test_system_acts_reference_ontology(self, ontology):
        dyn = SynthDynamics(seed=9, system_request_prob=0.9, system_confirm_prob=0.9)
        dialogues = generate_dialogues(ontology, dyn, 10, 5)
        saw_request = saw_confirm = False
        for d in dialogues:
            for t in d.turns:
                for act in t.system_acts:
                    assert ontology.has_slot(act.slot)
                    if act.kind == "request":
                        saw_request = True
                    else:
                        saw_confirm = True
                        assert act.value in ontology.slot(act.slot).values
        assert saw_request and saw_confirm


def brute_force_filter(prior, transition, likelihood_seq):
    """Path-enumeration oracle: marginalize the final state over all paths.

    The chain starts in a latent state drawn from the prior; each filtering
    step applies one transition and one observation.
    """
    n = prior.shape[0]
    T = len(likelihood_seq)
    posterior = np.zeros(n)
    for path in itertools.product(range(n), repeat=T + 1):
        weight = prior[path[0]]
        for t in range(1, T + 1):
            weight *= transition[path[t - 1], path[t]] * likelihood_seq[t - 1][path[t]]
        posterior[path[-1]] += weight
    return posterior / posterior.sum()


class TestHmmForwardFilter:
    def test_identity_transition_uniform_likelihood_keeps_prior(self):
        prior = np.array([0.5, 0.3, 0.2])
        out = hmm_forward_filter(prior, np.eye(3), np.ones(3))
        np.testing.assert_allclose(out, prior, atol=1e-15)

    def test_hand_computed_posterior(self):
        out = hmm_forward_filter(
            np.full(4, 0.25), np.eye(4), np.array([2.0, 1.0, 1.0, 0.0])
        )
        np.testing.assert_allclose(out, [0.5, 0.25, 0.25, 0.0], atol=1e-15)

    def test_matches_path_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n = int(rng.integers(2, 5))
            T = int(rng.integers(1, 4))
            prior = rng.dirichlet(np.ones(n))
            transition = rng.dirichlet(np.ones(n), size=n)
            likelihoods = [rng.uniform(0.05, 1.0, n) for _ in range(T)]
            filtered = prior
            for lik in likelihoods:
                filtered = hmm_forward_filter(filtered, transition, lik)
            oracle = brute_force_filter(prior, transition, likelihoods)
            np.testing.assert_allclose(filtered, oracle, atol=1e-10)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="sum to 1"):
            hmm_forward_filter(np.array([0.5, 0.4]), np.eye(2), np.ones(2))
        with pytest.raises(ValueError, match="rows"):
            hmm_forward_filter(
                np.array([0.5, 0.5]), np.array([[0.5, 0.1], [0.5, 0.5]]), np.ones(2)
            )
        with pytest.raises(ValueError, match="all-zero"):
            hmm_forward_filter(np.array([0.5, 0.5]), np.eye(2), np.zeros(2))
        with pytest.raises(ValueError, match="non-negative"):
            hmm_forward_filter(np.array([0.5, 0.5]), np.eye(2), np.array([-1.0, 1.0]))

    def test_output_is_distribution(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            prior = rng.dirichlet(np.ones(n))
            transition = rng.dirichlet(np.ones(n), size=n)
            lik = rng.uniform(0.0, 2.0, n)
            if lik.max() == 0.0:
                continue
            out = hmm_forward_filter(prior, transition, lik)
            assert abs(out.sum() - 1.0) <= 1e-12
            assert np.all(out >= 0)


class TestRecoverConstrainedParams:
    def test_teacher_equals_init_has_zero_error_without_steps(self):
        teacher = Constrained(a_curr=1.0, b_curr=0.0, a_past=1.0, b_past=0.0)
        result = recover_constrained_params(teacher, 200, seed=0, steps=0)
        assert result.err_curr_diff == 0.0
        assert result.err_past_diff == 0.0

    def test_recovers_difference_parameters(self):
        teacher = Constrained(a_curr=3.0, b_curr=0.0, a_past=2.0, b_past=0.0)
        result = recover_constrained_params(teacher, 1000, seed=1, steps=300)
        assert result.err_curr_diff < 0.05
        assert result.err_past_diff < 0.05

    def test_shifted_teacher_recovers_same_differences(self):
        # raw scalars are not identifiable: a constant shift of both matrix
        # values leaves the softmax unchanged, so only differences count
        base = Constrained(a_curr=2.0, b_curr=-1.0, a_past=1.5, b_past=0.5)
        shifted = Constrained(a_curr=4.0, b_curr=1.0, a_past=0.5, b_past=-0.5)
        rng = np.random.default_rng(2)
        y = rng.uniform(0.01, 0.99, 5)
        b = rng.dirichlet(np.ones(5))
        np.testing.assert_allclose(
            constrained_update(y, b, base), constrained_update(y, b, shifted), atol=1e-12
        )
        r1 = recover_constrained_params(base, 800, seed=3, steps=250)
        r2 = recover_constrained_params(shifted, 800, seed=3, steps=250)
        assert r1.err_curr_diff < 0.05 and r2.err_curr_diff < 0.05

    def test_sample_floor_enforced(self):
        with pytest.raises(ValueError, match="100"):
            recover_constrained_params(Constrained(), 50, seed=0)


class TestSaturatingTracker:
    def test_needs_single_token_values(self):
        from belieftrack.ontology import Ontology, Slot

        onto = Ontology(
            informable_slots=(Slot(name="food", values=("very spicy",)),),
            requestable_slots=(),
        )
        with pytest.raises(ValueError, match="single-token"):
            saturating_tracker(onto)

    def test_history_independence_when_past_tie(self, ontology):
        params = Constrained(a_curr=5.0, b_curr=0.0, a_past=0.7, b_past=0.7)
        rng = np.random.default_rng(15)
        y = rng.uniform(0.01, 0.99, 6)
        b1 = rng.dirichlet(np.ones(6))
        b2 = rng.dirichlet(np.ones(6))
        np.testing.assert_allclose(
            constrained_update(y, b1, params),
            constrained_update(y, b2, params),
            atol=1e-12,
        )
