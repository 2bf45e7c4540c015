import numpy as np
import pytest

from belieftrack.corpus import Dialogue, Turn, initial_state_vector
from belieftrack.decoder import decode_turn
from belieftrack.embeddings import empty_store
from belieftrack.evaluation import (
    Tracker,
    best_rule_lambda,
    evaluate,
    fast_evaluate,
    joint_goal_accuracy,
    prepare_corpus,
    request_accuracy,
    rule_lambda_grid,
    track_dialogue,
)
from belieftrack.model import EmbeddingInfo, init_model
from belieftrack.ontology import NONE
from belieftrack.synth import (
    SynthDynamics,
    generate_dialogues,
    make_synthetic_ontology,
    saturating_tracker,
)
from belieftrack.update import Constrained, RuleBased, constrained_update


@pytest.fixture(scope="module")
def ontology():
    return make_synthetic_ontology(2, 3)


@pytest.fixture(scope="module")
def noiseless(ontology):
    dyn = SynthDynamics(seed=23, goal_change_prob=0.0, mention_prob=1.0, request_prob=0.3)
    return dyn, generate_dialogues(ontology, dyn, 12, 5)


@pytest.fixture(scope="module")
def noisy(ontology):
    dyn = SynthDynamics(seed=29, goal_change_prob=0.25, mention_prob=0.75)
    return dyn, generate_dialogues(ontology, dyn, 25, 6)


class TestTrackDialogue:
    def test_neutral_model_stays_none(self, ontology):
        store = empty_store(6, 0)
        model = init_model(ontology, EmbeddingInfo(dimension=6), "constrained", 0)
        model.decoder.w_sem[:] = 0.0
        model.decoder.w_out[:] = 0.0
        tracker = Tracker(model=model, store=store)
        dialogue = generate_dialogues(ontology, SynthDynamics(seed=1), 1, 1)[0]
        views = track_dialogue(tracker, dialogue)
        assert all(g == NONE for g in views[0].goals.values())

    def test_replay_is_identical(self, ontology, noisy):
        _, dialogues = noisy
        store = empty_store(6, 0)
        model = init_model(ontology, EmbeddingInfo(dimension=6), "constrained", 3)
        tracker = Tracker(model=model, store=store)
        first = track_dialogue(tracker, dialogues[0])
        second = track_dialogue(tracker, dialogues[0])
        for a, b in zip(first, second):
            assert a.goals == b.goals
            for name in a.belief:
                np.testing.assert_array_equal(a.belief[name], b.belief[name])

    def test_two_turn_tracking_matches_hand_rolled_recurrence(self, ontology):
        # independent two-step computation: decode y per turn, then apply the
        # constrained closed form by hand, self-feeding the first output
        store = empty_store(6, 0)
        model = init_model(ontology, EmbeddingInfo(dimension=6), "constrained", 5)
        model.mechanism = Constrained(a_curr=2.0, b_curr=-0.5, a_past=1.5, b_past=0.25)
        tracker = Tracker(model=model, store=store)
        dialogue = generate_dialogues(ontology, SynthDynamics(seed=9), 1, 2)[0]
        views = track_dialogue(tracker, dialogue)
        slot = ontology.informable_slots[0]
        b = initial_state_vector(slot)
        for turn, view in zip(dialogue.turns, views):
            y = decode_turn(model.decoder, store, turn, slot, tracker.candidates)
            b = constrained_update(y, b, model.mechanism)
            np.testing.assert_allclose(view.belief[slot.name], b, atol=1e-12)

    def test_saturating_model_tracks_noiseless_dialogues(self, ontology, noiseless):
        dyn, dialogues = noiseless
        tracker = saturating_tracker(ontology, dyn)
        for dialogue in dialogues:
            for turn, view in zip(dialogue.turns, track_dialogue(tracker, dialogue)):
                assert view.goals == turn.gold_goal_state


class TestMetrics:
    def test_perfect_predictions_score_one(self, ontology, noiseless):
        dyn, dialogues = noiseless
        tracker = saturating_tracker(ontology, dyn)
        assert joint_goal_accuracy(tracker, dialogues) == 1.0

    def test_request_accuracy_on_saturating_model(self, ontology, noiseless):
        dyn, dialogues = noiseless
        tracker = saturating_tracker(ontology, dyn)
        assert request_accuracy(tracker, dialogues) == 1.0

    def test_one_slot_always_wrong_zeroes_joint(self, ontology, noiseless):
        dyn, dialogues = noiseless
        tracker = saturating_tracker(ontology, dyn)
        # corrupt gold for slot1 everywhere with a label never mentioned
        corrupted = []
        for d in dialogues:
            turns = []
            for t in d.turns:
                gold = dict(t.gold_goal_state)
                gold["slot1"] = NONE
                turns.append(
                    Turn(
                        user_tokens=t.user_tokens,
                        system_acts=t.system_acts,
                        turn_goal_labels=t.turn_goal_labels,
                        gold_goal_state=gold,
                        gold_requests=t.gold_requests,
                    )
                )
            corrupted.append(Dialogue(id=d.id, turns=tuple(turns)))
        assert joint_goal_accuracy(tracker, corrupted) == 0.0

    def test_known_fraction_of_fully_correct_turns(self, ontology):
        # 10 turns, 3 of them corrupted: joint goal accuracy 0.7 by hand count
        dyn = SynthDynamics(seed=77, goal_change_prob=0.0, mention_prob=1.0, request_prob=0.0)
        dialogues = generate_dialogues(ontology, dyn, 2, 5)
        tracker = saturating_tracker(ontology, dyn)
        corrupted = []
        flips = {("synth-0000", 1), ("synth-0000", 3), ("synth-0001", 0)}
        for d in dialogues:
            turns = []
            for i, t in enumerate(d.turns):
                gold = dict(t.gold_goal_state)
                if (d.id, i) in flips:
                    gold["slot0"] = NONE
                turns.append(
                    Turn(
                        user_tokens=t.user_tokens,
                        system_acts=t.system_acts,
                        turn_goal_labels=t.turn_goal_labels,
                        gold_goal_state=gold,
                        gold_requests=t.gold_requests,
                    )
                )
            corrupted.append(Dialogue(id=d.id, turns=tuple(turns)))
        assert joint_goal_accuracy(tracker, corrupted) == pytest.approx(0.7)

    def test_joint_bounded_by_per_slot(self, ontology, noisy):
        dyn, dialogues = noisy
        store = empty_store(6, 0)
        model = init_model(ontology, EmbeddingInfo(dimension=6), "constrained", 7)
        tracker = Tracker(model=model, store=store)
        report = evaluate(tracker, dialogues)
        assert report["joint_goal_accuracy"] <= min(report["per_slot_accuracy"].values()) + 1e-12

    def test_order_invariant(self, ontology, noisy):
        dyn, dialogues = noisy
        tracker = saturating_tracker(ontology, dyn)
        forward = joint_goal_accuracy(tracker, dialogues)
        backward = joint_goal_accuracy(tracker, list(reversed(dialogues)))
        assert forward == backward

    def test_empty_corpus_rejected(self, ontology):
        tracker = saturating_tracker(ontology)
        with pytest.raises(ValueError):
            joint_goal_accuracy(tracker, [])

    def test_report_lists_errors_with_context(self, ontology, noisy):
        dyn, dialogues = noisy
        store = empty_store(6, 0)
        model = init_model(ontology, EmbeddingInfo(dimension=6), "constrained", 7)
        tracker = Tracker(model=model, store=store)
        report = evaluate(tracker, dialogues)
        assert report["errors"], "an untrained model should make goal errors"
        entry = report["errors"][0]
        assert set(entry) == {"dialogue_id", "turn_index", "slot", "predicted", "gold"}


class TestRuleTracking:
    def test_lambda_one_reduces_to_turn_level_decisions(self, ontology, noisy):
        # with full weight on the turn estimate, the carried state is exactly y
        dyn, dialogues = noisy
        tracker = saturating_tracker(ontology, dyn)
        tracker.model.mechanism = RuleBased(lam=1.0)
        for dialogue in dialogues[:5]:
            views = track_dialogue(tracker, dialogue)
            for turn, view in zip(dialogue.turns, views):
                for slot in ontology.informable_slots:
                    y = decode_turn(
                        tracker.model.decoder, tracker.store, turn, slot, tracker.candidates
                    )
                    np.testing.assert_allclose(view.belief[slot.name], y, atol=1e-12)

    def test_fast_path_matches_reference_path(self, ontology, noisy):
        dyn, dialogues = noisy
        store = empty_store(6, 0)
        prep = prepare_corpus(dialogues, ontology, store)
        for kind, seed in (("constrained", 1), ("one_step", 2), ("interp", 3), ("rule", 4)):
            model = init_model(ontology, EmbeddingInfo(dimension=6), kind, seed)
            if kind == "rule":
                model.mechanism = RuleBased(lam=0.75)
            tracker = Tracker(model=model, store=store)
            slow_jga = joint_goal_accuracy(tracker, dialogues)
            slow_req = request_accuracy(tracker, dialogues)
            fast_jga, fast_req = fast_evaluate(prep, model.decoder, model.mechanism)
            assert slow_jga == pytest.approx(fast_jga, abs=1e-12), kind
            assert slow_req == pytest.approx(fast_req, abs=1e-12), kind

    def test_lambda_grid_matches_individual_evaluations(self, ontology, noisy):
        dyn, dialogues = noisy
        tracker = saturating_tracker(ontology, dyn)
        store = tracker.store
        prep = prepare_corpus(dialogues, ontology, store)
        lambdas = (0.0, 0.3, 0.7, 1.0)
        grid_accs, _ = rule_lambda_grid(prep, tracker.model.decoder, lambdas)
        for lam, expected in zip(lambdas, grid_accs):
            tracker.model.mechanism = RuleBased(lam=lam)
            got = joint_goal_accuracy(tracker, dialogues)
            assert got == pytest.approx(expected, abs=1e-12), lam

    def test_best_lambda_tie_breaks_low(self, ontology, noiseless):
        dyn, dialogues = noiseless
        tracker = saturating_tracker(ontology, dyn)
        prep = prepare_corpus(dialogues, ontology, tracker.store)
        lam, acc, _ = best_rule_lambda(prep, tracker.model.decoder)
        grid_accs, _ = rule_lambda_grid(prep, tracker.model.decoder)
        assert acc == max(grid_accs)
        first_best = next(
            l for l, a in zip((round(0.05 * i, 2) for i in range(21)), grid_accs) if a == acc
        )
        assert lam == first_best


class TestParallelEvaluation:
    def test_worker_pool_report_identical_to_single_thread(self, ontology, noisy):
        dyn, dialogues = noisy
        tracker = saturating_tracker(ontology, dyn)
        single = evaluate(tracker, dialogues, workers=1)
        pooled = evaluate(tracker, dialogues, workers=4)
        assert single == pooled
