import pytest

from lingtrove.datamodel import LanguageMeta, SentenceMeta, decode
from lingtrove.errors import GameError
from lingtrove.game import (
    GameSession,
    Profile,
    check_answer,
    load_profile,
    make_task,
    new_session,
    normalize_answer,
    save_profile,
)

from conftest import BRETON_SENTENCES, make_root, put_clip

BRETON_TOKENS = ("Gouzout", "a", "rit", "ar", "pezh", "zo", "c'hoarvezet", "gantañ", "?")


@pytest.fixture
def root(store):
    cid, clips = make_root(store, BRETON_SENTENCES)
    return cid


def breton_meta(store):
    clip = put_clip(store, BRETON_SENTENCES[0][0], 4.8)
    return clip, decode(store.get(clip.meta_cid), SentenceMeta)


class TestMakeTask:
    def test_punct_never_gapped(self, store):
        clip, meta = breton_meta(store)
        assert meta.tokens == BRETON_TOKENS
        assert meta.tags[-1] == "PUNCT"
        for seed in range(300):
            task = make_task(clip, meta, seed)
            assert task.gap_index in range(8)
            assert task.tags[task.gap_index] == "X"

    def test_single_word_sentence(self, store):
        clip = put_clip(store, "word", 2.4)
        meta = decode(store.get(clip.meta_cid), SentenceMeta)
        for seed in range(10):
            assert make_task(clip, meta, seed).gap_index == 0

    def test_no_gappable_token_errors(self, store):
        clip = put_clip(store, "¿...?", 2.4)
        meta = decode(store.get(clip.meta_cid), SentenceMeta)
        with pytest.raises(GameError):
            make_task(clip, meta, 1)

    def test_seeded_determinism(self, store):
        clip, meta = breton_meta(store)
        assert make_task(clip, meta, 99).gap_index == make_task(clip, meta, 99).gap_index

    def test_roughly_uniform(self, store):
        clip, meta = breton_meta(store)
        counts = [0] * len(meta.tokens)
        draws = 2000
        for seed in range(draws):
            counts[make_task(clip, meta, seed).gap_index] += 1
        assert counts[8] == 0
        for position in range(8):
            assert draws / 8 * 0.7 < counts[position] < draws / 8 * 1.3


class TestCheckAnswer:
    def test_wrong_form_of_to_be(self, store):
        clip, meta = breton_meta(store)
        task = next(make_task(clip, meta, seed) for seed in range(50)
                    if make_task(clip, meta, seed).gap_index == 5)
        result = check_answer(task, "eo", None)
        assert not result.correct
        assert result.expected == "zo"

    def test_exact_match(self, store):
        clip, meta = breton_meta(store)
        task = make_task(clip, meta, 0)
        assert check_answer(task, task.answer_token, None).correct

    def test_case_insensitive(self, store):
        clip, meta = breton_meta(store)
        task = make_task(clip, meta, 0)
        assert check_answer(task, task.answer_token.upper(), None).correct

    def test_dotted_capital_alternative(self):
        meta = LanguageMeta(display="Türkçe", alternatives={"İ": ("I",)})
        assert normalize_answer("İstanbul", meta) == normalize_answer("istanbul", meta)
        assert normalize_answer("İstanbul", meta) == "istanbul"

    def test_alternatives_do_not_overreach(self):
        meta = LanguageMeta(display="Türkçe", alternatives={"İ": ("I",)})
        assert normalize_answer("zo", meta) == "zo"
        assert normalize_answer("eo", meta) != "zo"


def run_level(session, elapsed_each: float, answer_fn=None):
    outcome = None
    for _ in range(len(session.group)):
        task = session.current_task()
        answer = answer_fn(task) if answer_fn else task.answer_token
        outcome = session.submit(task, answer, elapsed_each)
    return outcome


class TestSession:
    def test_new_session_draws_five(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        assert len(session.group) == 5
        assert len({t.clip.clip_cid for t in session.group}) == 5
        assert session.display_state() == {"L": 1, "S": 0.0, "R": 5}

    def test_unknown_language(self, store, root):
        with pytest.raises(GameError):
            new_session(store, root, "xx", 0)

    def test_bucket_out_of_range(self, store, root):
        with pytest.raises(GameError):
            new_session(store, root, "br", 3)

    def test_short_bucket_names_shortfall(self, store):
        cid, _ = make_root(store, BRETON_SENTENCES[:3])
        with pytest.raises(GameError, match="3 active clips"):
            new_session(store, cid, "br", 0)

    def test_deterministic_under_seed(self, store, root):
        a = new_session(store, root, "br", 0, seed=7)
        b = new_session(store, root, "br", 0, seed=7)
        assert [t.clip.clip_cid for t in a.group] == [t.clip.clip_cid for t in b.group]
        assert [t.gap_index for t in a.group] == [t.gap_index for t in b.group]
        run_level(a, 1.0)
        run_level(b, 1.0)
        assert [t.clip.clip_cid for t in a.group] == [t.clip.clip_cid for t in b.group]
        assert a.score == b.score

    def test_level_pass_banks_time_difference(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        total_audio = sum(t.clip.length for t in session.group)
        outcome = run_level(session, 2.4)
        assert outcome.level_complete and outcome.level_passed
        assert outcome.score_delta == total_audio - 5 * 2.4
        assert session.score == outcome.score_delta
        assert session.level == 2
        assert session.display_state()["R"] == 5  # fresh group

    def test_equal_time_is_not_a_pass(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        per_task = sum(t.clip.length for t in session.group) / 5
        outcome = run_level(session, per_task)
        assert outcome.level_complete and not outcome.level_passed
        assert session.score == 0.0 and session.level == 1

    def test_failed_level_repeats_same_clips_with_fresh_gaps(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        first_clips = sorted(t.clip.clip_cid for t in session.group)
        gaps_before = {t.clip.clip_cid: t.gap_index for t in session.group}
        run_level(session, 100.0)
        assert sorted(t.clip.clip_cid for t in session.group) == first_clips
        # seeds differ, so across all five tasks at least one gap may move;
        # determinism is asserted elsewhere, here we check they are new tasks
        assert all(t.task_id for t in session.group)
        assert {t.clip.clip_cid: t.gap_index for t in session.group} is not gaps_before

    def test_wrong_answers_do_not_block_passing(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        outcome = run_level(session, 1.0, answer_fn=lambda t: "definitely wrong")
        assert not outcome.correct
        assert outcome.level_passed

    def test_double_submit_rejected(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        task = session.current_task()
        session.submit(task, "x", 1.0)
        with pytest.raises(GameError):
            session.submit(task, "x", 1.0)

    def test_foreign_task_rejected(self, store, root):
        a = new_session(store, root, "br", 0, seed=1)
        b = new_session(store, root, "br", 0, seed=2)
        with pytest.raises(GameError):
            a.submit(b.current_task(), "x", 1.0)


class TestDiscardSkip:
    def test_discard_replaces_from_bucket(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        before = {t.clip.clip_cid for t in session.group}
        victim = session.current_task()
        replacement = session.discard(victim)
        assert replacement is not None
        assert victim.clip.clip_cid in session.deactivated
        after = {t.clip.clip_cid for t in session.group}
        assert victim.clip.clip_cid not in after
        assert len(after) == 5
        assert session.display_state()["R"] == 5  # R unchanged

    def test_discarded_clip_never_reappears(self, store, root, tmp_path):
        profile_path = tmp_path / "profile.json"
        session = new_session(store, root, "br", 0, seed=1, profile_path=profile_path)
        victim = session.current_task()
        session.discard(victim)
        for _ in range(3):
            run_level(session, 0.1)
            assert victim.clip.clip_cid not in {t.clip.clip_cid for t in session.group}
        resumed = new_session(store, root, "br", 0, seed=9,
                              profile=load_profile(profile_path))
        assert victim.clip.clip_cid not in {t.clip.clip_cid for t in resumed.group}

    def test_bucket_exhaustion_shrinks_group_and_denominator(self, store):
        cid, _ = make_root(store, BRETON_SENTENCES[:5])
        session = new_session(store, cid, "br", 0, seed=1)
        replacement = session.discard(session.current_task())
        assert replacement is None
        assert len(session.group) == 4
        assert session.display_state()["R"] == 4
        outcome = run_level(session, 1.0)
        assert outcome.level_passed

    def test_pass_after_shrink_uses_remaining_lengths(self, store):
        cid, _ = make_root(store, BRETON_SENTENCES[:5])
        session = new_session(store, cid, "br", 0, seed=1)
        session.discard(session.current_task())
        lengths = sum(t.clip.length for t in session.group)
        outcome = run_level(session, 1.0)
        assert outcome.score_delta == pytest.approx(lengths - 4 * 1.0)

    def test_skip_moves_to_end_without_penalty(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        first = session.current_task()
        session.skip(first)
        assert session.current_task().task_id != first.task_id
        assert session.display_state()["R"] == 5
        # answer everything else, the skipped one comes back last
        seen_last = None
        for _ in range(5):
            task = session.current_task()
            seen_last = task
            session.submit(task, task.answer_token, 0.1)
        assert seen_last.task_id == first.task_id

    def test_answered_task_cannot_be_discarded_or_skipped(self, store, root):
        session = new_session(store, root, "br", 0, seed=1)
        task = session.current_task()
        session.submit(task, "x", 0.1)
        with pytest.raises(GameError):
            session.discard(task)
        with pytest.raises(GameError):
            session.skip(task)


class TestProfile:
    def test_round_trip(self, tmp_path):
        profile = Profile(language="br", level=3, score=12.5,
                          deactivated={"Qm" + "a" * 44}, seed=4)
        path = tmp_path / "p" / "profile.json"
        save_profile(path, profile)
        assert load_profile(path) == profile

    def test_session_syncs_on_level_end(self, store, root, tmp_path):
        path = tmp_path / "profile.json"
        session = new_session(store, root, "br", 0, seed=1, profile_path=path)
        run_level(session, 0.5)
        saved = load_profile(path)
        assert saved.level == 2
        assert saved.score == session.score

    def test_resume_restores_level_and_score(self, store, root):
        profile = Profile(language="br", level=4, score=33.0)
        session = new_session(store, root, "br", 0, seed=1, profile=profile)
        assert session.level == 4
        assert session.score == 33.0


class TestFullExhaustion:
    def test_discarding_every_clip_reports_clearly(self, store):
        cid, _ = make_root(store, BRETON_SENTENCES[:5])
        session = new_session(store, cid, "br", 0, seed=1)
        for _ in range(5):
            session.discard(session.current_task())
        with pytest.raises(GameError, match="no active clips"):
            session.current_task()
