"""Gap-fill task generation and level progression.

Levels are groups of five clips drawn from one difficulty bucket. A level
passes when the total answering time stays under the total audio time;
passing banks the difference as score. Wrong answers never block progress,
they only cost time. Gaps are re-randomized every time a clip is presented.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

from .cas import Cid
from .datamodel import (
    ClipEntry,
    LanguageIndex,
    LanguageMeta,
    RootIndex,
    Sentence,
    SentenceMeta,
    decode,
)
from .errors import GameError

GROUP_SIZE = 5


def normalize_answer(text: str, meta: LanguageMeta | None) -> str:
    """Comparison form of a typed answer: characters with a replacement rule
    become their first alternative, then everything is lowercased.

    Replacement runs before lowercasing because the rules are keyed on the
    characters a keyboard lacks (usually capitals like the dotted I), which
    lowercasing would already have rewritten past recognition.
    """
    if meta is not None and meta.alternatives:
        alts = meta.alternatives
        text = "".join(alts[c][0] if c in alts and alts[c] else c for c in text)
    return text.lower()


@dataclass
class Task:
    clip: ClipEntry
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    gap_index: int
    audio: bytes = b""
    task_id: str = ""

    @property
    def answer_token(self) -> str:
        return self.tokens[self.gap_index]


def make_task(clip: ClipEntry, sentence_meta: SentenceMeta, seed,
              audio: bytes = b"") -> Task:
    """Gap one word token uniformly at random; punctuation is never gapped."""
    positions = [i for i, tag in enumerate(sentence_meta.tags) if tag == "X"]
    if not positions:
        raise GameError(f"clip {clip.clip_cid} has no gappable token")
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    gap_index = positions[rng.randrange(len(positions))]
    return Task(clip=clip, tokens=sentence_meta.tokens, tags=sentence_meta.tags,
                gap_index=gap_index, audio=audio)


@dataclass
class CheckResult:
    correct: bool
    expected: str


def check_answer(task: Task, answer: str, meta: LanguageMeta | None) -> CheckResult:
    target = task.answer_token
    return CheckResult(
        correct=normalize_answer(answer, meta) == normalize_answer(target, meta),
        expected=target,
    )


@dataclass
class SubmitOutcome:
    correct: bool
    expected: str
    level_complete: bool = False
    level_passed: bool | None = None
    score_delta: float = 0.0


@dataclass
class Profile:
    language: str
    level: int = 1
    score: float = 0.0
    deactivated: set[str] = field(default_factory=set)
    seed: int | None = None

    def to_jsonable(self) -> dict:
        return {"language": self.language, "level": self.level, "score": self.score,
                "deactivated": sorted(self.deactivated), "seed": self.seed}

    @classmethod
    def from_jsonable(cls, obj: dict) -> "Profile":
        return cls(language=obj["language"], level=int(obj.get("level", 1)),
                   score=float(obj.get("score", 0.0)),
                   deactivated=set(obj.get("deactivated", [])),
                   seed=obj.get("seed"))


def load_profile(path: Path | str) -> Profile:
    return Profile.from_jsonable(json.loads(Path(path).read_text("utf-8")))


def save_profile(path: Path | str, profile: Profile) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(profile.to_jsonable(), sort_keys=True), "utf-8")
    os.replace(tmp, path)


class GameSession:
    """One learner working one bucket. Single-threaded by design."""

    def __init__(self, store, root_cid: Cid, language: str, bucket: int,
                 seed: int | None = None, profile: Profile | None = None,
                 profile_path: Path | str | None = None):
        self.store = store
        self.root_cid = root_cid
        self.language = language
        self.bucket_index = bucket
        self.seed = seed
        self.rng = random.Random(seed)
        self.profile_path = Path(profile_path) if profile_path else None

        root = decode(store.get(root_cid), RootIndex)
        try:
            entry = root.entries[language]
        except KeyError:
            raise GameError(f"language {language!r} not in root") from None
        if not 0 <= bucket < len(entry.cids):
            raise GameError(f"bucket {bucket} out of range (language has {len(entry.cids)})")
        self.meta = decode(store.get(entry.meta), LanguageMeta)
        self.bucket_clips = list(decode(store.get(entry.cids[bucket]), LanguageIndex).clips)

        if profile is None:
            profile = Profile(language=language, seed=seed)
        self.level = profile.level
        self.score = profile.score
        self.deactivated: set[str] = set(profile.deactivated)

        self.group: list[Task] = []
        self.order: list[int] = []  # presentation order, indices into group
        self.answered: dict[int, tuple[float, bool]] = {}
        self._start_level(strict=True)

    # -- group management ---------------------------------------------------

    def _active_pool(self, exclude: set[str] = frozenset()) -> list[ClipEntry]:
        return [c for c in self.bucket_clips
                if c.clip_cid not in self.deactivated and c.clip_cid not in exclude]

    def _build_task(self, clip: ClipEntry) -> Task:
        meta = decode(self.store.get(clip.meta_cid), SentenceMeta)
        audio = self.store.get(clip.clip_cid)
        task = make_task(clip, meta, self.rng.randrange(2 ** 32), audio=audio)
        task.task_id = f"{clip.clip_cid}:{self.rng.randrange(2 ** 32):08x}"
        return task

    def _start_level(self, reuse: list[ClipEntry] | None = None,
                     strict: bool = False) -> None:
        if reuse is None:
            pool = self._active_pool()
            if not pool or (strict and len(pool) < GROUP_SIZE):
                raise GameError(
                    f"bucket {self.bucket_index} has {len(pool)} active clips, "
                    f"needs {GROUP_SIZE}")
            # later levels keep going with whatever the bucket still holds
            clips = self.rng.sample(pool, min(GROUP_SIZE, len(pool)))
        else:
            clips = reuse
        self.group = [self._build_task(c) for c in clips]
        self.order = list(range(len(self.group)))
        self.answered = {}

    # -- spec surface ---------------------------------------------------------

    def current_task(self) -> Task:
        for idx in self.order:
            if idx not in self.answered:
                return self.group[idx]
        if not self.group:
            raise GameError("no active clips remain in this bucket")
        raise GameError("level already complete")

    def _index_of(self, task: Task) -> int:
        for idx, candidate in enumerate(self.group):
            if candidate.task_id == task.task_id:
                return idx
        raise GameError("task is not part of the active group")

    def submit(self, task: Task, answer: str, elapsed: float) -> SubmitOutcome:
        idx = self._index_of(task)
        if idx in self.answered:
            raise GameError("task already answered")
        result = check_answer(task, answer, self.meta)
        self.answered[idx] = (float(elapsed), result.correct)
        outcome = SubmitOutcome(correct=result.correct, expected=result.expected)
        if len(self.answered) == len(self.group):
            total_audio = sum(t.clip.length for t in self.group)
            total_elapsed = sum(e for e, _ in self.answered.values())
            outcome.level_complete = True
            outcome.level_passed = total_elapsed < total_audio
            if outcome.level_passed:
                outcome.score_delta = total_audio - total_elapsed
                self.score += outcome.score_delta
                self.level += 1
                self._start_level()
            else:
                # same clips, fresh gaps
                self._start_level(reuse=[t.clip for t in self.group])
            self._sync_profile()
        return outcome

    def discard(self, task: Task) -> Task | None:
        """Deactivate the clip for good and draw a replacement if the bucket
        still has one; otherwise the group shrinks."""
        idx = self._index_of(task)
        if idx in self.answered:
            raise GameError("cannot discard an answered task")
        self.deactivated.add(task.clip.clip_cid)
        self._sync_profile()
        in_group = {t.clip.clip_cid for t in self.group}
        pool = self._active_pool(exclude=in_group)
        if pool:
            replacement = self._build_task(self.rng.choice(pool))
            self.group[idx] = replacement
            return replacement
        self.group.pop(idx)
        self.order = [i if i < idx else i - 1 for i in self.order if i != idx]
        self.answered = {(i if i < idx else i - 1): v for i, v in self.answered.items()}
        return None

    def skip(self, task: Task) -> None:
        """Push the task to the end of the presentation order, no penalty."""
        idx = self._index_of(task)
        if idx in self.answered:
            raise GameError("cannot skip an answered task")
        self.order.remove(idx)
        self.order.append(idx)

    def display_state(self) -> dict:
        return {"L": self.level, "S": self.score,
                "R": len(self.group) - len(self.answered)}

    # -- persistence ----------------------------------------------------------

    def to_profile(self) -> Profile:
        return Profile(language=self.language, level=self.level, score=self.score,
                       deactivated=set(self.deactivated), seed=self.seed)

    def _sync_profile(self) -> None:
        if self.profile_path is not None:
            save_profile(self.profile_path, self.to_profile())


def new_session(store, root_cid: Cid, language: str, bucket: int,
                seed: int | None = None, profile: Profile | None = None,
                profile_path: Path | str | None = None) -> GameSession:
    return GameSession(store, root_cid, language, bucket, seed=seed,
                       profile=profile, profile_path=profile_path)
