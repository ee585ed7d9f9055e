"""Multimodal-judge client with a deterministic offline stub.

The judge sits behind a chat-completions-style JSON endpoint and returns
pass/fail verdicts per checkpoint, generated checkpoints for a case, or an
answer-set rubric score for story cases. Replies must be machine-readable
JSON; a single re-ask with a format reminder is attempted before a parse
error surfaces. Transient transport failures (429/5xx/timeouts) are retried
with a configured backoff schedule.

Two transports are provided: HttpJudgeTransport speaks to any compatible
server (image parts as data URLs or pass-through remote URLs), and
StubJudgeTransport replays canned fixture replies or derives verdicts from
a deterministic hash, which keeps the whole pipeline reproducible offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import httpx

from .cases import DIMENSION_TITLES, EvalCase, Checkpoint, EvalDimension
from .exceptions import (
    ConfigError,
    CoverageError,
    GenerationError,
    JudgeParseError,
    TransportError,
)
from .scoring import Verdict

ENV_BASE_URL = "DAREVAL_JUDGE_BASE_URL"
ENV_API_KEY = "DAREVAL_JUDGE_API_KEY"
ENV_MODEL = "DAREVAL_JUDGE_MODEL"

ROLE_REFERENCE = "reference"
ROLE_GENERATED = "generated"

KIND_VERDICTS = "verdicts"
KIND_CHECKPOINTS = "checkpoints"
KIND_ANSWER_SET = "answer_set"

_FORMAT_REMINDER = (
    "\n\nREMINDER: your previous reply was not machine-readable. "
    "Output ONLY the requested JSON object, with no surrounding text or markdown."
)


@dataclass(frozen=True)
class JudgeConfig:
    base_url: str = ""
    model_name: str = "stub"
    api_key: str = ""
    max_retries: int = 3
    backoff: tuple[float, ...] = (0.5, 1.0, 2.0)
    request_timeout: float = 60.0
    temperature: float = 0.0
    max_concurrent: int = 4
    seed: int | None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_concurrent < 1:
            raise ConfigError(f"max_concurrent must be >= 1, got {self.max_concurrent}")
        if self.temperature != 0.0:
            raise ConfigError("temperature must be 0 for reproducible grading")
        if not self.backoff:
            raise ConfigError("backoff schedule must not be empty")
        object.__setattr__(self, "backoff", tuple(self.backoff))

    @classmethod
    def from_env(cls, **overrides) -> "JudgeConfig":
        """Credentials and endpoint come from the environment, never manifests."""
        env = {
            "base_url": os.environ.get(ENV_BASE_URL, ""),
            "api_key": os.environ.get(ENV_API_KEY, ""),
        }
        if os.environ.get(ENV_MODEL):
            env["model_name"] = os.environ[ENV_MODEL]
        env.update(overrides)
        return cls(**env)

    def digest(self) -> str:
        """Stable digest of the grading-relevant fields; never includes the key."""
        public = {
            "base_url": self.base_url,
            "model_name": self.model_name,
            "max_retries": self.max_retries,
            "backoff": list(self.backoff),
            "request_timeout": self.request_timeout,
            "temperature": self.temperature,
            "seed": self.seed,
        }
        return hashlib.sha256(json.dumps(public, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class JudgePrompt:
    kind: str
    case_id: str
    system_text: str
    user_text: str
    # (role, handle) pairs; exactly one generated image for verdict and
    # answer-set prompts
    images: tuple[tuple[str, str], ...] = ()
    checkpoint_ids: tuple[str, ...] = ()
    dimensions: tuple[str, ...] = ()

    def canonical_bytes(self) -> bytes:
        payload = {
            "kind": self.kind,
            "case_id": self.case_id,
            "system_text": self.system_text,
            "user_text": self.user_text,
            "images": [list(pair) for pair in self.images],
            "checkpoint_ids": list(self.checkpoint_ids),
            "dimensions": list(self.dimensions),
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


@dataclass(frozen=True)
class VerdictBatch:
    case_id: str
    verdicts: tuple[Verdict, ...]
    raw_response: str
    attempt_count: int


_VERDICT_SYSTEM = (
    "You are a strict visual verifier for multi-image generation. "
    "Judge only what is actually visible in the generated image. "
    "Reply with machine-readable JSON and nothing else."
)

_CHECKPOINT_SYSTEM = (
    "You design verifiable evaluation checkpoints for image generation cases. "
    "Every checkpoint must be a binary, visually checkable condition. "
    "Reply with machine-readable JSON and nothing else."
)

_ANSWER_SET_SYSTEM = (
    "You grade how well a generated story continuation matches canonical "
    "human-written outcomes. Reply with machine-readable JSON and nothing else."
)


def render_eval_prompt(case: EvalCase, generated_image: str, checkpoints: tuple[Checkpoint, ...] | None = None) -> JudgePrompt:
    """Verdict request: all checkpoints listed in manifest order.

    The reply contract is a JSON object mapping every checkpoint id to
    {"pass": bool, "why": str}. Rendering is byte-deterministic.
    """
    if not Path(generated_image).is_file():
        raise FileNotFoundError(f"generated image not readable: {generated_image}")
    cps = case.checkpoints if checkpoints is None else checkpoints
    if not cps:
        raise CoverageError(f"case {case.case_id} has no checkpoints to judge")

    lines = [
        f"Instruction given to the generator:\n{case.instruction}",
        "",
        f"The first {len(case.reference_images)} image(s) are the references, "
        "in order; the final image is the generated result.",
        "",
        "Decide pass or fail for every checkpoint below:",
    ]
    for cp in cps:
        tag = "hard constraint" if cp.hard else "checkpoint"
        lines.append(f"- {cp.id} [{cp.dimension.letter}, {tag}]: {cp.question}")
    lines += [
        "",
        'Reply with ONE JSON object mapping every checkpoint id to '
        '{"pass": true|false, "why": "<short justification>"}. '
        "Include every id exactly once. No other text.",
    ]
    images = tuple((ROLE_REFERENCE, handle) for handle in case.reference_images)
    images += ((ROLE_GENERATED, generated_image),)
    return JudgePrompt(
        kind=KIND_VERDICTS,
        case_id=case.case_id,
        system_text=_VERDICT_SYSTEM,
        user_text="\n".join(lines),
        images=images,
        checkpoint_ids=tuple(cp.id for cp in cps),
        dimensions=tuple(d.letter for d in case.dimensions),
    )


def render_checkpoint_prompt(case: EvalCase) -> JudgePrompt:
    """Checkpoint-generation request for a case without checkpoints."""
    dims = case.dimensions
    lines = [
        f"Instruction given to the generator:\n{case.instruction}",
        "",
        "Design evaluation checkpoints for this case. Active dimensions:",
    ]
    for d in dims:
        lines.append(f"- {d.letter}: {DIMENSION_TITLES[d]}")
    lines += [
        "",
        "Rules: 2-4 binary checkpoints per dimension; mark exactly one "
        "checkpoint per dimension as the hard constraint (the most essential "
        'condition); ids follow the pattern "<letter>_check_<n>".',
        "",
        'Reply with ONE JSON object mapping each dimension letter to a list '
        'of {"id": str, "question": str, "hard": true|false}. No other text.',
    ]
    return JudgePrompt(
        kind=KIND_CHECKPOINTS,
        case_id=case.case_id,
        system_text=_CHECKPOINT_SYSTEM,
        user_text="\n".join(lines),
        images=tuple((ROLE_REFERENCE, h) for h in case.reference_images),
        dimensions=tuple(d.letter for d in dims),
    )


def render_answer_set_prompt(case: EvalCase, generated_image: str) -> JudgePrompt:
    """Answer-set scoring request for a story case (integer rubric 0-10)."""
    if case.answer_set is None:
        raise CoverageError(f"case {case.case_id} has no answer set")
    if not Path(generated_image).is_file():
        raise FileNotFoundError(f"generated image not readable: {generated_image}")
    ans = case.answer_set
    lines = [
        f"Instruction given to the generator:\n{case.instruction}",
        "",
        "Canonical human-written answer set:",
        f"Narrative: {ans.narrative}",
        "Likely outcomes:",
    ]
    lines += [f"- {o}" for o in ans.likely_outcomes]
    if ans.counterfactuals:
        lines.append("Unlikely (counterfactual) outcomes:")
        lines += [f"- {o}" for o in ans.counterfactuals]
    lines += [
        "",
        "Rate on an INTEGER scale from 0 to 10 how well the generated image "
        "matches the canonical outcomes, considering causal progression, "
        "visual evidence, and story resolution.",
        'Reply with ONE JSON object: {"score": <integer 0-10>}. No other text.',
    ]
    images = tuple((ROLE_REFERENCE, h) for h in case.reference_images)
    images += ((ROLE_GENERATED, generated_image),)
    return JudgePrompt(
        kind=KIND_ANSWER_SET,
        case_id=case.case_id,
        system_text=_ANSWER_SET_SYSTEM,
        user_text="\n".join(lines),
        images=images,
    )


class TransientTransportFailure(Exception):
    """Retryable transport failure: HTTP 429/5xx or a timeout."""


_IMAGE_MIME = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg", ".webp": "image/webp"}


def _image_part(handle: str) -> dict:
    if handle.startswith(("http://", "https://")):
        url = handle
    else:
        mime = _IMAGE_MIME.get(Path(handle).suffix.lower(), "application/octet-stream")
        data = base64.b64encode(Path(handle).read_bytes()).decode("ascii")
        url = f"data:{mime};base64,{data}"
    return {"type": "image_url", "image_url": {"url": url}}


class HttpJudgeTransport:
    """Chat-completions transport over httpx."""

    def __init__(self, cfg: JudgeConfig, httpx_transport: httpx.BaseTransport | None = None):
        if not cfg.base_url:
            raise ConfigError(f"judge base_url is empty; set {ENV_BASE_URL}")
        self._cfg = cfg
        self._client = httpx.Client(timeout=cfg.request_timeout, transport=httpx_transport)

    def send(self, prompt: JudgePrompt) -> str:
        cfg = self._cfg
        content = [{"type": "text", "text": prompt.user_text}]
        content += [_image_part(handle) for _, handle in prompt.images]
        payload = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": content},
            ],
        }
        if cfg.seed is not None:
            payload["seed"] = cfg.seed
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise TransientTransportFailure(f"timeout talking to judge: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"judge request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientTransportFailure(f"judge returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise TransportError(f"judge returned HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion envelope: {exc}") from exc

    def close(self):
        self._client.close()


def _rule_hash(*parts: str) -> int:
    return hashlib.sha256("|".join(parts).encode("utf-8")).digest()[0]


class StubJudgeTransport:
    """Deterministic offline judge.

    Fixture mode replays canned replies keyed by case id; rule mode derives
    verdicts from a stable hash of (case id, checkpoint id). A concurrency
    counter records the peak number of in-flight sends, so tests can assert
    the client's concurrency bound.
    """

    def __init__(self, fixtures: dict | str | Path | None = None):
        if isinstance(fixtures, (str, Path)):
            fixtures = json.loads(Path(fixtures).read_text(encoding="utf-8"))
        self.fixtures = fixtures or {}
        self._lock = threading.Lock()
        self._in_flight = 0
        self.peak_in_flight = 0
        self.send_count = 0

    def _reply(self, prompt: JudgePrompt) -> str:
        if prompt.kind == KIND_VERDICTS:
            canned = self.fixtures.get("verdicts", {}).get(prompt.case_id)
            if canned is not None:
                picked = {cid: canned[cid] for cid in prompt.checkpoint_ids if cid in canned}
                return json.dumps(picked)
            out = {}
            for cid in prompt.checkpoint_ids:
                passed = _rule_hash(prompt.case_id, cid) >= 64
                out[cid] = {"pass": passed, "why": "stub rule verdict"}
            return json.dumps(out)
        if prompt.kind == KIND_ANSWER_SET:
            canned = self.fixtures.get("answer_scores", {}).get(prompt.case_id)
            if canned is not None:
                return json.dumps({"score": canned})
            return json.dumps({"score": _rule_hash(prompt.case_id, "answer_set") % 11})
        if prompt.kind == KIND_CHECKPOINTS:
            canned = self.fixtures.get("checkpoints", {}).get(prompt.case_id)
            if canned is not None:
                return json.dumps(canned)
            out = {}
            for letter in prompt.dimensions:
                out[letter] = [
                    {
                        "id": f"{letter}_check_{i + 1}",
                        "question": f"Stub condition {i + 1} for dimension {letter}.",
                        "hard": i == 0,
                    }
                    for i in range(2)
                ]
            return json.dumps(out)
        raise TransportError(f"stub cannot answer prompt kind {prompt.kind!r}")

    def send(self, prompt: JudgePrompt) -> str:
        with self._lock:
            self._in_flight += 1
            self.send_count += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            return self._reply(prompt)
        finally:
            with self._lock:
                self._in_flight -= 1


def _parse_json_object(text: str) -> dict | None:
    text = (text or "").strip()
    if not text:
        return None
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start : end + 1])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            return None
    return None


class VerdictCache:
    """Content-addressed cache keyed by case, image digest, model, prompt.

    Guarantees at-most-once remote evaluation per distinct input; access is
    serialized so concurrent case workers cannot race a given entry.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(kind: str, case_id: str, image_digest: str, model_name: str, prompt_digest: str) -> dict:
        return {
            "kind": kind,
            "case_id": case_id,
            "image_digest": image_digest,
            "model_name": model_name,
            "prompt_digest": prompt_digest,
        }

    def _path(self, key: dict) -> Path:
        digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode("utf-8")).hexdigest()
        return self.directory / f"{digest}.json"

    def get(self, key: dict) -> dict | None:
        with self._lock:
            path = self._path(key)
            if not path.is_file():
                return None
            return json.loads(path.read_text(encoding="utf-8"))["payload"]

    def put(self, key: dict, payload: dict) -> None:
        with self._lock:
            entry = {"key": key, "payload": payload}
            self._path(key).write_text(json.dumps(entry, indent=2), encoding="utf-8")


class JudgeClient:
    """Retry, parse, and coverage logic around a transport."""

    def __init__(
        self,
        cfg: JudgeConfig,
        transport=None,
        cache: VerdictCache | None = None,
        transcript_path: str | Path | None = None,
        sleep=time.sleep,
    ):
        self.cfg = cfg
        self.transport = transport if transport is not None else HttpJudgeTransport(cfg)
        self.cache = cache
        self._semaphore = threading.Semaphore(cfg.max_concurrent)
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self._transcript_lock = threading.Lock()
        self._sleep = sleep

    def _log_transcript(self, prompt: JudgePrompt, response: str, attempts: int) -> None:
        if self._transcript_path is None:
            return
        record = {
            "kind": prompt.kind,
            "case_id": prompt.case_id,
            "prompt_digest": prompt.digest(),
            "user_text": prompt.user_text,
            "response": response,
            "attempts": attempts,
        }
        with self._transcript_lock:
            with self._transcript_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def _send(self, prompt: JudgePrompt) -> tuple[str, int]:
        """One logical request: bounded concurrency, transient retries."""
        attempts = 0
        last_failure = None
        with self._semaphore:
            while attempts <= self.cfg.max_retries:
                attempts += 1
                try:
                    content = self.transport.send(prompt)
                    self._log_transcript(prompt, content, attempts)
                    return content, attempts
                except TransientTransportFailure as exc:
                    last_failure = exc
                    if attempts <= self.cfg.max_retries:
                        delay = self.cfg.backoff[min(attempts - 1, len(self.cfg.backoff) - 1)]
                        if delay > 0:
                            self._sleep(delay)
        raise TransportError(
            f"judge unreachable after {attempts} attempts: {last_failure}"
        )

    def _ask_json(self, prompt: JudgePrompt) -> tuple[dict, str, int]:
        """Send, parse; one re-ask with a format reminder on parse failure."""
        content, attempts = self._send(prompt)
        parsed = _parse_json_object(content)
        if parsed is not None:
            return parsed, content, attempts
        retry_prompt = replace(prompt, user_text=prompt.user_text + _FORMAT_REMINDER)
        content2, attempts2 = self._send(retry_prompt)
        parsed = _parse_json_object(content2)
        if parsed is not None:
            return parsed, content2, attempts + attempts2
        raise JudgeParseError(
            f"case {prompt.case_id}: judge reply is not valid JSON even after a re-ask",
            raw_response=content2,
        )

    def request_verdicts(self, prompt: JudgePrompt) -> VerdictBatch:
        """Verdicts covering exactly the prompt's checkpoint ids."""
        parsed, raw, attempts = self._ask_json(prompt)

        verdicts = {}
        malformed = []
        for cid, value in parsed.items():
            if not isinstance(value, dict) or not isinstance(value.get("pass"), bool):
                malformed.append(cid)
                continue
            verdicts[cid] = Verdict(
                checkpoint_id=cid,
                passed=value["pass"],
                justification=str(value.get("why", "")),
            )
        if malformed:
            raise JudgeParseError(
                f"case {prompt.case_id}: malformed verdict entries for {sorted(malformed)}",
                raw_response=raw,
            )

        expected = set(prompt.checkpoint_ids)
        missing = sorted(expected - verdicts.keys())
        extra = sorted(verdicts.keys() - expected)
        if missing or extra:
            raise CoverageError(
                f"case {prompt.case_id}: verdict coverage gap: missing={missing} extra={extra}",
                missing=missing,
                extra=extra,
            )
        ordered = tuple(verdicts[cid] for cid in prompt.checkpoint_ids)
        return VerdictBatch(
            case_id=prompt.case_id,
            verdicts=ordered,
            raw_response=raw,
            attempt_count=attempts,
        )

    def verdicts_for_case(self, case: EvalCase, generated_image: str, per_checkpoint: bool = False) -> VerdictBatch:
        """High-level verdict request; optionally one request per checkpoint."""
        if not per_checkpoint:
            return self.request_verdicts(render_eval_prompt(case, generated_image))
        verdicts: list[Verdict] = []
        raws = []
        attempts = 0
        for cp in case.checkpoints:
            batch = self.request_verdicts(render_eval_prompt(case, generated_image, checkpoints=(cp,)))
            verdicts.extend(batch.verdicts)
            raws.append(batch.raw_response)
            attempts += batch.attempt_count
        return VerdictBatch(
            case_id=case.case_id,
            verdicts=tuple(verdicts),
            raw_response="\n".join(raws),
            attempt_count=attempts,
        )

    def generate_checkpoints(self, case: EvalCase) -> list[Checkpoint]:
        """Ask the judge to author checkpoints; structural rules enforced.

        A reply violating the rules (2-4 per active dimension, exactly one
        hard each) is re-asked once, then raises GenerationError.
        """
        prompt = render_checkpoint_prompt(case)
        parsed, raw, _ = self._ask_json(prompt)
        checkpoints, problems = self._checkpoints_from_reply(case, parsed)
        if not problems:
            return checkpoints
        retry_prompt = replace(
            prompt,
            user_text=prompt.user_text
            + "\n\nREMINDER: the previous reply violated the rules ("
            + "; ".join(problems)
            + "). Fix these and reply again with ONLY the JSON object.",
        )
        parsed, raw, _ = self._ask_json(retry_prompt)
        checkpoints, problems = self._checkpoints_from_reply(case, parsed)
        if problems:
            raise GenerationError(
                f"case {case.case_id}: generated checkpoints invalid after re-ask: "
                + "; ".join(problems),
                raw_response=raw,
            )
        return checkpoints

    @staticmethod
    def _checkpoints_from_reply(case: EvalCase, parsed: dict) -> tuple[list[Checkpoint], list[str]]:
        problems = []
        checkpoints: list[Checkpoint] = []
        active = {d.letter for d in case.dimensions}
        for letter in sorted(parsed.keys()):
            if letter not in active:
                problems.append(f"dimension {letter} is not active for this case")
                continue
            entries = parsed[letter]
            if not isinstance(entries, list) or not 2 <= len(entries) <= 4:
                problems.append(f"dimension {letter} needs 2-4 checkpoints")
                continue
            hard_count = 0
            for entry in entries:
                if not isinstance(entry, dict) or "id" not in entry or "question" not in entry:
                    problems.append(f"dimension {letter} has a malformed checkpoint entry")
                    continue
                hard = bool(entry.get("hard", False))
                hard_count += hard
                checkpoints.append(
                    Checkpoint(
                        id=str(entry["id"]),
                        dimension=EvalDimension.from_letter(letter),
                        question=str(entry["question"]),
                        hard=hard,
                    )
                )
            if hard_count != 1:
                problems.append(f"dimension {letter} has {hard_count} hard checkpoints, expected 1")
        covered = {c.dimension.letter for c in checkpoints}
        for letter in sorted(active - covered):
            problems.append(f"active dimension {letter} has no checkpoints")
        ids = [c.id for c in checkpoints]
        if len(set(ids)) != len(ids):
            problems.append("checkpoint ids are not unique")
        return checkpoints, problems

    def score_answer_set(self, case: EvalCase, generated_image: str) -> float:
        """Integer 0-10 rubric from the judge, rescaled to [0, 100]."""
        prompt = render_answer_set_prompt(case, generated_image)
        parsed, raw, _ = self._ask_json(prompt)
        score = self._extract_rubric_score(parsed)
        if score is None:
            retry_prompt = replace(
                prompt,
                user_text=prompt.user_text
                + '\n\nREMINDER: reply with exactly {"score": <integer 0-10>}.',
            )
            parsed, raw, _ = self._ask_json(retry_prompt)
            score = self._extract_rubric_score(parsed)
            if score is None:
                raise JudgeParseError(
                    f"case {case.case_id}: answer-set score is not an integer in 0-10",
                    raw_response=raw,
                )
        return float(score) * 10.0

    @staticmethod
    def _extract_rubric_score(parsed: dict) -> int | None:
        value = parsed.get("score")
        if isinstance(value, bool) or not isinstance(value, int):
            return None
        if not 0 <= value <= 10:
            return None
        return value
