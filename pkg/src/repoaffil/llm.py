"""Chat-endpoint affiliation classification: prompt assembly and verdict parsing.

The prompt embeds the canonical affiliation definition, the repository's
assembled metadata (20,000-character field limit), and the institution's
keyword context, then demands a two-line Probability/Explanation answer.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import requests

from .errors import FormatError, ServiceError
from .model import (
    ContributorRecord,
    InstitutionProfile,
    OrgRecord,
    RepoRecord,
    affiliation_definition_text,
)
from .textprep import assemble_text

logger = logging.getLogger(__name__)

LLM_FIELD_LIMIT = 20_000
DEFAULT_MAX_OUTPUT_TOKENS = 150

PROMPT_TEMPLATE = """\
You are tasked with determining the likelihood that a GitHub repository belongs to a university based on the following definition:

Definition:
{definition}

Here is the information about the repository:
{repository_information}

And here is the university context:
{university_context}

Based on this information and the definition above:
- Estimate the probability between 0 and 1 (e.g., 0.87) representing how likely it is that the repository belongs to the university.
- Provide a brief explanation (1-2 sentences) justifying your answer.

Your response must be formatted exactly like this:
Probability: <value between 0 and 1>
Explanation: <your explanation here>
"""

FORMAT_REMINDER = (
    "Your previous answer did not follow the required format. Reply with exactly "
    "two lines:\nProbability: <value between 0 and 1>\nExplanation: <your explanation here>"
)

_PROBABILITY_LINE = re.compile(
    r"^\s*(?:[-*•]+\s*)?probability\s*:\s*(\S+)\s*$", re.IGNORECASE
)
_EXPLANATION_LINE = re.compile(
    r"^\s*(?:[-*•]+\s*)?explanation\s*:\s*(.*)$", re.IGNORECASE
)
_NUMBER = re.compile(r"^[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?$")


@dataclass(frozen=True)
class ModelParams:
    """Chat-call parameters; temperature 0 and a fixed seed for reproducibility."""

    model: str
    temperature: float = 0.0
    seed: Optional[int] = None
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    @property
    def tag(self) -> str:
        return f"{self.model}:seed={self.seed}" if self.seed is not None else self.model


@dataclass(frozen=True)
class ClassificationPrompt:
    repo_id: str
    institution_id: str
    user_text: str
    params: ModelParams
    field_limit: int = LLM_FIELD_LIMIT


@dataclass(frozen=True)
class ParsedVerdict:
    probability: float
    explanation: str
    raw_response: str


def _university_context(profile: InstitutionProfile) -> str:
    return "\n".join(
        (
            f"University name: {profile.name}",
            f"University acronym: {profile.acronym}",
            f"University domain: {profile.domain}",
            f"University alternate names: {', '.join(profile.alternates)}",
        )
    )


def build_prompt(
    repo: RepoRecord,
    org: Optional[OrgRecord],
    top2: Sequence[ContributorRecord],
    profile: InstitutionProfile,
    params: ModelParams,
    field_limit: int = LLM_FIELD_LIMIT,
) -> ClassificationPrompt:
    """Render the deterministic classification prompt for one repository."""
    assembled = assemble_text(repo, org, top2, field_limit=field_limit)
    user_text = PROMPT_TEMPLATE.format(
        definition=affiliation_definition_text(),
        repository_information=assembled.text,
        university_context=_university_context(profile),
    )
    return ClassificationPrompt(
        repo_id=repo.repo_id,
        institution_id=profile.id,
        user_text=user_text,
        params=params,
        field_limit=field_limit,
    )


def render_verdict(probability: float, explanation: str) -> str:
    """The canonical response format; parse_verdict inverts it."""
    return f"Probability: {probability:.2f}\nExplanation: {explanation}"


def parse_verdict(raw: str) -> ParsedVerdict:
    """Parse a Probability/Explanation response.

    Tolerates list markers, case variance, and surrounding whitespace. The
    probability comes from the first matching line and must be a decimal in
    [0, 1]; the explanation is that line's remainder plus following lines up
    to the first blank one.
    """
    if not isinstance(raw, str):
        raise FormatError("response is not text", raw_response=repr(raw))
    lines = raw.splitlines()
    probability: Optional[float] = None
    for line in lines:
        m = _PROBABILITY_LINE.match(line)
        if not m:
            continue
        token = m.group(1)
        if not _NUMBER.match(token):
            continue  # "Probability: high" is not a contract match; keep scanning
        value = float(token)
        if not 0.0 <= value <= 1.0:
            raise FormatError(f"probability {value} outside [0, 1]", raw_response=raw)
        probability = value
        break
    if probability is None:
        raise FormatError("no probability line found", raw_response=raw)

    explanation_parts: list[str] = []
    for i, line in enumerate(lines):
        m = _EXPLANATION_LINE.match(line)
        if m:
            explanation_parts.append(m.group(1).strip())
            for follow in lines[i + 1 :]:
                if not follow.strip():
                    break
                explanation_parts.append(follow.strip())
            break
    explanation = " ".join(part for part in explanation_parts if part).strip()
    if not explanation:
        raise FormatError("no explanation line found", raw_response=raw)
    return ParsedVerdict(probability=probability, explanation=explanation, raw_response=raw)


class ChatClient:
    """Minimal chat-completions client for any service speaking that shape."""

    def __init__(
        self,
        base_url: str,
        api_key: Optional[str] = None,
        session: Optional[requests.Session] = None,
        timeout: float = 60.0,
        max_retries: int = 5,
        backoff_base: float = 2.0,
        sleep=None,
        run_log=None,
    ):
        self.base_url = base_url.rstrip("/")
        self._headers = {"Content-Type": "application/json"}
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"
        self._session = session or requests.Session()
        self._timeout = timeout
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        import time as _time

        self._sleep = sleep or _time.sleep
        self._run_log = run_log

    def complete(self, messages: list[dict], params: ModelParams) -> str:
        body: dict = {
            "model": params.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        last_error: Optional[Exception] = None
        for attempt in range(self._max_retries):
            try:
                response = self._session.post(
                    f"{self.base_url}/v1/chat/completions",
                    json=body,
                    headers=self._headers,
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                self._sleep(self._backoff_base * (2**attempt))
                continue
            if response.status_code in (429, 500, 502, 503):
                last_error = ServiceError(
                    f"chat endpoint returned {response.status_code}"
                )
                self._sleep(self._backoff_base * (2**attempt))
                continue
            if response.status_code != 200:
                raise ServiceError(
                    f"chat endpoint returned {response.status_code}: {response.text[:200]}"
                )
            payload = response.json()
            try:
                content = payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ServiceError(f"malformed chat response: {exc}") from exc
            usage = payload.get("usage") or {}
            if self._run_log is not None:
                self._run_log.event(
                    "llm_usage",
                    model=params.model,
                    input_tokens=usage.get("prompt_tokens"),
                    output_tokens=usage.get("completion_tokens"),
                )
            return content
        raise ServiceError(f"chat endpoint unreachable after retries: {last_error}")


def classify_llm(
    prompt: ClassificationPrompt,
    client: ChatClient,
    parse_retries: int = 3,
) -> ParsedVerdict:
    """Send the prompt, parse the verdict, re-asking with a format reminder.

    Raises FormatError (with the raw response attached) when the model never
    produces a parseable answer; callers flag the repo for review and move on.
    """
    messages = [{"role": "user", "content": prompt.user_text}]
    last_raw = ""
    for attempt in range(parse_retries):
        raw = client.complete(messages, prompt.params)
        last_raw = raw
        try:
            return parse_verdict(raw)
        except FormatError as exc:
            logger.warning(
                "unparseable verdict for %s (attempt %d): %s",
                prompt.repo_id,
                attempt + 1,
                exc,
            )
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": FORMAT_REMINDER},
            ]
    raise FormatError(
        f"no parseable verdict for {prompt.repo_id} after {parse_retries} attempts",
        raw_response=last_raw,
    )
