"""Few-shot prompt assembly and template file loading.

Template file format: free-text preamble, a delimiter line consisting of
exactly ``---``, then alternating ``Q:`` / ``A:`` lines forming the
few-shot example pairs. The loader re-reads the file on demand and bumps
the template version whenever the file content changes.
"""

from __future__ import annotations

import hashlib
import threading
from importlib import resources
from pathlib import Path

from .domain import (
    MAX_QUESTION_CHARS,
    PromptTemplate,
    TranslatedQuestion,
    sanitize_spoken_text,
)
from .errors import QuestionTooLong, TemplateFormatError

DEFAULT_TEMPLATE_RESOURCE = "templates/default.txt"


def assemble_prompt(template: PromptTemplate, question: TranslatedQuestion) -> str:
    """Build the full generation prompt for one visitor question.

    The preamble comes first, then every few-shot pair in template order,
    then the sanitized visitor question as the final unanswered ``Q:``.
    """
    text = sanitize_spoken_text(question.english_text)
    if len(text) > MAX_QUESTION_CHARS:
        raise QuestionTooLong(f"question exceeds {MAX_QUESTION_CHARS} characters after sanitization")
    parts = [template.preamble, "\n"]
    for example_question, example_prophecy in template.few_shot:
        parts.append(f"Q: {example_question}\nA: {example_prophecy}\n")
    parts.append(f"Q: {text}\nA:")
    return "".join(parts)


def parse_template(text: str, version: int = 1) -> PromptTemplate:
    """Parse the preamble/``---``/Q-A file format into a PromptTemplate."""
    lines = text.split("\n")
    try:
        delimiter = lines.index("---")
    except ValueError:
        raise TemplateFormatError("template file has no --- delimiter line") from None

    preamble = "\n".join(lines[:delimiter]).strip()
    if not preamble:
        raise TemplateFormatError("template preamble is empty")

    pairs: list[tuple[str, str]] = []
    pending_question: str | None = None
    for lineno, line in enumerate(lines[delimiter + 1:], start=delimiter + 2):
        if not line.strip():
            continue
        if line.startswith("Q: "):
            if pending_question is not None:
                raise TemplateFormatError(f"line {lineno}: question without an answer")
            pending_question = line[3:].strip()
        elif line.startswith("A: "):
            if pending_question is None:
                raise TemplateFormatError(f"line {lineno}: answer without a question")
            pairs.append((pending_question, line[3:].strip()))
            pending_question = None
        else:
            raise TemplateFormatError(f"line {lineno}: expected a Q: or A: line")
    if pending_question is not None:
        raise TemplateFormatError("template ends with an unanswered question")
    return PromptTemplate(preamble=preamble, few_shot=tuple(pairs), version=version)


def default_template_text() -> str:
    return resources.files("prophecy_hall").joinpath(DEFAULT_TEMPLATE_RESOURCE).read_text("utf-8")


class TemplateLoader:
    """Loads a prompt template from a file, versioning it by content.

    The first load is version 1; every reload that sees different file
    content increments the version. With no path, the packaged default
    template is served at version 1 forever.
    """

    def __init__(self, path: Path | str | None = None):
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._digest: str | None = None
        self._cached: PromptTemplate | None = None
        self._version = 0

    def load(self) -> PromptTemplate:
        with self._lock:
            text = self._read()
            digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
            if digest != self._digest:
                self._version += 1
                self._cached = parse_template(text, version=self._version)
                self._digest = digest
            assert self._cached is not None
            return self._cached

    def _read(self) -> str:
        if self._path is None:
            return default_template_text()
        return self._path.read_text("utf-8")
