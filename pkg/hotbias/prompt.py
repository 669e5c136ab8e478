"""Structured bias prompt rendering and parsing.

The prompt with no hotwords is the context-free prompt used by the baseline
and by the context-free branch of joint decoding.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

from hotbias.exceptions import ValidationError
from hotbias.retriever import RetrievalResult

LEFT_BRACKET = "⟨"
RIGHT_BRACKET = "⟩"

DEFAULT_INSTRUCTION = "Transcribe the audio into text."
DEFAULT_BIAS_LEAD = "These biasing words you may use:"

_BRACKETED_RE = re.compile(
    f"{LEFT_BRACKET}([^{LEFT_BRACKET}{RIGHT_BRACKET}]*){RIGHT_BRACKET}"
)


@dataclass(frozen=True)
class PromptTemplate:
    """Wording of the bias prompt.

    Args:
        instruction: Sentence rendered on its own for the context-free prompt.
        bias_lead: Text placed between the instruction and the bracketed words.

    Raises:
        ValidationError: If either part is empty or contains a bracket character.
    """

    instruction: str = DEFAULT_INSTRUCTION
    bias_lead: str = DEFAULT_BIAS_LEAD

    def __post_init__(self) -> None:
        parts = (("instruction", self.instruction), ("bias_lead", self.bias_lead))
        for name, value in parts:
            if not value.strip() or LEFT_BRACKET in value or RIGHT_BRACKET in value:
                raise ValidationError(
                    message=f"Prompt template {name} must be non-empty and free of "
                    "bracket characters.",
                    details={name: value},
                )


DEFAULT_TEMPLATE = PromptTemplate()


@dataclass(frozen=True)
class BiasPrompt:
    """A rendered prompt and the hotwords it lists, in rank order."""

    hotwords: Tuple[str, ...]
    rendered: str

    @property
    def is_context_free(self) -> bool:
        """True when no hotword is listed."""

        return not self.hotwords


def build_prompt(
    candidates: Union[RetrievalResult, Sequence[str]],
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> BiasPrompt:
    """Render the bias prompt for `candidates`.

    Args:
        candidates: A retrieval result (rank order is kept) or plain hotwords.
        template: Prompt wording.

    Returns:
        `BiasPrompt` whose `rendered` text is the instruction alone for an empty
        list, otherwise the instruction, the bias lead and every hotword wrapped
        in U+27E8 / U+27E9, single-space separated.

    Raises:
        ValidationError: If a hotword is empty or contains a bracket character.
    """

    if isinstance(candidates, RetrievalResult):
        hotwords = tuple(candidates.surfaces())
    else:
        hotwords = tuple(candidates)
    for word in hotwords:
        if not word or LEFT_BRACKET in word or RIGHT_BRACKET in word:
            raise ValidationError(
                message=f"Hotword {word!r} cannot be placed in a prompt.",
                details={"hotword": word},
            )
    if not hotwords:
        return BiasPrompt(hotwords=(), rendered=template.instruction)
    listed = " ".join(f"{LEFT_BRACKET}{word}{RIGHT_BRACKET}" for word in hotwords)
    rendered = f"{template.instruction} {template.bias_lead} {listed}"
    return BiasPrompt(hotwords=hotwords, rendered=rendered)


def context_free_prompt(template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    """Rendered prompt with no biasing words."""

    return build_prompt((), template).rendered


def parse_prompt(rendered: str) -> List[str]:
    """Extract the bracketed hotwords of a rendered prompt, in order."""

    return _BRACKETED_RE.findall(rendered)
