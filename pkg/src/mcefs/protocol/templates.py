from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from ..corpus import AbscInstance
from ..errors import ConfigError
from ..records import sha256_hex

PLACEHOLDERS = frozenset({"sentence", "aspect", "gold", "praise", "n"})
REQUIRED = (
    "zero_shot",
    "fewshot_answer",
    "feedback_correct_praise",
    "feedback_correct",
    "feedback_incorrect",
    "praise_request",
    "praise_retry",
)
_FIELD = re.compile(r"\{(\w+)\}")


def fill(template: str, **values: object) -> str:
    """Substitute ``{name}`` placeholders; everything else is literal text."""
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise KeyError(f"template needs {{{name}}}")
        return str(values[name])
    return _FIELD.sub(sub, template)


@dataclass(frozen=True)
class Templates:
    zero_shot: str
    fewshot_answer: str
    feedback_correct_praise: str
    feedback_correct: str
    feedback_incorrect: str
    praise_request: str
    praise_retry: str
    source_text: str = ""

    @property
    def sha256(self) -> str:
        return sha256_hex(self.source_text)

    @classmethod
    def parse(cls, text: str) -> Templates:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"bad template file: {exc}") from exc
        if "absc" not in cp:
            raise ConfigError("template file has no [absc] section")
        sect = cp["absc"]
        missing = [k for k in REQUIRED if k not in sect]
        if missing:
            raise ConfigError(f"template file missing keys: {missing}")
        for key in REQUIRED:
            unknown = set(_FIELD.findall(sect[key])) - PLACEHOLDERS
            if unknown:
                raise ConfigError(f"{key}: unknown placeholders {sorted(unknown)}")
        return cls(**{k: sect[k].strip() for k in REQUIRED}, source_text=text)

    @classmethod
    def load(cls, path: str | Path | None = None) -> Templates:
        if path is None:
            text = resources.files("mcefs").joinpath("data/default_templates.ini").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.parse(text)


@lru_cache(maxsize=1)
def default_templates() -> Templates:
    return Templates.load()


def render_zero_shot(instance: AbscInstance, templates: Templates | None = None) -> str:
    t = templates or default_templates()
    return fill(t.zero_shot, sentence=instance.sentence, aspect=instance.aspect_term)
