"""Language prompts combining an object name with an action narration."""

from __future__ import annotations

STYLES = ("no-action", "comma-action", "sentence-action")


def _norm(text: str) -> str:
    return " ".join(text.split())


def build_prompt(object_name: str, narration: str | None, style: str = "sentence-action") -> str:
    """Build a text prompt.

    >>> build_prompt("knife", "cut apple", "sentence-action")
    'knife used in the action of cut apple'
    """
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}, got {style!r}")
    obj = _norm(object_name or "")
    if not obj:
        raise ValueError("object name must be nonempty")
    if style == "no-action":
        return obj
    action = _norm(narration or "")
    if not action:
        raise ValueError(f"style {style!r} needs a nonempty narration")
    if style == "comma-action":
        return f"{obj}, {action}"
    return f"{obj} used in the action of {action}"
