"""Label normalization shared by post-OCR correction and entity linking."""
import re
import unicodedata

_DISALLOWED = re.compile(r"[^A-Z0-9 '\-]")
_SPACES = re.compile(r"\s+")


def normalize_label(text: str) -> str:
    """Uppercase, fold accents, keep ``[A-Z0-9 '-]``, collapse and trim whitespace.

    >>> normalize_label("  Saint-Étienne   road ")
    'SAINT-ETIENNE ROAD'
    """
    folded = unicodedata.normalize("NFKD", text)
    folded = "".join(c for c in folded if not unicodedata.combining(c)).upper()
    folded = _SPACES.sub(" ", folded)
    folded = _DISALLOWED.sub("", folded)
    return _SPACES.sub(" ", folded).strip()
