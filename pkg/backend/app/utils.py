import hashlib
import logging
from pathlib import Path
from typing import Any

from jinja2 import Template

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"


def render_template(*, template_name: str, context: dict[str, Any]) -> str:
    template_str = (TEMPLATE_DIR / template_name).read_text(encoding="utf-8")
    return Template(template_str, keep_trailing_newline=True).render(context)


def config_hash(canonical: str) -> str:
    """Stable digest of a canonical (sorted-key) JSON document."""
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
