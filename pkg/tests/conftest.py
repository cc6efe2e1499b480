from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _no_ambient_model_config(monkeypatch):
    # bundled transcripts are keyed on the default model name
    for var in ("MAGIC_MARKUP_API_KEY", "MAGIC_MARKUP_API_BASE", "MAGIC_MARKUP_MODEL"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def numitems():
    d = FIXTURES / "numitems"
    return {
        "original": (d / "original.c").read_text(encoding="utf-8"),
        "updated": (d / "updated.c").read_text(encoding="utf-8"),
        "prompt": (d / "golden_prompt.txt").read_text(encoding="utf-8"),
        "answer": (d / "answer.json").read_text(encoding="utf-8"),
    }
