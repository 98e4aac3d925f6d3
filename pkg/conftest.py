# conftest.py
import pytest
from django.conf import settings


def pytest_collection_modifyitems(config, items):
    """Acceptance runs marked `slow` only execute with GRASPFORGE_RUN_SLOW=1."""
    if settings.GRASPFORGE_RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="slow acceptance run; set GRASPFORGE_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
