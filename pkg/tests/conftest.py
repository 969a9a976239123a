import logging

import pytest
from hypothesis import settings
from rich.logging import RichHandler

from winsketch.profiles import ProfileRegistry

FORMAT = "%(message)s"
logging.basicConfig(
    level=logging.INFO, format=FORMAT, datefmt="[%X]", handlers=[RichHandler(markup=True)]
)

settings.register_profile("winsketch", deadline=None, max_examples=50)
settings.load_profile("winsketch")


@pytest.fixture
def fresh_registry():
    """
    Forget the profile registry singleton before and after a test.
    """
    ProfileRegistry._instance = None
    yield
    ProfileRegistry._instance = None
