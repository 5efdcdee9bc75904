import pytest


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    """Each test gets its own experiment cache."""
    cache = tmp_path / "cache"
    monkeypatch.setenv("EMBZ_CACHE_DIR", str(cache))
    return cache
