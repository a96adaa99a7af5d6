import pytest

from frechet_mp import mountain_pass

RUNS = []  # every mountain-pass result produced during the session


@pytest.fixture(autouse=True)
def _watch_deformations(monkeypatch):
    """Fail any test whose mountain-pass runs accept a deformation below eps*alpha/2."""
    real = mountain_pass.run
    mine = []

    def watched(*args, **kwargs):
        result = real(*args, **kwargs)
        mine.append(result)
        return result

    monkeypatch.setattr(mountain_pass, "run", watched)
    yield mine
    RUNS.extend(mine)
    bad = [d for r in mine for d in r.deformation_violations()]
    assert not bad, f"deformations below eps*alpha/2: {bad[:3]}"
