import pytest

from fraclk.rifs import load_model, model_from_dict


def line_model(atoms, base=(0, 1), name="test"):
    """Atoms as ``[(p, [(ratio, shift), ...]), ...]``."""
    return model_from_dict({
        "name": name, "dimension": 1, "base": list(base),
        "atoms": [{"probability": p, "maps": [{"ratio": r, "translation": [s]} for r, s in maps]}
                  for p, maps in atoms],
    })


@pytest.fixture(scope="session")
def cantor():
    return load_model("cantor")


@pytest.fixture(scope="session")
def random_cantor():
    return load_model("random-cantor")


@pytest.fixture(scope="session")
def sierpinski():
    return load_model("sierpinski")


@pytest.fixture(scope="session")
def dust4():
    return load_model("dust4")


@pytest.fixture(scope="session")
def random_dust():
    return load_model("random-dust")
