import pytest

from rwdecept.corpus import victim_tree
from rwdecept.kb import KnowledgeBase
from rwdecept.simcore import World


@pytest.fixture
def kb():
    return KnowledgeBase()


@pytest.fixture
def tree():
    return victim_tree(seed=1000)


def make_world(seed=42, tree=None):
    world = World(seed=seed)
    for path, content in (tree or {}).items():
        world.fs.seed_file(path, content)
    return world


@pytest.fixture
def world(tree):
    return make_world(seed=42, tree=tree)
