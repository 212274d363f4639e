from __future__ import annotations

import numpy as np
import pytest

from gapalign.phoneset import default_inventory, toy_inventory
from gapalign.posterior import from_probabilities


@pytest.fixture(scope="session")
def full_inv():
    return default_inventory()


@pytest.fixture(scope="session")
def toy_inv():
    # 5 phonemes: SIL=0, a=1, t=2, k=3, s=4; blank=5
    return toy_inventory()


TOY_INVENTORY_DOC = """\
[PHONEMES]
SIL
a
t
k
s

[GROUPS]
silence
speech

[GROUPMAP]
SIL silence
a speech
t speech
k speech
s speech

[IPAMAP]
a a
t t
k k
s s

[SPECIAL]
silence SIL
blank <blank>
"""


@pytest.fixture(scope="session")
def toy_inventory_path(tmp_path_factory):
    """The toy inventory as a document on disk, for --inventory flags."""
    path = tmp_path_factory.mktemp("inv") / "toy_inventory.txt"
    path.write_text(TOY_INVENTORY_DOC, encoding="utf-8")
    return path


def pgram_from(rows, hop=10.0, offset=0.0, head="phoneme"):
    """Posteriorgram from probability-space rows; zeros become -inf."""
    return from_probabilities(np.asarray(rows, dtype=np.float64), hop, offset, head)
