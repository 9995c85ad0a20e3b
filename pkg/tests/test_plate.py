from __future__ import annotations

import hashlib
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sha256_hex
from rnode.errors import WeakSalt
from rnode.plate import (DEFAULT_GRAMMAR, BallotReading, PlateBallot, PlateGrammar, Verdict, hash_plate, plate_regex,
                         validate, vote)
from rnode.synth import corrupt_plate, random_plate


def test_validate_exact_and_corrected():
    assert validate("KA01AB1234").verdict is Verdict.VALID
    v = validate("KA0IAB1234")  # I in a digit slot
    assert v.verdict is Verdict.CORRECTED and v.text == "KA01AB1234"
    assert validate("??").verdict is Verdict.INVALID


def test_single_repair_and_ambiguous_repair():
    table = {"O": frozenset("0"), "0": frozenset("O")}
    g = PlateGrammar(patterns=("A0",), confusion_table=table)
    assert validate("OO", g).text == "O0"
    assert validate("00", g).text == "O0"
    # two patterns each admit a different single repair
    g2 = PlateGrammar(patterns=("A0", "0A"), confusion_table=table)
    assert validate("OO", g2).verdict is Verdict.INVALID


def test_confusion_table_must_be_symmetric():
    with pytest.raises(ValueError):
        PlateGrammar(confusion_table={"O": frozenset("0")})


def test_vote_needs_min_readings():
    b = PlateBallot(1)
    b.add("KA01AB1234", 0.9, 0)
    b.add("KA01AB1234", 0.9, 1)
    assert vote(b) is None
    b.add("KA01AB1234", 0.9, 2)
    assert vote(b)[0] == "KA01AB1234"


def test_vote_confidence_sum_beats_count():
    rs = [BallotReading("KA01AB1234", 0.95, 0), BallotReading("KA01AB1234", 0.9, 1),
          BallotReading("KA01AB1284", 0.5, 2), BallotReading("KA01AB1284", 0.5, 3), BallotReading("KA01AB1284", 0.5, 4)]
    text, share = vote(rs)
    assert text == "KA01AB1234"
    assert share == pytest.approx(1.85 / 3.35)


def test_vote_tie_breaks_on_latest_frame():
    rs = [BallotReading("KA01AB1234", 0.5, 0), BallotReading("KA01AB9999", 0.5, 5), BallotReading("xx", 0.5, 6)]
    assert vote(rs, min_readings=2)[0] == "KA01AB9999"


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_vote_is_order_independent(rnd: random.Random):
    rng = np.random.default_rng(rnd.randrange(2 ** 32))
    truth = random_plate(rng)
    rs = [BallotReading(*corrupt_plate(truth, 0.2, rng), f) for f in range(7)]
    shuffled = rs[:]
    rnd.shuffle(shuffled)
    assert vote(rs) == vote(shuffled)


def test_ballot_keeps_last_capacity_readings():
    b = PlateBallot(1, capacity=3)
    for f in range(6):
        b.add("KA01AB1234", 0.5, f)
    assert [r.frame_index for r in b.readings] == [3, 4, 5]


def test_hash_plate_matches_reference():
    salt = b"0123456789abcdef"
    assert hash_plate("KA01AB1234", salt) == hashlib.sha256(salt + b"KA01AB1234").hexdigest()
    assert hash_plate("KA01AB1234", salt) == sha256_hex(salt + b"KA01AB1234")


def test_weak_salt_rejected():
    with pytest.raises(WeakSalt):
        hash_plate("KA01AB1234", b"short")


def test_plate_regex_finds_embedded_plates_only():
    rx = plate_regex(DEFAULT_GRAMMAR)
    assert rx.search('{"x":"KA01AB1234"}')
    assert not rx.search('{"plate_hash":"' + "ab" * 32 + '"}')


def test_grammar_from_dict_symmetrizes():
    g = PlateGrammar.from_dict({"patterns": ["AA00"], "confusions": {"O": ["0"]}})
    assert "O" in g.confusion_table["0"]
    assert g.matches("AB12") and not g.matches("A123")
