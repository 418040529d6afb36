"""Small constructed data sets shared by the re-ranking and acceptance tests."""
import json
from pathlib import Path

from refbias.corpus import KBestList, ReferenceSet, tokenize
from refbias.measures import EditSpan

FIXTURES = Path(__file__).parent / "fixtures"

# the phrase under study is "go"; K keeps it, I alters it invalidly, V alters it validly
SOURCE = "he go to school"
KEEP = "he go to school"
INVALID = "he gone to school"
VALID = "he goes to school"
OTHER_VALID = ["he went to school", "he is going to school", "he will go to school"]


def _kb(*cands):
    return KBestList(tokenize(SOURCE), tuple(tokenize(c) for c in cands))


def _pool(*refs):
    return ReferenceSet(tokenize(SOURCE), tuple(tokenize(r) for r in refs))


def alteration_cases():
    """name -> (k-best list, reference pool, exact alter probability as a function of M).

    Every pool holds R = 4 references drawn without replacement.
    """
    return {
        # no valid alteration in the list: the keep candidate always wins or ties
        "no_valid_alteration": (_kb(KEEP, INVALID, "he goed to school"),
                                _pool(VALID, *OTHER_VALID), lambda M: 0.0),
        # e is valid and the pool also holds alterations: altering needs K to be missing
        "keep_is_valid": (_kb(KEEP, INVALID, VALID), _pool(KEEP, VALID, VALID, VALID),
                          lambda M: _choose(3, M) / _choose(4, M)),
        # e is an error: altering needs V to be sampled
        "keep_is_error": (_kb(KEEP, INVALID, VALID), _pool(VALID, *OTHER_VALID), lambda M: M / 4),
    }


def _choose(n, k):
    from math import comb
    return comb(n, k)


def load_type_counts():
    with open(FIXTURES / "type_counts.json", encoding="utf-8") as fh:
        return json.load(fh)["counts"]


def typed_edits_from_counts(counts, who):
    """One sentence per edit; ``who`` is "reference" or a system name."""
    per_sentence = []
    for t, rec in sorted(counts.items()):
        n = rec["reference"] if who == "reference" else rec["systems"][who]
        per_sentence.extend([[EditSpan(0, 1, ("x",), t)] for _ in range(n)])
    return per_sentence


def write_typed_edits(path, per_sentence):
    with open(path, "w", encoding="utf-8") as fh:
        for edits in per_sentence:
            rec = {"edits": [{"start": e.start, "end": e.end, "replacement": list(e.replacement),
                              "type": e.type_label} for e in edits]}
            fh.write(json.dumps(rec) + "\n")
