import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import entropy_bits

from heattap.prompts import (ADDED, CORPUS, Prompt, PromptError, PromptPool, char_counts,
                             char_entropy, filter_pool, greedy_select, is_plain,
                             load_common_words, load_pool, selection_entropies)

COMMON = set("my watch fell in the water a cat sat on mat big red dog ran far away".split())


def test_entropy_values():
    assert char_entropy(np.ones(28)) == pytest.approx(math.log2(28), abs=1e-12)
    assert char_entropy(char_counts("aaaa")) == 0.0
    # -(3/4) log2(3/4) - (1/4) log2(1/4)
    assert char_entropy(char_counts("aaab")) == pytest.approx(0.8112781244591328, abs=1e-12)
    with pytest.raises(PromptError):
        char_entropy(np.zeros(28))


def test_char_counts_fold_case_and_map_space_period():
    c = char_counts("Ab a.")
    assert c[0] == 2 and c[1] == 1 and c[26] == 1 and c[27] == 1


@pytest.mark.parametrize("text,origin,kept", [
    ("my watch fell in the water.", CORPUS, True),
    ("my watch fell in the big water", CORPUS, False),   # seven words
    ("my watch fell zyx", CORPUS, False),                # a rare word
    ("zyx qqq www cat", ADDED, False),                    # 4 words + 3 rare
    ("zyx qqq cat", ADDED, True),                        # 3 words + 2 rare
    ("my 2 cats", CORPUS, False),
    ("wait, what", CORPUS, False),
    ("red dog..", CORPUS, False),
    ("Big Red Dog.", CORPUS, True),
])
def test_filter_rules(text, origin, kept):
    pool = PromptPool([Prompt(text, origin)], COMMON)
    assert (len(filter_pool(pool).prompts) == 1) == kept


def test_filter_needs_word_list():
    with pytest.raises(PromptError):
        filter_pool(PromptPool([Prompt("a cat")]))


def test_is_plain():
    assert is_plain("a b c.") and not is_plain(" a") and not is_plain("a  b") and not is_plain("")


def test_loading(tmp_path):
    (tmp_path / "c.txt").write_text("a cat\n\nbig red dog\n")
    (tmp_path / "a.txt").write_text("zyx cat\n")
    (tmp_path / "w.txt").write_text("cat\nbig\nred\ndog\na\nzyx\n")
    pool = load_pool(tmp_path / "c.txt", tmp_path / "a.txt", load_common_words(tmp_path / "w.txt", 5))
    assert [p.origin for p in pool.prompts] == [CORPUS, CORPUS, ADDED]
    assert "zyx" not in pool.common_words
    assert pool.rare_count(pool.prompts[2]) == 1


def brute_greedy(pool, n):
    chosen, total = [], np.zeros(28)
    rest = list(pool)
    for _ in range(n):
        scores = [entropy_bits(total + char_counts(p)) for p in rest]
        best = max(scores)
        ties = [p for p, s in zip(rest, scores) if s >= best - 1e-12]
        pick = min(ties, key=lambda p: (len(p), p))
        chosen.append(pick)
        rest.remove(pick)
        total += char_counts(pick)
    return chosen


TOY = ["the cat sat", "jazz quiz", "a box of wax", "my dog", "vexing jokes", "pure fun",
       "aaaa", "zebra", "quick fox", "lazy days", "hello world", "kiwi juice", "ocean view",
       "gym bag", "sky blue", "ten pens", "wry smile", "black ink", "the end.", "map it"]


def test_each_step_is_the_entropy_argmax():
    chosen = greedy_select(TOY, 20)
    assert chosen == brute_greedy(TOY, 20)
    total = np.zeros(28)
    for i, p in enumerate(chosen):
        best = max(entropy_bits(total + char_counts(q)) for q in TOY if q not in chosen[:i])
        assert entropy_bits(total + char_counts(p)) == pytest.approx(best, abs=1e-12)
        total += char_counts(p)


def test_two_of_five_matches_exhaustive_simulation():
    pool = TOY[:5]
    # every ordered pair that a greedy run could produce, keep the one greedy produces
    runs = [list(pair) for pair in itertools.permutations(pool, 2)
            if pair[0] == brute_greedy(pool, 1)[0]]
    best_second = max(runs, key=lambda r: (entropy_bits(char_counts(r[0]) + char_counts(r[1])),
                                           -len(r[1])))
    assert greedy_select(pool, 2) == best_second


def test_small_cases():
    assert greedy_select(["aaaa", "abcd"], 1) == ["abcd"]
    assert sorted(greedy_select(TOY[:6], 6)) == sorted(TOY[:6])
    with pytest.raises(PromptError):
        greedy_select(TOY[:3], 4)


@given(st.lists(st.text(alphabet="abc .", min_size=1, max_size=6), min_size=2, max_size=8, unique=True))
def test_entropy_never_drops_when_it_could_rise(pool):
    chosen = greedy_select(pool, len(pool))
    ent = selection_entropies(chosen)
    total = np.zeros(28)
    for i, p in enumerate(chosen[:-1]):
        total += char_counts(p)
        can_rise = any(entropy_bits(total + char_counts(q)) > ent[i] + 1e-12 for q in chosen[i + 1:])
        if can_rise:
            assert ent[i + 1] >= ent[i] - 1e-12
