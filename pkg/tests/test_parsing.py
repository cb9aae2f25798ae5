"""Response sanitation: think tags, fences, and final markers."""
import random

from hypothesis import given, strategies as st

from rlm_forge.parsing import (
    FinalMarker,
    find_code_blocks,
    find_final_answer,
    parse_response,
    strip_think_tags,
)


def test_wellformed_span_is_removed():
    assert strip_think_tags("<thinking>plan</thinking>Answer: 5") == "Answer: 5"


def test_stray_closer_is_removed():
    assert strip_think_tags("</thinking>FINAL_VAR(answer)") == "FINAL_VAR(answer)"


def test_identity_on_clean_text():
    assert strip_think_tags("no tags here") == "no tags here"


def test_think_variant_is_also_stripped():
    assert strip_think_tags("<think>hmm</think>ok</think>") == "ok"


def test_nested_spans_removed_innermost_out():
    raw = "<thinking>a<thinking>b</thinking>c</thinking>keep"
    assert strip_think_tags(raw) == "keep"


def test_multiline_spans():
    raw = "before\n<thinking>\nline one\nline two\n</thinking>\nafter"
    assert strip_think_tags(raw) == "before\n\nafter"


def test_stray_opener_is_preserved():
    # only spans and stray *closers* are removed; an unmatched opener
    # stays (it may be literal text)
    assert strip_think_tags("a <thinking> b") == "a <thinking> b"


def _fence(tag, body):
    return f"```{tag}\n{body}\n```"


def test_single_tagged_fence():
    text = "intro\n" + _fence("repl", "x = 1") + "\noutro"
    assert find_code_blocks(text) == ["x = 1"]


def test_other_tags_and_untagged_fences_ignored():
    text = "\n".join(
        [
            _fence("repl", "first"),
            "between",
            _fence("python", "nope"),
            _fence("", "also nope"),
            _fence("repl", "second"),
        ]
    )
    assert find_code_blocks(text) == ["first", "second"]


def test_no_fences_gives_empty_list():
    assert find_code_blocks("plain prose, nothing fenced") == []


def test_unterminated_final_fence_runs_to_end():
    text = "lead\n```repl\na = 1\nprint(a)"
    assert find_code_blocks(text) == ["a = 1\nprint(a)"]


def test_multiline_block_content_preserved():
    body = "a = 1\n\nprint(a)  # comment"
    text = _fence("repl", body)
    assert find_code_blocks(text) == [body]


def test_final_var_marker():
    assert find_final_answer("...done. FINAL_VAR(answer)") == FinalMarker(
        "final_var", "answer"
    )


def test_final_literal_marker():
    assert find_final_answer('FINAL("42")') == FinalMarker("final", "42")


def test_final_literal_unescapes():
    assert find_final_answer('FINAL("line\\none \\"q\\"")') == FinalMarker(
        "final", 'line\none "q"'
    )


def test_marker_inside_fence_is_not_plain_text():
    text = _fence("repl", 'FINAL("fenced")')
    assert find_final_answer(text) is None
    # it remains available to the script engine
    assert find_code_blocks(text) == ['FINAL("fenced")']


def test_last_marker_wins():
    text = 'FINAL("first") then FINAL_VAR(second)'
    assert find_final_answer(text) == FinalMarker("final_var", "second")
    text = 'FINAL_VAR(first) then FINAL("last")'
    assert find_final_answer(text) == FinalMarker("final", "last")


def test_absent_marker():
    assert find_final_answer("no markers at all") is None


def test_parse_response_combines_everything():
    raw = "<thinking>plan</thinking>run this:\n" + _fence("repl", "x = 1")
    parsed = parse_response(raw)
    assert parsed.clean_text.startswith("run this:")
    assert parsed.code_blocks == ("x = 1",)
    assert parsed.final_marker is None


CLEAN_WORDS = ["alpha", "beta", "gamma", "delta", "answer:", "12.5", "done."]


def _random_clean_text(rng):
    # tag-free filler, including angle-bracket noise that must survive
    parts = [rng.choice(CLEAN_WORDS) for _ in range(rng.randint(0, 12))]
    if rng.random() < 0.3:
        parts.append("<other>kept</other>")
    return " ".join(parts)


def _inject_tags(rng, clean):
    pieces = [clean]
    for _ in range(rng.randint(1, 4)):
        tag = rng.choice(["thinking", "think"])
        kind = rng.random()
        if kind < 0.6:
            insert = f"<{tag}>{_random_clean_text(rng)}</{tag}>"
        else:
            insert = f"</{tag}>"
        at = rng.randint(0, len(pieces))
        pieces.insert(at, insert)
    return "".join(pieces)


def test_randomized_idempotence_and_identity(n=1000):
    rng = random.Random(20260810)
    for _ in range(n):
        clean = _random_clean_text(rng)
        assert strip_think_tags(clean) == clean  # identity on clean input
        noisy = _inject_tags(rng, clean)
        once = strip_think_tags(noisy)
        assert strip_think_tags(once) == once  # idempotent


@given(st.text(alphabet=st.characters(blacklist_characters="<"), max_size=200))
def test_identity_when_no_openers_possible(text):
    assert strip_think_tags("</thinking>" + text) == text


def test_k_fences_yield_k_blocks():
    for k in range(0, 11):
        text = "\n".join(_fence("repl", f"block {i}") for i in range(k))
        assert find_code_blocks(text) == [f"block {i}" for i in range(k)]
