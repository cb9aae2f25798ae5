"""Grammar-level tests for the script parser."""
import pytest
from hypothesis import given, strategies as st

from rlm_forge.script import (
    Assignment,
    Call,
    Concat,
    Final,
    FinalVar,
    IntLit,
    ParseError,
    Print,
    ScriptProgram,
    Slice,
    StringLit,
    Var,
    parse_script,
    quote_string,
)


def test_assignment_with_slice():
    program = parse_script("x = prompt[0:100]")
    assert program.statements == (
        Assignment("x", Slice(Var("prompt"), 0, 100)),
    )


def test_final_var_command():
    program = parse_script("FINAL_VAR(answer)")
    assert program.statements == (FinalVar("answer"),)


def test_double_equals_is_a_parse_error_with_line():
    with pytest.raises(ParseError) as info:
        parse_script("x = = 5")
    assert info.value.line == 1


def test_error_line_numbers_point_at_the_bad_line():
    with pytest.raises(ParseError) as info:
        parse_script("a = 1\nb = 2\nc = ???")
    assert info.value.line == 3


def test_commands_and_calls():
    program = parse_script('print(len(prompt))\nFINAL("done")')
    assert program.statements == (
        Print(Call("len", (Var("prompt"),))),
        Final(StringLit("done")),
    )


def test_concat_is_left_associative():
    program = parse_script('x = "a" + "b" + "c"')
    (stmt,) = program.statements
    assert stmt == Assignment(
        "x", Concat(Concat(StringLit("a"), StringLit("b")), StringLit("c"))
    )


def test_string_escapes_round_trip():
    program = parse_script('x = "line\\none\\ttab \\"quoted\\" back\\\\slash"')
    (stmt,) = program.statements
    assert stmt.expr == StringLit('line\none\ttab "quoted" back\\slash')


def test_comments_and_blank_lines_are_skipped():
    program = parse_script("# leading comment\n\nx = 5  # trailing\n\n")
    assert program.statements == (Assignment("x", IntLit(5)),)


def test_semicolons_separate_statements():
    program = parse_script('n = count(prompt, "magic number"); print(n)')
    assert len(program.statements) == 2
    assert isinstance(program.statements[0], Assignment)
    assert isinstance(program.statements[1], Print)


def test_unknown_function_rejected():
    with pytest.raises(ParseError, match="unknown function"):
        parse_script("x = exec(prompt)")


def test_reserved_names_are_not_assignable():
    for name in ("print", "FINAL", "FINAL_VAR", "len", "llm"):
        with pytest.raises(ParseError, match="reserved"):
            parse_script(f"{name} = 1")


def test_unterminated_string():
    with pytest.raises(ParseError, match="unterminated"):
        parse_script('x = "oops')


def test_unknown_escape():
    with pytest.raises(ParseError, match="escape"):
        parse_script('x = "\\q"')


def test_int64_bounds_enforced():
    parse_script(f"x = {2**63 - 1}")
    parse_script(f"x = {-(2**63)}")
    with pytest.raises(ParseError, match="64-bit"):
        parse_script(f"x = {2**63}")


def test_negative_slice_indices_parse():
    program = parse_script("x = prompt[-5:10]")
    (stmt,) = program.statements
    assert stmt.expr == Slice(Var("prompt"), -5, 10)


def test_trailing_garbage_rejected():
    with pytest.raises(ParseError, match="after statement"):
        parse_script("x = 5 5")


def test_deep_nesting_is_rejected_not_crashed():
    source = "x = " + "len(" * 500 + "prompt" + ")" * 500
    with pytest.raises(ParseError, match="nested"):
        parse_script(source)


def test_empty_source_is_an_empty_program():
    assert parse_script("") == ScriptProgram(())


def test_bare_expression_is_rejected():
    with pytest.raises(ParseError):
        parse_script("len(prompt)")


def test_canonical_render_parses_back_to_the_same_tree():
    source = '\n'.join(
        [
            "x = prompt[0:100]",
            'hits = findall(x, "[0-9]+")',
            "n = len(hits)",
            'print(join(hits, ", "))',
            'combined = "total: " + n',
            "FINAL_VAR(combined)",
        ]
    )
    program = parse_script(source)
    rendered = program.render()
    assert parse_script(rendered) == program
    # canonical rendering is a fixpoint
    assert parse_script(rendered).render() == rendered


@given(st.text(max_size=200))
def test_quote_string_round_trips_arbitrary_text(value):
    # raw newlines inside literals must come back via the \n escape
    program = parse_script(f"x = {quote_string(value)}")
    (stmt,) = program.statements
    assert stmt == Assignment("x", StringLit(value))


@given(st.text(max_size=120))
def test_parser_never_crashes_on_arbitrary_input(source):
    try:
        parse_script(source)
    except ParseError:
        pass
