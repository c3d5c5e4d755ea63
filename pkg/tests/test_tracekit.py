"""Statement alignment, breakpoint planning, address resolution and trace
normalization. Live collection is exercised by the end-to-end suite."""

import pytest
from hypothesis import given, strategies as st

from resub.errors import AlignmentFailed, NoLineMap
from resub.tracekit import (BinaryRole, BreakpointPlan, BreakpointSite,
                            ExecutionTrace, SignalEntry, SiteRole, TraceHit,
                            assignment_target, call_hash, condense_backtrace,
                            extract_statements, make_flow_plan, make_plan,
                            normalize_statement, normalize_trace,
                            resolve_addresses, return_expression,
                            symmetric_resolve)


class TestNormalizeStatement:
    def test_strips_casts_and_whitespace(self):
        assert normalize_statement("v3 = (unsigned __int8)a1;") == "v3=a1;"
        assert normalize_statement("  x = ( int )y ;") == "x=y;"

    def test_nested_casts(self):
        assert normalize_statement("v = (int)(unsigned char)w;") == "v=w;"

    def test_pointer_casts(self):
        assert normalize_statement("p = (struct node *)q;") == "p=q;"
        # lossy but stable: both sides of the alignment see the same key
        assert normalize_statement("v6 = *(int *)((char *)v5 + 32);") == \
            normalize_statement("v6 = *(int*)((char*)v5 + 32);") == \
            "v6=*(v5+32);"

    def test_call_parens_survive(self):
        # f(x) must not be mistaken for a cast of x
        assert normalize_statement("r = f(x);") == "r=f(x);"

    def test_comments_removed(self):
        assert normalize_statement("x = 1; // trailing") == "x=1;"


def test_extract_statements_skips_braces_and_preproc():
    src = "#include <x.h>\n\nint f(void)\n{\n  int a;\n  a = 1;\n}\n"
    got = extract_statements(src)
    # "(void)" reads as a cast to the normalizer; the signature key is lossy
    assert got == [(3, "intf"), (5, "inta;"), (6, "a=1;")]


class TestAssignmentTarget:
    def test_plain(self):
        assert assignment_target("  v2 = v1 + 3;") == "v2"

    def test_declaration_initializer(self):
        assert assignment_target("unsigned int result = 0;") == "result"

    def test_comparison_is_not_assignment(self):
        assert assignment_target("if ( a == b )") is None

    def test_deref_store_watches_the_whole_lhs(self):
        assert assignment_target("*(int *)p = 7;") == "*(int *)p"
        assert assignment_target(
            "  *(unsigned int *)&v3[28] = gSeed;") == "*(unsigned int *)&v3[28]"
        assert assignment_target("v3[i % 28] = v3[i % 28] ^ a1[i];") \
            == "v3[i % 28]"

    def test_control_flow_is_never_a_store(self):
        assert assignment_target("for ( i = 0; i < 28; ++i )") is None
        assert assignment_target("while ( *p )") is None
        assert assignment_target("if ( a >= b )") is None


class TestReturnExpression:
    def test_casts_stripped(self):
        assert return_expression("  return (unsigned int)v3;") == "v3"
        assert return_expression("return 0LL;") == "0LL"
        assert return_expression("return v2 / a2;") == "v2 / a2"

    def test_bare_and_side_effecting_refused(self):
        assert return_expression("return;") is None
        assert return_expression("return helper(v2);") is None
        assert return_expression("return i++;") is None

    def test_non_returns(self):
        assert return_expression("v2 = 3;") is None
        assert return_expression("if ( a >= b )") is None


PSEUDO = """\
__int64 __fastcall fn_demo(int a1)
{
  int v2; // [rsp+8h]
  unsigned int v3; // eax

  v2 = 2 * a1;
  v3 = (unsigned __int8)v2;
  if ( v3 > 9 )
    v3 = 9;
  return v3;
}
"""

SOURCE = """\
__int64 __fastcall fn_demo(int a1)
{
  int v2;
  unsigned int v3;

  v2 = 2 * a1;
  v3 = (unsigned __int8)v2;
  if ( v3 > 9 )
    v3 = 9;
  return v3;
}
"""


def test_make_plan_roles_and_ids():
    plan = make_plan(SOURCE, PSEUDO, "fn_demo")
    by_id = {s.id: s for s in plan.sites}
    # assignments watch their left-hand side after the store
    assert by_id["L6"].role is SiteRole.ValueSite
    assert by_id["L6"].watch_vars[0]["name"] == "v2"
    assert by_id["L8"].role is SiteRole.FlowMarker
    # the repeated "v3 = 9" line gets a distinct id
    assert by_id["L9"].watch_vars[0]["name"] == "v3"
    # the return samples its value expression at the trap itself
    assert by_id["L10"].role is SiteRole.ValueSite
    assert by_id["L10"].watch_vars[0] == {"name": "v3", "access": "return"}
    assert [s.source_line for s in plan.sites] == sorted(
        s.source_line for s in plan.sites)


def test_make_plan_alignment_threshold():
    other = "int g(void)\n{\n  return totally_different();\n}\n"
    with pytest.raises(AlignmentFailed):
        make_plan(other, PSEUDO, "fn_demo")
    # the flow fallback still produces a (possibly empty) marker plan
    plan = make_flow_plan(other, PSEUDO, "fn_demo")
    assert all(s.role is SiteRole.FlowMarker for s in plan.sites)


def test_duplicate_pseudo_lines_get_primed_ids():
    src = "void f(void)\n{\n  x = 1;\n  x = 1;\n}\n"
    plan = make_plan(src, src, "f")
    ids = [s.id for s in plan.sites]
    assert len(ids) == len(set(ids))


def test_plan_json_roundtrip():
    plan = make_plan(SOURCE, PSEUDO, "fn_demo")
    back = BreakpointPlan.from_json(plan.to_json())
    assert back == plan


def test_resolve_addresses_sides():
    plan = BreakpointPlan("f", (
        BreakpointSite("L5", 10, 5, (), SiteRole.FlowMarker),
        BreakpointSite("L7", 12, 7, (), SiteRole.FlowMarker),
    ))
    sites = resolve_addresses(plan, BinaryRole.OriginalA, {5: 0x100, 7: 0x140})
    assert [(s.bp_id, s.image, s.offset) for s in sites] == \
        [("L5", "host", 0x100), ("L7", "host", 0x140)]
    sites = resolve_addresses(plan, BinaryRole.SubstitutedB, {10: 0x20})
    assert [(s.bp_id, s.image, s.offset) for s in sites] == \
        [("L5", "module", 0x20)]
    with pytest.raises(NoLineMap):
        resolve_addresses(plan, BinaryRole.OriginalA, {})


def test_symmetric_resolve_drops_one_sided_sites():
    plan = BreakpointPlan("f", (
        BreakpointSite("L5", 10, 5, (), SiteRole.FlowMarker),
        BreakpointSite("L7", 12, 7, (), SiteRole.FlowMarker),
        BreakpointSite("L9", 14, 9, (), SiteRole.FlowMarker),
    ))
    a, b, dropped = symmetric_resolve(plan, {5: 1, 7: 2}, {10: 3, 14: 4})
    assert [s.bp_id for s in a] == [s.bp_id for s in b] == ["L5"]
    assert dropped == ["L7", "L9"]


def test_call_hash_stable():
    assert call_hash("t1", 3) == call_hash("t1", 3)
    assert call_hash("t1", 3) != call_hash("t1", 4)
    assert len(call_hash("x", 0)) == 12


def test_condense_backtrace_filters_libc():
    frames = [
        {"func": "__libc_start_call_main", "file": "libc.so.6"},
        {"func": "fn_demo", "fullname": "/w/fn_demo.unit.cpp", "line": "12"},
        {"func": "main", "file": "main.c", "line": "40"},
    ]
    assert condense_backtrace(frames) == (
        "fn_demo (fn_demo.unit.cpp:12)", "main (main.c:40)")


# --- normalization -----------------------------------------------------------

def hit(bp, values, inv=1, test="t"):
    return TraceHit(test, call_hash(test, inv), bp, inv, 1, values)


def test_pointer_masking_is_consistent_within_trace():
    t = ExecutionTrace(BinaryRole.OriginalA, hits=[
        hit("L5", {"p": "0x7ffd12345678", "q": "0x7ffd12345678"}),
        hit("L6", {"p": "0x7ffd12345678", "r": "0x55aa00112233"}),
    ])
    n = normalize_trace(t)
    assert n.hits[0].values["p"] == n.hits[0].values["q"] == \
        n.hits[1].values["p"] == "<ptr1>"
    assert n.hits[1].values["r"] == "<ptr2>"


def test_small_integers_survive_masking():
    t = ExecutionTrace(BinaryRole.OriginalA, hits=[
        hit("L5", {"v": "4096"}), hit("L6", {"v": "0xff"}),
    ])
    n = normalize_trace(t)
    assert n.hits[0].values["v"] == "4096"
    assert n.hits[1].values["v"] == "0xff"


def test_aslr_shifted_traces_normalize_equal():
    def run(base):
        return ExecutionTrace(BinaryRole.OriginalA, hits=[
            hit("L5", {"p": hex(base + 0x10)}),
            hit("L6", {"q": hex(base + 0x998)}),
        ], signals=[SignalEntry("SIGSEGV", "L6",
                                (f"f ({hex(base + 0x10)})",))])
    assert normalize_trace(run(0x7f0000000000)) == \
        normalize_trace(run(0x55d000000000))


def test_commutative_group_sorting():
    t = ExecutionTrace(BinaryRole.OriginalA, hits=[
        hit("L9", {"v": "2"}), hit("L8", {"v": "1"}), hit("L12", {"v": "0"}),
    ])
    n = normalize_trace(t, commutative_groups=[{"L8", "L9"}])
    assert [h.bp_id for h in n.hits] == ["L8", "L9", "L12"]


def test_trace_json_roundtrip():
    t = ExecutionTrace(BinaryRole.SubstitutedB, hits=[
        hit("L5", {"v": "1"}), hit("L6", {})],
        signals=[SignalEntry("SIGSEGV", "L6", ("f (u.cpp:3)",))],
        test_id="t", truncated=True)
    assert ExecutionTrace.from_json(t.to_json()) == t


values_st = st.dictionaries(
    st.sampled_from(["v1", "v2", "p"]),
    st.one_of(st.integers(-100, 100).map(str),
              st.integers(0x10000, 2**48).map(hex),
              st.just("12:34:56.7")),
    max_size=3)
hits_st = st.lists(
    st.builds(hit, st.sampled_from(["L4", "L5", "L9"]), values_st,
              st.integers(1, 3)),
    max_size=12)


@given(hits_st)
def test_normalize_is_idempotent(hits):
    t = ExecutionTrace(BinaryRole.OriginalA, hits=hits)
    once = normalize_trace(t)
    assert normalize_trace(once) == once


@given(hits_st)
def test_normalize_preserves_structure(hits):
    t = ExecutionTrace(BinaryRole.OriginalA, hits=hits)
    n = normalize_trace(t)
    assert [h.bp_id for h in n.hits] == [h.bp_id for h in t.hits]
    assert [h.invocation_index for h in n.hits] == \
        [h.invocation_index for h in t.hits]
    assert len(n.hits) == len(t.hits)
