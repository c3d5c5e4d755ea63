"""MI output-grammar parsing, plus one live session against the debugger."""

import subprocess
import sys

import pytest

from resub.gdbmi import MiSession, parse_record

from support import requires_gdb


class TestParseRecord:
    def test_result_done_with_tuple(self):
        rec = parse_record('4^done,bkpt={number="1",type="breakpoint",'
                           'addr="0x0000000000401136"}')
        assert rec.token == "4" and rec.type == "^" and rec.klass == "done"
        assert rec.results["bkpt"]["number"] == "1"
        assert rec.results["bkpt"]["addr"] == "0x0000000000401136"

    def test_async_stopped(self):
        rec = parse_record(
            '*stopped,reason="breakpoint-hit",disp="keep",bkptno="2",'
            'frame={addr="0x401142",func="fn_sum",args=[],'
            'file="fn_sum.c",line="7"},thread-id="1"')
        assert rec.type == "*" and rec.klass == "stopped"
        assert rec.results["reason"] == "breakpoint-hit"
        assert rec.results["frame"]["func"] == "fn_sum"
        assert rec.results["frame"]["args"] == []

    def test_list_of_named_results(self):
        rec = parse_record(
            '^done,stack=[frame={level="0",func="a"},'
            'frame={level="1",func="b"}]')
        assert [f["func"] for f in rec.results["stack"]] == ["a", "b"]

    def test_escaped_strings(self):
        rec = parse_record(r'^done,value="line1\nline\"2\""')
        assert rec.results["value"] == 'line1\nline"2"'

    def test_prompt_and_blank_skipped(self):
        assert parse_record("(gdb)") is None
        assert parse_record("") is None

    def test_console_stream(self):
        rec = parse_record('~"Reading symbols...\\n"')
        assert rec.type == "~" and rec.raw == '"Reading symbols...\\n"'

    def test_error_record(self):
        rec = parse_record('3^error,msg="No symbol table is loaded."')
        assert rec.klass == "error"
        assert "No symbol" in rec.results["msg"]

    def test_repeated_keys_collect(self):
        rec = parse_record('=thread-group-added,id="i1",id="i2"')
        assert rec.results["id"] == ["i1", "i2"]


@requires_gdb
def test_live_session_evaluate_and_frames(tmp_path):
    # debug a short-lived python so the session has a real inferior
    target = subprocess.Popen([sys.executable, "-c",
                               "import time; time.sleep(30)"])
    try:
        with MiSession() as session:
            session.attach(target.pid)
            assert session.evaluate("1 + 2") == "3"
            assert session.evaluate("no_such_symbol_xyz") is None
            frames = session.frames()
            assert frames and "addr" in frames[0]
            session.detach()
    finally:
        target.kill()
        target.wait()
