def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    order = ["1", "2", "3", "4", "5", "6", "7a", "7b", "8", "9", "10"]
    terminalreporter.section("acceptance criteria")
    for cid in order:
        if cid in RESULTS:
            ok, detail = RESULTS[cid]
            terminalreporter.write_line(f"criterion {cid:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {cid:>3}: NOT RUN")
