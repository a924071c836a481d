import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None:
        return
    terminalreporter.section("acceptance criteria")
    for num, title in module.TITLES.items():
        if num in module.RESULTS:
            _, ok, detail = module.RESULTS[num]
            terminalreporter.write_line(f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {num:2d} [FAIL] {title}: not run or errored")
