from coagss.kernels import KernelSpec
from coagss.verify import run_verify


def test_all_checks_pass():
    checks = run_verify()
    assert [c.name for c in checks if not c.passed] == []


def test_tampered_constant_fails():
    failed = [c.name for c in run_verify(ppd=16, kernel=KernelSpec.constant(2.2)) if not c.passed]
    assert "kernels.boundary_integral.constant" in failed


def test_check_line_format():
    line = run_verify(ppd=8)[0].line()
    assert line.startswith("PASS kernels.boundary_integral.constant:")
