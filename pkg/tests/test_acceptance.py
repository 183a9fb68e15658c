"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line.  The experiment implementations live in sgm.suite and are
shared with the `sgm suite` CLI subcommand."""

from sgm.suite import EXPERIMENTS


def _run(key):
    result = EXPERIMENTS[key]()
    print()
    print(result.line())
    for detail in result.details:
        print("    " + detail)
    assert result.passed, "\n".join(result.details)


def test_criterion_1_linear_rate():
    _run("linear-rate")


def test_criterion_2_optstep_reproduction():
    _run("optstep")


def test_criterion_3_basic_rate():
    _run("basic-rate")


def test_criterion_4_averaged_smooth_rate():
    _run("averaged-rate")


def test_criterion_5_double_step_feasibility():
    _run("double-step")


def test_criterion_6_switching_methods():
    _run("switching")


def test_criterion_7_unbounded_method():
    _run("unbounded")


def test_criterion_8_prox_oracle_equivalence():
    _run("prox-oracles")


def test_criterion_9_noslater_dual():
    _run("noslater-dual")
