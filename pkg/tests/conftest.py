from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    import sys

    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")
                   and hasattr(m, "ACCEPTANCE_RESULTS")), None)
    if module is None or not module.ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(module.ACCEPTANCE_RESULTS, key=lambda item: item[0]):
        terminalreporter.write_line(line)
