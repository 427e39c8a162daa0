import pytest

from nastaliq_lines import corpus, synth, train


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Three glyph classes, short lines: trains in seconds."""
    out = tmp_path_factory.mktemp("tiny")
    cfg = synth.SynthConfig(glyph_classes=3, lines_per_page=4, tokens_per_line=(2, 4), seed=5,
                            fractions=(0.5, 0.25, 0.25))
    gen = synth.generate_corpus(cfg, 8, out)
    samples = {s: train.load_samples(gen.manifest.split(s), gen.alphabet) for s in corpus.SPLITS}
    return out, gen, samples


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.acceptance_lines = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = dict(report.user_properties).get("measured", "")
    verdict = "PASS" if report.passed else "FAIL"
    item.config.acceptance_lines.append((number, f"criterion {number} {verdict}: {title}"
                                                 + (f" [{detail}]" if detail else "")))


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(config.acceptance_lines):
            terminalreporter.write_line(line)
