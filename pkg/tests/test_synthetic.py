from pathlib import Path

from memocl import cli
from memocl.synthetic import (
    BENIGN_CUES,
    FILLERS,
    GROUP_WORDS,
    MILD_BENIGN,
    MILD_TOXIC,
    TOXIC_CUES,
    FixtureConfig,
    build_fixture,
    filler_words,
    respell,
    write_fixture,
)

BENCH = Path(__file__).resolve().parents[1] / "fixtures" / "benchmark"


class TestWords:
    def test_respell(self):
        assert respell("stupid") == "5tup1d"
        assert respell("dumb") == "dumbz"

    def test_respellings_are_new_words(self):
        cues = TOXIC_CUES + BENIGN_CUES
        assert not {respell(w) for w in cues} & set(cues)
        assert len({respell(w) for w in cues}) == len(cues)

    def test_fillers_unique_and_disjoint(self):
        words = filler_words(600)
        assert len(words) == len(set(words)) == 600
        assert words[: len(FILLERS)] == FILLERS
        others = set(TOXIC_CUES + BENIGN_CUES + MILD_TOXIC + MILD_BENIGN + GROUP_WORDS)
        others |= {respell(w) for w in TOXIC_CUES + BENIGN_CUES}
        assert not set(words) & others


class TestFixture:
    def test_shipped_files_regenerate(self, tmp_path):
        assert cli.main(["fixture", "--out", str(tmp_path)]) == 0
        shipped = sorted(p.name for p in BENCH.iterdir())
        assert shipped == sorted(p.name for p in tmp_path.iterdir())
        for name in shipped:
            assert (tmp_path / name).read_bytes() == (BENCH / name).read_bytes(), name

    def test_sizes_and_labels(self):
        fx = build_fixture(FixtureConfig(n_train=50, n_calib=10, n_test=40))
        assert (len(fx.train), len(fx.calib), len(fx.test)) == (50, 10, 40)
        assert set(fx.test.labels) == {0, 1}
        assert fx.shift.substitution_coverage == 0.8 and fx.shift.noise_rate == 0.05

    def test_respellings_absent_from_source(self):
        fx = build_fixture(FixtureConfig(n_train=300, n_calib=10, n_test=10))
        source = {w for r in fx.train.records for w in r.text.split()}
        assert not source & {respell(w) for w in TOXIC_CUES + BENIGN_CUES}
        assert all(respell(w) in fx.table for w in TOXIC_CUES + BENIGN_CUES)

    def test_deterministic(self, tmp_path):
        cfg = FixtureConfig(n_train=30, n_calib=5, n_test=30)
        a = write_fixture(build_fixture(cfg), tmp_path / "a")
        b = write_fixture(build_fixture(cfg), tmp_path / "b")
        assert all(a[k].read_bytes() == b[k].read_bytes() for k in a)
