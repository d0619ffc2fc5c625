from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbandit import io
from cfbandit.contexts import ImageFeatureTable, SessionRecord
from cfbandit.replay import SummaryRow, Trajectory
from cfbandit.synthenv import GeneratorParams, generate_corpus

FIXTURES = Path(__file__).parent / "fixtures"


class TestFixtureFiles:
    def test_sessions_round_trip_bytes(self, tmp_path):
        sessions = io.read_sessions(FIXTURES / "sessions.jsonl", num_arms=5)
        assert len(sessions) == 60
        io.write_sessions(tmp_path / "s.jsonl", sessions)
        assert (tmp_path / "s.jsonl").read_bytes() == (FIXTURES / "sessions.jsonl").read_bytes()

    def test_features_round_trip_bytes(self, tmp_path):
        table = io.read_features(FIXTURES / "features.csv")
        assert table.feature_dim == 12 and len(table.rows) == 40
        io.write_features(tmp_path / "f.csv", table)
        assert (tmp_path / "f.csv").read_bytes() == (FIXTURES / "features.csv").read_bytes()

    def test_every_clicked_image_has_features(self):
        sessions = io.read_sessions(FIXTURES / "sessions.jsonl")
        io.check_images_known(sessions, io.read_features(FIXTURES / "features.csv"))


class TestRoundTrip:
    def test_synthetic_corpus(self, tmp_path):
        c = generate_corpus(GeneratorParams(), 80, np.random.default_rng(0))
        io.write_sessions(tmp_path / "s.jsonl", c.sessions)
        io.write_features(tmp_path / "f.csv", c.features)
        assert io.read_sessions(tmp_path / "s.jsonl") == c.sessions
        back = io.read_features(tmp_path / "f.csv")
        assert back.image_ids == c.features.image_ids
        for k, v in c.features.rows.items():
            assert np.array_equal(back.rows[k], v)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=6))
    def test_float_bits_survive(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("f") / "f.csv"
        table = ImageFeatureTable(len(values), {"a": np.array(values)})
        io.write_features(path, table)
        back = io.read_features(path).rows["a"]
        assert back.tobytes() == table.rows["a"].tobytes()

    def test_odd_session_ids(self, tmp_path):
        sessions = [SessionRecord('quote "q", comma', ("ä.png", "b,c"), 0, 1)]
        io.write_sessions(tmp_path / "s.jsonl", sessions)
        assert io.read_sessions(tmp_path / "s.jsonl") == sessions

    def test_trajectory(self, tmp_path):
        traj = Trajectory("TS", np.array([0, 3, 3, 1]), np.array([1, 0, 1, 1]))
        io.write_trajectory(tmp_path / "t.csv", traj)
        text = (tmp_path / "t.csv").read_text()
        assert text.splitlines()[:2] == ["t,arm,reward,cum_reward", "1,0,1,1"]
        back = io.read_trajectory(tmp_path / "t.csv", "TS")
        assert np.array_equal(back.arms, traj.arms) and np.array_equal(back.rewards, traj.rewards)

    def test_summary(self, tmp_path):
        rows = [SummaryRow("simctx", "CF-TS", 3000, 0.1 + 0.2, 1 / 3, 100, "TS", 1e-300),
                SummaryRow("simctx", "TS", 3000, 0.25, 0.0, 1, "CF-TS", None)]
        io.write_summary(tmp_path / "s.csv", rows)
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == \
            "context,policy,cutoff,mean_acc,std_acc,n,best_other,p_vs_best_other"
        assert io.read_summary(tmp_path / "s.csv") == rows


class TestParseErrors:
    def write(self, tmp_path, name, text):
        p = tmp_path / name
        p.write_text(text)
        return p

    @pytest.mark.parametrize("bad,fragment", [
        ('{"session_id": "b", "clicked_images": ["x"], "intuition": 0}', "missing field"),
        ('{"session_id": "b", "clicked_images": [], "intuition": 0, "true_label": 0}', "no clicked"),
        ('{"session_id": "b", "clicked_images": ["x"], "intuition": "1", "true_label": 0}', "integer"),
        ('{"session_id": "b", "clicked_images": ["x"], "intuition": 9, "true_label": 0}', "outside"),
        ('{"session_id": "a", "clicked_images": ["x"], "intuition": 0, "true_label": 0}', "duplicate"),
        ("{not json", "invalid JSON"),
        ("[1, 2]", "JSON object"),
    ])
    def test_sessions_report_line(self, tmp_path, bad, fragment):
        good = '{"session_id": "a", "clicked_images": ["x", "y"], "intuition": 0, "true_label": 1}'
        p = self.write(tmp_path, "s.jsonl", good + "\n\n" + bad + "\n")
        with pytest.raises(io.DataError, match=rf"s\.jsonl:3: .*{fragment}"):
            io.read_sessions(p, num_arms=5)

    def test_empty_sessions(self, tmp_path):
        with pytest.raises(io.DataError, match="no sessions"):
            io.read_sessions(self.write(tmp_path, "s.jsonl", "\n"))

    @pytest.mark.parametrize("text,line", [
        ("id,f0\na,1.0\n", 1),
        ("image_id,f0,f2\na,1,2\n", 1),
        ("image_id,f0,f1\na,1.0,2.0\nb,1.0\n", 3),
        ("image_id,f0\na,1.0\nb,abc\n", 3),
        ("image_id,f0\na,1.0\na,2.0\n", 3),
        ("image_id,f0\na,nan\n", 2),
    ])
    def test_features_report_line(self, tmp_path, text, line):
        with pytest.raises(io.DataError, match=rf"f\.csv:{line}:"):
            io.read_features(self.write(tmp_path, "f.csv", text))

    def test_unknown_image(self):
        table = ImageFeatureTable(1, {"a": np.zeros(1)})
        with pytest.raises(io.DataError, match="unknown image 'b'"):
            io.check_images_known([SessionRecord("s", ("a", "b"), 0, 0)], table)

    def test_inconsistent_trajectory(self, tmp_path):
        p = self.write(tmp_path, "t.csv", "t,arm,reward,cum_reward\n1,0,1,1\n2,0,1,1\n")
        with pytest.raises(io.DataError, match="t.csv:3"):
            io.read_trajectory(p)

    def test_bad_summary_header(self, tmp_path):
        with pytest.raises(io.DataError):
            io.read_summary(self.write(tmp_path, "s.csv", "a,b\n"))


def test_json_helpers(tmp_path):
    io.write_json(tmp_path / "m.json", {"b": 1, "a": [1, 2]})
    assert io.read_json(tmp_path / "m.json") == {"a": [1, 2], "b": 1}
    (tmp_path / "bad.json").write_text("{\n  oops")
    with pytest.raises(io.DataError, match="bad.json:2"):
        io.read_json(tmp_path / "bad.json")
    assert len(io.source_hash()) == 64
