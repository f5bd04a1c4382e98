import dataclasses
import json

import pytest

from corpus_fixture import build_violation_fixture
from riskclip.annotations import (
    AnnotationFieldError,
    AnnotationParseError,
    AnnotationRecord,
    TemporalWindow,
    ViolationCode,
    derive_normal_start,
    filter_corpus,
    parse_annotations,
    serialize_annotations,
    validate_record,
)


def make_record(**overrides) -> AnnotationRecord:
    base = AnnotationRecord(
        video_id="vid",
        class16=1,
        window=TemporalWindow(t0=1.0, t3=3.5, t4=5.5, t5=9.0),
        fps=30.0,
    )
    window_changes = {k: overrides.pop(k) for k in list(overrides) if k in ("t0", "t3", "t4", "t5", "mu", "t1", "t2")}
    if window_changes:
        base = dataclasses.replace(base, window=dataclasses.replace(base.window, **window_changes))
    return dataclasses.replace(base, **overrides)


class TestValidation:
    def test_clean_record_has_no_violations(self):
        assert validate_record(make_record()).ok

    def test_uninvolved_ego(self):
        report = validate_record(make_record(ego_involved=False))
        assert report.codes() == {ViolationCode.UNINVOLVED_EGO}

    def test_video_game(self):
        report = validate_record(make_record(real_footage=False))
        assert report.codes() == {ViolationCode.VIDEO_GAME}

    def test_normal_label_with_near_miss_event(self):
        report = validate_record(make_record(class16=15, near_miss=True, mu=2.0))
        assert report.codes() == {ViolationCode.NORMAL_ON_RISK}

    def test_normal_label_without_event_is_clean(self):
        assert validate_record(make_record(class16=15)).ok

    def test_gap_violation_beyond_tolerance(self):
        report = validate_record(make_record(t4=5.5 + 2e-6))
        assert report.codes() == {ViolationCode.GAP_VIOLATION}

    def test_gap_within_tolerance_is_clean(self):
        assert validate_record(make_record(t4=5.5 + 5e-7)).ok

    def test_missing_t4_is_not_a_gap_violation(self):
        assert validate_record(make_record(t4=None)).ok

    @pytest.mark.parametrize(
        "changes",
        [
            {"t0": -0.5},
            {"t0": 3.5},           # t0 == t3
            {"t3": 0.5},           # ends before it starts
            {"t5": 3.0},           # video ends before the incident does
            {"t4": 9.0},           # normal segment may not start at the last instant
        ],
    )
    def test_window_order(self, changes):
        report = validate_record(make_record(**changes))
        assert ViolationCode.WINDOW_ORDER in report.codes()

    def test_t3_equal_t5_allowed(self):
        assert validate_record(make_record(t3=9.0, t4=None)).ok

    def test_mu_out_of_range(self):
        assert validate_record(make_record(mu=0.5)).codes() == {ViolationCode.MU_OUT_OF_RANGE}
        assert validate_record(make_record(mu=9.5)).codes() == {ViolationCode.MU_OUT_OF_RANGE}

    def test_mu_at_bounds_is_clean(self):
        assert validate_record(make_record(mu=1.0)).ok
        assert validate_record(make_record(mu=9.0)).ok

    def test_near_miss_without_mu(self):
        report = validate_record(make_record(near_miss=True, mu=None))
        assert ViolationCode.MU_OUT_OF_RANGE in report.codes()

    def test_wrong_class_comes_only_from_overrides(self):
        record = make_record()
        assert validate_record(record).ok
        from riskclip.annotations import Violation

        overrides = {"vid": [Violation(ViolationCode.WRONG_CLASS, "mislabelled")]}
        assert validate_record(record, overrides).codes() == {ViolationCode.WRONG_CLASS}

    def test_violations_accumulate(self):
        report = validate_record(make_record(ego_involved=False, real_footage=False, t4=6.0))
        assert report.codes() == {
            ViolationCode.UNINVOLVED_EGO,
            ViolationCode.VIDEO_GAME,
            ViolationCode.GAP_VIOLATION,
        }


class TestFixtureCorpus:
    """The validator must match a 50-record fixture with injected defects."""

    def test_every_code_covered_and_exact_match(self):
        records, expected, overrides = build_violation_fixture()
        assert len(records) == 50
        covered = set().union(*expected.values())
        assert covered == set(ViolationCode)

        for record in records:
            got = validate_record(record, overrides).codes()
            assert got == expected[record.video_id], record.video_id

    def test_fixture_is_deterministic(self):
        a = build_violation_fixture(seed=7)[0]
        b = build_violation_fixture(seed=7)[0]
        assert a == b


class TestDeriveNormalStart:
    def test_two_second_gap(self):
        assert derive_normal_start(3.5) == 5.5
        assert derive_normal_start(0.0) == 2.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            derive_normal_start(-1.0)

    def test_derived_value_passes_gap_check(self):
        record = make_record(t4=derive_normal_start(3.5))
        assert ViolationCode.GAP_VIOLATION not in validate_record(record).codes()


class TestParsing:
    def write(self, tmp_path, lines):
        path = tmp_path / "ann.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def obj(self, **overrides):
        base = {
            "video_id": "v1",
            "class16": 3,
            "t0": 1.0,
            "t3": 3.5,
            "t4": 5.5,
            "t5": 9.0,
            "mu": None,
            "fps": 30.0,
            "ego_involved": True,
            "real_footage": True,
            "near_miss": False,
        }
        base.update(overrides)
        return base

    def test_round_trip(self, tmp_path):
        records, _, _ = build_violation_fixture()
        path = tmp_path / "out.jsonl"
        serialize_annotations(records, path)
        assert parse_annotations(path) == records

    def test_serialize_is_stable(self, tmp_path):
        records, _, _ = build_violation_fixture()
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        serialize_annotations(records, p1)
        serialize_annotations(parse_annotations(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_class_label_accepted(self, tmp_path):
        path = self.write(tmp_path, [json.dumps(self.obj(class16="Hitting car"))])
        assert parse_annotations(path)[0].class16 == 10

    def test_blank_lines_skipped(self, tmp_path):
        path = self.write(tmp_path, [json.dumps(self.obj()), "", json.dumps(self.obj(video_id="v2"))])
        assert [r.video_id for r in parse_annotations(path)] == ["v1", "v2"]

    def test_invalid_json_reports_line_number(self, tmp_path):
        path = self.write(tmp_path, [json.dumps(self.obj()), "{not json"])
        with pytest.raises(AnnotationParseError) as exc:
            parse_annotations(path)
        assert exc.value.line_no == 2

    def test_bad_field_reports_name_and_line(self, tmp_path):
        path = self.write(tmp_path, [json.dumps(self.obj(fps=0))])
        with pytest.raises(AnnotationFieldError) as exc:
            parse_annotations(path)
        assert exc.value.fieldname == "fps"
        assert exc.value.line_no == 1

    @pytest.mark.parametrize(
        "overrides,fieldname",
        [
            ({"class16": 16}, "class16"),
            ({"class16": -1}, "class16"),
            ({"class16": True}, "class16"),
            ({"class16": "no such label"}, "class16"),
            ({"t0": "soon"}, "t0"),
            ({"t3": float("nan")}, "t3"),
            ({"fps": -25.0}, "fps"),
            ({"ego_involved": 1}, "ego_involved"),
            ({"near_miss": True}, "mu"),  # mu required when near_miss set
            ({"video_id": ""}, "video_id"),
        ],
    )
    def test_field_errors(self, tmp_path, overrides, fieldname):
        path = self.write(tmp_path, [json.dumps(self.obj(**overrides))])
        with pytest.raises(AnnotationFieldError) as exc:
            parse_annotations(path)
        assert exc.value.fieldname == fieldname

    def test_missing_field(self, tmp_path):
        obj = self.obj()
        del obj["t5"]
        path = self.write(tmp_path, [json.dumps(obj)])
        with pytest.raises(AnnotationFieldError) as exc:
            parse_annotations(path)
        assert exc.value.fieldname == "t5"

    def test_passthrough_times_preserved(self, tmp_path):
        path = self.write(tmp_path, [json.dumps(self.obj(t1=1.5, t2=2.5))])
        record = parse_annotations(path)[0]
        assert (record.window.t1, record.window.t2) == (1.5, 2.5)
        out = tmp_path / "rt.jsonl"
        serialize_annotations([record], out)
        assert parse_annotations(out)[0] == record

    def test_ordering_problems_parse_fine(self, tmp_path):
        path = self.write(tmp_path, [json.dumps(self.obj(t0=8.0))])
        record = parse_annotations(path)[0]
        assert ViolationCode.WINDOW_ORDER in validate_record(record).codes()


class TestFilterCorpus:
    def test_removes_only_offending_records(self):
        keep = make_record(video_id="keep")
        messy = make_record(video_id="messy", t4=6.0)  # gap problem, but stays
        drop_ego = make_record(video_id="ego", ego_involved=False)
        drop_game = make_record(video_id="game", real_footage=False)
        kept = filter_corpus([keep, drop_ego, messy, drop_game])
        assert [r.video_id for r in kept] == ["keep", "messy"]

    def test_idempotent(self):
        records, _, _ = build_violation_fixture()
        once = filter_corpus(records)
        assert filter_corpus(once) == once
