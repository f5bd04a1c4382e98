"""Hand-constructed annotation fixtures with known-by-construction violations.

The builder injects each defect explicitly and records the expected code set
at injection time, so tests compare the validator against ground truth that
was never produced by the validator itself.
"""

from __future__ import annotations

import random

from riskclip.annotations import (
    AnnotationRecord,
    TemporalWindow,
    Violation,
    ViolationCode,
)

ALL_CODES = set(ViolationCode)


def _clean_record(rng: random.Random, idx: int) -> AnnotationRecord:
    t0 = round(rng.uniform(0.5, 4.0), 3)
    t3 = round(t0 + rng.uniform(1.0, 5.0), 3)
    t4 = t3 + 2.0
    t5 = round(t4 + rng.uniform(1.0, 6.0), 3)
    near_miss = rng.random() < 0.3
    mu = round(rng.uniform(t0, t5), 3) if near_miss else None
    return AnnotationRecord(
        video_id=f"vid_{idx:03d}",
        class16=rng.randrange(15),  # any risk class; Normal handled separately
        window=TemporalWindow(t0=t0, t3=t3, t4=t4, t5=t5, mu=mu),
        fps=rng.choice([25.0, 30.0]),
        near_miss=near_miss,
    )


def build_violation_fixture(seed: int = 7, size: int = 50):
    """Return (records, expected_codes, overrides).

    ``expected_codes`` maps video_id to the exact set of ViolationCode values
    a correct validator must report; every one of the seven codes appears in
    at least one record, and at least one record carries several at once.
    """
    rng = random.Random(seed)
    records: list[AnnotationRecord] = []
    expected: dict[str, set[ViolationCode]] = {}
    overrides: dict[str, list[Violation]] = {}

    def add(record: AnnotationRecord, codes: set[ViolationCode]):
        records.append(record)
        expected[record.video_id] = codes

    idx = 0

    def next_clean() -> AnnotationRecord:
        nonlocal idx
        record = _clean_record(rng, idx)
        idx += 1
        return record

    import dataclasses

    def with_window(record: AnnotationRecord, **changes) -> AnnotationRecord:
        return dataclasses.replace(record, window=dataclasses.replace(record.window, **changes))

    # One record per defect, injected explicitly.
    r = next_clean()
    add(dataclasses.replace(r, ego_involved=False), {ViolationCode.UNINVOLVED_EGO})

    r = next_clean()
    add(dataclasses.replace(r, real_footage=False), {ViolationCode.VIDEO_GAME})

    r = next_clean()
    overrides[r.video_id] = [Violation(ViolationCode.WRONG_CLASS, "re-watched: actually a cyclist")]
    add(r, {ViolationCode.WRONG_CLASS})

    r = next_clean()  # Normal label yet a near-miss event is asserted
    r = dataclasses.replace(r, class16=15, near_miss=True)
    r = with_window(r, mu=r.window.t0 + 0.5)
    add(r, {ViolationCode.NORMAL_ON_RISK})

    r = next_clean()  # gap off by a full frame at 25 fps
    add(with_window(r, t4=r.window.t3 + 2.04), {ViolationCode.GAP_VIOLATION})

    r = next_clean()  # incident ends before it starts
    add(with_window(r, t0=r.window.t3 + 1.0, t4=None), {ViolationCode.WINDOW_ORDER})

    r = next_clean()  # mu after the video ends
    r = dataclasses.replace(r, near_miss=True)
    add(with_window(r, mu=r.window.t5 + 1.0), {ViolationCode.MU_OUT_OF_RANGE})

    # Compound cases.
    r = next_clean()
    r = dataclasses.replace(r, ego_involved=False, real_footage=False)
    add(r, {ViolationCode.UNINVOLVED_EGO, ViolationCode.VIDEO_GAME})

    r = next_clean()
    r = with_window(r, t4=r.window.t3 + 1.5, mu=-1.0)
    r = dataclasses.replace(r, near_miss=True)
    add(r, {ViolationCode.GAP_VIOLATION, ViolationCode.MU_OUT_OF_RANGE})

    r = next_clean()  # t4 beyond the end of the video, gap still exact
    t3 = r.window.t5 - 0.5
    r = with_window(r, t3=t3, t4=t3 + 2.0)
    add(r, {ViolationCode.WINDOW_ORDER})

    # Boundary cases that must stay clean.
    r = next_clean()  # gap error right at the tolerance
    add(with_window(r, t4=r.window.t3 + 2.0 + 9e-7), set())

    r = next_clean()  # mu exactly at the window edges
    r = dataclasses.replace(r, near_miss=True)
    add(with_window(r, mu=r.window.t0), set())

    r = next_clean()
    r = dataclasses.replace(r, near_miss=True)
    add(with_window(r, mu=r.window.t5), set())

    r = next_clean()  # t3 == t5 is allowed; no t4 fits, so omit it
    add(with_window(r, t3=r.window.t5, t4=None), set())

    r = next_clean()  # Normal with no asserted risk event is fine
    add(dataclasses.replace(r, class16=15, near_miss=False), set())

    # Fill with clean records, a few with injected single defects for volume.
    while len(records) < size:
        r = next_clean()
        roll = rng.random()
        if roll < 0.15:
            add(dataclasses.replace(r, ego_involved=False), {ViolationCode.UNINVOLVED_EGO})
        elif roll < 0.25:
            delta = rng.choice([-0.2, 0.1, 0.5])
            add(with_window(r, t4=r.window.t3 + 2.0 + delta), {ViolationCode.GAP_VIOLATION})
        else:
            add(r, set())

    return records, expected, overrides
