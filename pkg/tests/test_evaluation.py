import pytest

from spandep.evaluation import (
    ErrorBreakdown,
    error_breakdown,
    eval_frames,
    eval_sdp,
    length_bin,
    length_binned_pr,
    write_error_breakdown_csv,
    write_length_bins_csv,
)
from spandep.parts import (
    DependencyGraph,
    FrameAnnotations,
    FrameParse,
    Ontology,
    SpandepError,
    Target,
    make_sentence,
)

ONT = Ontology(
    {"sit.v": ("Rest", "Meet"), "run.v": ("Motion",)},
    {"Rest": ("Agent", "Place"), "Meet": ("Agent", "Place"),
     "Motion": ("Mover", "Path")})


def fn_sent(n, parses, id="s"):
    anns = tuple(
        FrameParse(Target(ts, te, lu), frame,
                   frozenset(tuple(a) for a in args))
        for (ts, te, lu), frame, args in parses)
    return make_sentence(["w"] * n, id=id, supervision=FrameAnnotations(anns))


def dm_sent(n, arcs, top=None, id="s"):
    g = DependencyGraph(frozenset(tuple(a) for a in arcs), top=top)
    return make_sentence(["w"] * n, id=id, supervision=g)


SIT = (4, 4, "sit.v")
RUN = (1, 1, "run.v")


class TestEvalFrames:
    def test_perfect(self):
        s = [fn_sent(6, [(SIT, "Rest", [(0, 1, "Agent")])])]
        res = eval_frames(s, s, ONT)
        assert (res.precision, res.recall, res.f1) == (1.0, 1.0, 1.0)
        assert res.frame_accuracy == 1.0
        assert res.ambiguous_frame_accuracy == 1.0
        assert res.n_ambiguous_targets == 1

    def test_wrong_span_argument(self):
        gold = [fn_sent(6, [(SIT, "Rest", [(0, 1, "Agent")])])]
        pred = [fn_sent(6, [(SIT, "Rest", [(0, 2, "Agent")])])]
        res = eval_frames(gold, pred, ONT)
        assert (res.precision, res.recall, res.f1) == (0.5, 0.5, 0.5)
        assert res.frame_accuracy == 1.0

    def test_wrong_frame_correct_argument(self):
        gold = [fn_sent(6, [(SIT, "Rest", [(0, 1, "Agent")])])]
        pred = [fn_sent(6, [(SIT, "Meet", [(0, 1, "Agent")])])]
        res = eval_frames(gold, pred, ONT)
        assert (res.precision, res.recall) == (0.5, 0.5)
        assert res.frame_accuracy == 0.0
        assert res.ambiguous_frame_accuracy == 0.0

    def test_unambiguous_lu_excluded_from_ambiguous_accuracy(self):
        gold = [fn_sent(6, [(SIT, "Rest", []), (RUN, "Motion", [])])]
        pred = [fn_sent(6, [(SIT, "Rest", []), (RUN, "Motion", [])])]
        res = eval_frames(gold, pred, ONT)
        assert res.n_targets == 2
        assert res.n_ambiguous_targets == 1
        assert res.ambiguous_frame_accuracy == 1.0

    def test_accuracy_split(self):
        gold = [fn_sent(6, [(SIT, "Rest", []), (RUN, "Motion", [])])]
        pred = [fn_sent(6, [(SIT, "Rest", []), (RUN, "Motion", [])])]
        bad = [fn_sent(6, [(SIT, "Meet", []), (RUN, "Motion", [])])]
        res = eval_frames(gold, bad, ONT)
        assert res.frame_accuracy == 0.5
        assert res.ambiguous_frame_accuracy == 0.0
        res = eval_frames(gold, pred, ONT)
        assert res.frame_accuracy == 1.0

    def test_overprediction(self):
        gold = [fn_sent(6, [(SIT, "Rest", [])])]
        pred = [fn_sent(6, [(SIT, "Rest", [(0, 0, "Agent")])])]
        res = eval_frames(gold, pred, ONT)
        assert res.precision == 0.5
        assert res.recall == 1.0
        assert res.f1 == pytest.approx(2 / 3)

    def test_micro_over_sentences(self):
        gold = [fn_sent(6, [(SIT, "Rest", [(0, 1, "Agent")])], id="a"),
                fn_sent(6, [(SIT, "Meet", [])], id="b")]
        pred = [fn_sent(6, [(SIT, "Rest", [(0, 1, "Agent")])], id="a"),
                fn_sent(6, [(SIT, "Rest", [])], id="b")]
        res = eval_frames(gold, pred, ONT)
        assert res.tp == 2 and res.gold_total == 3 and res.predicted_total == 3
        assert res.precision == res.recall == pytest.approx(2 / 3)

    def test_reordering_invariance(self):
        a = fn_sent(6, [(SIT, "Rest", [(0, 1, "Agent")])], id="a")
        b = fn_sent(6, [(SIT, "Meet", [(2, 3, "Place")])], id="b")
        pa = fn_sent(6, [(SIT, "Rest", [(0, 2, "Agent")])], id="a")
        pb = fn_sent(6, [(SIT, "Meet", [(2, 3, "Place")])], id="b")
        r1 = eval_frames([a, b], [pa, pb], ONT)
        r2 = eval_frames([b, a], [pb, pa], ONT)
        assert r1 == r2

    def test_misalignment_errors(self):
        s = [fn_sent(6, [(SIT, "Rest", [])])]
        with pytest.raises(SpandepError, match="differ in size"):
            eval_frames(s, [], ONT)
        with pytest.raises(SpandepError, match="token counts differ"):
            eval_frames(s, [fn_sent(5, [(SIT, "Rest", [])])], ONT)
        with pytest.raises(SpandepError, match="targets differ"):
            eval_frames(s, [fn_sent(6, [((2, 2, "sit.v"), "Rest", [])])], ONT)
        with pytest.raises(SpandepError, match="no frame annotations"):
            eval_frames(s, [dm_sent(6, [])], ONT)


class TestEvalSdp:
    def test_identical(self):
        s = [dm_sent(3, [(0, 1, "a")], top=0)]
        res = eval_sdp(s, s)
        assert (res.precision, res.recall, res.f1) == (1.0, 1.0, 1.0)

    def test_overprediction(self):
        gold = [dm_sent(3, [(0, 1, "a")])]
        pred = [dm_sent(3, [(0, 1, "a"), (0, 2, "b")])]
        res = eval_sdp(gold, pred)
        assert res.precision == 0.5
        assert res.recall == 1.0
        assert res.f1 == pytest.approx(2 / 3)

    def test_label_only_mismatch(self):
        gold = [dm_sent(3, [(0, 1, "a")])]
        pred = [dm_sent(3, [(0, 1, "b")])]
        res = eval_sdp(gold, pred)
        assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)

    def test_top_flag(self):
        gold = [dm_sent(3, [(0, 1, "a")], top=0)]
        pred = [dm_sent(3, [(0, 1, "a")], top=2)]
        with_top = eval_sdp(gold, pred)
        assert with_top.precision == with_top.recall == 0.5
        without = eval_sdp(gold, pred, include_top=False)
        assert (without.precision, without.recall) == (1.0, 1.0)

    def test_missing_top_counts_once(self):
        gold = [dm_sent(3, [(0, 1, "a")], top=0)]
        pred = [dm_sent(3, [(0, 1, "a")])]
        res = eval_sdp(gold, pred)
        assert res.tp == 1 and res.gold_total == 2 and res.predicted_total == 1

    def test_micro_over_sentences(self):
        gold = [dm_sent(3, [(0, 1, "a")], id="a"),
                dm_sent(3, [(0, 1, "a"), (1, 2, "b")], id="b")]
        pred = [dm_sent(3, [(0, 1, "a")], id="a"),
                dm_sent(3, [(0, 1, "a"), (2, 1, "b")], id="b")]
        res = eval_sdp(gold, pred)
        assert res.tp == 2 and res.gold_total == 3 and res.predicted_total == 3

    def test_misalignment_errors(self):
        s = [dm_sent(3, [(0, 1, "a")])]
        with pytest.raises(SpandepError, match="differ in size"):
            eval_sdp(s, s + s)
        with pytest.raises(SpandepError, match="no dependency graph"):
            eval_sdp(s, [fn_sent(3, [])])


class TestErrorBreakdown:
    def run(self, gold_parses, pred_parses):
        gold = [fn_sent(8, gold_parses)]
        pred = [fn_sent(8, pred_parses)]
        return error_breakdown(gold, pred)

    def test_perfect(self):
        b = self.run([(SIT, "Rest", [(0, 1, "Agent")])],
                     [(SIT, "Rest", [(0, 1, "Agent")])])
        assert b == ErrorBreakdown(0, 0, 0, 0, 0, 0)
        assert b.total == 0

    def test_frame_error_only(self):
        b = self.run([(SIT, "Rest", [(0, 1, "Agent")])],
                     [(SIT, "Meet", [(0, 1, "Agent")])])
        assert b.frame_errors == 1 and b.total == 1

    def test_role_error_correct_frame(self):
        b = self.run([(SIT, "Rest", [(0, 1, "Agent")])],
                     [(SIT, "Rest", [(0, 1, "Place")])])
        assert b.role_errors == 1
        assert b.role_errors_correct_frame == 1
        assert b.total == 1

    def test_role_error_wrong_frame(self):
        b = self.run([(SIT, "Rest", [(0, 1, "Agent")])],
                     [(SIT, "Meet", [(0, 1, "Place")])])
        assert b.frame_errors == 1
        assert b.role_errors == 1
        assert b.role_errors_correct_frame == 0
        assert b.total == 2

    def test_span_error(self):
        b = self.run([(SIT, "Rest", [(0, 2, "Agent")])],
                     [(SIT, "Rest", [(1, 3, "Agent")])])
        assert b.span_errors == 1
        assert b.missing_arguments == 0
        assert b.total == 1

    def test_argument_and_missing(self):
        b = self.run([(SIT, "Rest", [(0, 1, "Agent")])],
                     [(SIT, "Rest", [(2, 3, "Place")])])
        assert b.argument_errors == 1
        assert b.missing_arguments == 1
        assert b.total == 2

    def test_overlap_without_span_or_role_match(self):
        b = self.run([(SIT, "Rest", [(0, 2, "Agent")])],
                     [(SIT, "Rest", [(1, 3, "Place")])])
        assert b.argument_errors == 1
        assert b.missing_arguments == 0
        assert b.total == 1

    def test_counts_partition_discrepancies(self):
        gold = [fn_sent(8, [(SIT, "Rest",
                             [(0, 1, "Agent"), (2, 3, "Place")])], id="a"),
                fn_sent(8, [(SIT, "Meet", [(5, 6, "Agent")])], id="b")]
        pred = [fn_sent(8, [(SIT, "Meet",
                             [(0, 1, "Place"), (5, 6, "Agent")])], id="a"),
                fn_sent(8, [(SIT, "Meet", [])], id="b")]
        b = error_breakdown(gold, pred)
        assert b.frame_errors == 1
        assert b.role_errors == 1 and b.role_errors_correct_frame == 0
        assert b.argument_errors == 1
        assert b.missing_arguments == 2
        assert b.total == 5
        assert sum(b.percentages()[k] for k in (
            "frame_errors", "role_errors", "span_errors",
            "argument_errors", "missing_arguments")) == pytest.approx(100.0)

    def test_percentages_empty(self):
        b = ErrorBreakdown(0, 0, 0, 0, 0, 0)
        assert all(v == 0.0 for v in b.percentages().values())


class TestLengthBins:
    def test_bin_formula(self):
        assert length_bin(1) == 0
        assert length_bin(2) == 1
        assert length_bin(3) == 2
        assert length_bin(4) == 2
        assert length_bin(8) == 4
        with pytest.raises(SpandepError):
            length_bin(0)

    def test_single_match(self):
        s = [fn_sent(8, [(SIT, "Rest", [(0, 0, "Agent")])])]
        rows = length_binned_pr(s, s)
        assert len(rows) == 1
        assert rows[0].bin == 0
        assert (rows[0].precision, rows[0].recall, rows[0].count) == (1, 1, 1)

    def test_empty_bins_omitted(self):
        s = [fn_sent(8, [(SIT, "Rest",
                          [(0, 0, "Agent"), (1, 4, "Place")])])]
        rows = length_binned_pr(s, s)
        assert [r.bin for r in rows] == [0, 2]

    def test_precision_by_predicted_recall_by_gold(self):
        gold = [fn_sent(8, [(SIT, "Rest", [(0, 0, "Agent")])])]
        pred = [fn_sent(8, [(SIT, "Rest", [(0, 1, "Agent")])])]
        rows = {r.bin: r for r in length_binned_pr(gold, pred)}
        assert rows[0].precision == 0.0 and rows[0].recall == 0.0
        assert rows[0].count == 1
        assert rows[1].precision == 0.0 and rows[1].recall == 0.0
        assert rows[1].count == 1

    def test_micro_within_bin(self):
        gold = [fn_sent(8, [(SIT, "Rest", [(0, 0, "Agent")])])]
        pred = [fn_sent(8, [(SIT, "Rest",
                             [(0, 0, "Agent"), (3, 3, "Place")])])]
        (row,) = length_binned_pr(gold, pred)
        assert row.bin == 0
        assert row.precision == 0.5
        assert row.recall == 1.0
        assert row.count == 2

    def test_mixed_lengths_exact(self):
        gold = [fn_sent(10, [(SIT, "Rest",
                              [(0, 1, "Agent"), (5, 8, "Place")])])]
        pred = [fn_sent(10, [(SIT, "Rest",
                              [(0, 1, "Agent"), (5, 9, "Place")])])]
        rows = {r.bin: r for r in length_binned_pr(gold, pred)}
        assert rows[1] .precision == 1.0 and rows[1].recall == 1.0
        assert rows[2].precision == 0.0 and rows[2].recall == 0.0
        assert rows[3].count == 1 and rows[3].precision == 0.0


class TestCsvWriters:
    def test_length_bins_csv(self, tmp_path):
        s = [fn_sent(8, [(SIT, "Rest", [(0, 0, "Agent")])])]
        p = tmp_path / "bins.csv"
        write_length_bins_csv(length_binned_pr(s, s), p)
        assert p.read_bytes() == (b"bin,precision,recall,count\n"
                                  b"0,1.000000,1.000000,1\n")

    def test_breakdown_csv(self, tmp_path):
        b = ErrorBreakdown(1, 1, 1, 0, 0, 2)
        p = tmp_path / "err.csv"
        write_error_breakdown_csv(b, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "category,count,percent"
        assert lines[1] == "frame_errors,1,25.00"
        assert lines[3] == "role_errors_correct_frame,1,25.00"
        assert lines[6] == "missing_arguments,2,50.00"
