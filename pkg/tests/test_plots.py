import numpy as np
import pytest

from rail.engine import EvalRecord, TrialMetrics
from rail.plots import PlotDataError, aggregate_series, emit_plot, write_data_table


def trial(eval_means, every=4000, seed=0):
    records = [
        EvalRecord(every * (i + 1), float(v), float(v), float(v), {})
        for i, v in enumerate(eval_means)
    ]
    return TrialMetrics("pendulum", seed, "d", records, {}, expert_mean_return=-190.0)


class TestAggregate:
    def test_single_trial_band_collapses(self):
        agg = aggregate_series([trial([1.0, 2.0, 3.0])])
        np.testing.assert_array_equal(agg["mean"], agg["min"])
        np.testing.assert_array_equal(agg["mean"], agg["max"])

    def test_constant_trials_mean_and_band(self):
        agg = aggregate_series([trial([1.0] * 4), trial([3.0] * 4, seed=1)])
        np.testing.assert_array_equal(agg["mean"], [2.0] * 4)
        np.testing.assert_array_equal(agg["min"], [1.0] * 4)
        np.testing.assert_array_equal(agg["max"], [3.0] * 4)

    def test_mismatched_grids_resampled_with_warning(self):
        t1 = trial([0.0, 1.0, 2.0, 3.0], every=1000)   # fine grid, steps 1k..4k
        t2 = trial([0.0, 4.0], every=2000)             # coarse grid, steps 2k, 4k
        with pytest.warns(UserWarning, match="resampling"):
            agg = aggregate_series([t1, t2])
        np.testing.assert_array_equal(agg["env_steps"], [2000, 4000])
        np.testing.assert_allclose(agg["mean"], [(1.0 + 0.0) / 2, (3.0 + 4.0) / 2])

    def test_failed_trials_skipped(self):
        ok = trial([1.0, 2.0])
        bad = TrialMetrics("pendulum", 9, "d", [], {}, failed=True)
        agg = aggregate_series([ok, bad])
        assert agg["n_trials"] == 1
        with pytest.raises(PlotDataError):
            aggregate_series([bad])


class TestEmit:
    def test_figure_and_table_written(self, tmp_path):
        series = {
            "saifo": [trial([1.0, 2.0, 3.0]), trial([2.0, 3.0, 4.0], seed=1)],
            "gaifo_ppo": [trial([0.0, 0.5, 1.0], seed=2)],
        }
        fig, table = emit_plot(series, tmp_path / "fig.pdf", title="compare")
        assert fig.exists() and fig.stat().st_size > 0
        assert table.exists() and table.suffix == ".tsv"
        lines = table.read_text().splitlines()
        assert lines[0] == "series\tenv_steps\tmean\tmin\tmax"
        assert len(lines) == 1 + 3 + 3

    def test_table_is_lossless(self, tmp_path):
        series = {"s": [trial([1.0, 2.0]), trial([3.0, 5.0], seed=1)]}
        path = tmp_path / "data.tsv"
        write_data_table({k: aggregate_series(v) for k, v in series.items()}, path)
        rows = [l.split("\t") for l in path.read_text().splitlines()[1:]]
        means = [float(r[2]) for r in rows]
        mins = [float(r[3]) for r in rows]
        maxs = [float(r[4]) for r in rows]
        assert means == [2.0, 3.5]
        assert mins == [1.0, 2.0]
        assert maxs == [3.0, 5.0]

    def test_svg_output(self, tmp_path):
        fig, _ = emit_plot({"s": [trial([1.0, 2.0])]}, tmp_path / "fig.svg")
        assert fig.read_text().lstrip().startswith("<?xml")
