"""
Tests for src/harness.py - experiment configs, trials, sweeps and file recovery.
"""
import json
import math

import pytest
import numpy as np
import pandas as pd

from src.asap import recover
from src.errors import InvalidSpecError, OutputPathError, SignalFileError
from src.harness import (
    SUCCESS_TOL,
    TIMING_COLUMNS,
    ExperimentConfig,
    TrialRecord,
    make_instance,
    recover_file,
    run_efficiency,
    run_experiment,
    run_impulse,
    run_noise,
    run_phase_transition,
    summarize_trials,
    write_instance,
)
from src.signal_io import read_report, read_signal, read_sparse, read_trials, write_signal
from src.simgen import gen_signal


def _non_timing(records):
    df = pd.DataFrame([r.to_dict() for r in records])
    return df.drop(columns=list(TIMING_COLUMNS))


class TestExperimentConfig:
    """Tests for ExperimentConfig validation and loading."""

    def test_unknown_kind(self):
        """kind must be one of the supported experiments."""
        with pytest.raises(InvalidSpecError):
            ExperimentConfig(kind="bogus")

    def test_empty_axis(self):
        """Grid axes must be non-empty."""
        with pytest.raises(InvalidSpecError):
            ExperimentConfig(kind="phase_transition", r=[])

    def test_trials_positive(self):
        """At least one trial per cell."""
        with pytest.raises(InvalidSpecError):
            ExperimentConfig(kind="noise", trials=0)

    def test_unknown_key(self):
        """Typos in config files are reported."""
        with pytest.raises(InvalidSpecError):
            ExperimentConfig.from_dict({"kind": "noise", "trails": 3})

    def test_scalars_promoted(self):
        """Scalar axis values become one-element lists; 'inf' SNR parses."""
        config = ExperimentConfig.from_dict({"kind": "noise", "n": 63, "snr_db": ["inf", 20]})
        assert config.n == [63]
        assert config.snr_db == [math.inf, 20.0]

    def test_separation_per_n(self):
        """'1.5/n' resolves against the signal length."""
        config = ExperimentConfig(kind="phase_transition", separation="1.5/n")
        assert config.separation_for(125) == pytest.approx(0.012)
        assert ExperimentConfig(kind="phase_transition").separation_for(125) is None

    def test_impulse_default_scale(self):
        """Impulse experiments default to c = 10."""
        assert ExperimentConfig.from_dict({"kind": "impulse"}).c == [10.0]

    def test_yaml(self, tmp_path):
        """YAML files map onto the dataclass."""
        path = tmp_path / "pt.yaml"
        path.write_text("kind: phase_transition\nn: 63\nr: [1, 2]\nm: [0, 5]\ntrials: 3\nseed: 9\n")
        config = ExperimentConfig.from_yaml(str(path))
        assert config.r == [1, 2]
        assert config.trials == 3
        assert config.corruption_axis == [(0, None), (5, None)]

    def test_yaml_not_mapping(self, tmp_path):
        """A YAML list is not a config."""
        path = tmp_path / "bad.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidSpecError):
            ExperimentConfig.from_yaml(str(path))

    def test_shipped_configs_load(self, experiments_dir):
        """Every file under experiments/ is a valid config."""
        files = sorted(experiments_dir.glob("*.yaml"))
        if not files:
            pytest.skip("No experiment configs found")
        for path in files:
            ExperimentConfig.from_yaml(str(path))


class TestMakeInstance:
    """Tests for instance generation."""

    def test_composition(self):
        """z = x + s + eta with the requested corruption count."""
        inst = make_instance(63, 2, 5, 1.0, snr_db=30.0, seed=1)
        assert np.allclose(inst.z, inst.x + inst.s.to_dense() + inst.eta)
        assert inst.s.size == 5
        assert inst.model.r == 2

    def test_given_signal(self, small_sparse_signal):
        """A supplied clean signal is used as-is."""
        x, _ = small_sparse_signal
        inst = make_instance(x.size, 3, 4, 10.0, seed=2, x=x)
        assert np.array_equal(inst.x, x)
        assert inst.model is None

    def test_write_instance(self, tmp_path):
        """gen output files parse back."""
        inst = make_instance(63, 2, 5, 1.0, seed=3)
        paths = write_instance(inst, str(tmp_path))
        assert np.array_equal(read_signal(paths[2]), inst.z)
        assert read_sparse(paths[1], 63).support.tolist() == inst.s.support.tolist()
        assert json.loads((tmp_path / "model.json").read_text())["n"] == 63


class TestPhaseTransition:
    """Tests for run_phase_transition."""

    def _config(self, tmp_path, threads=1):
        return ExperimentConfig(kind="phase_transition", n=[31], r=[1, 2], m=[0, 31], trials=2,
                                seed=5, out=str(tmp_path), threads=threads)

    def test_grid_and_files(self, tmp_path):
        """Success matrix and per-trial CSV are written."""
        output = run_phase_transition(self._config(tmp_path))
        assert len(output.records) == 8
        assert (tmp_path / "phase_transition_trials.csv").exists()
        assert (tmp_path / "phase_transition_success.csv").exists()
        table = output.table.set_index("m")
        assert table.loc[0, "1"] == 1.0
        assert table.loc[31, "1"] == 0.0
        assert table.loc[31, "2"] == 0.0

    def test_success_flag_matches_error(self, tmp_path):
        """success <=> rel_error <= 1e-3 for every record."""
        output = run_phase_transition(self._config(tmp_path))
        for record in output.records:
            assert record.success == (record.rel_error <= SUCCESS_TOL)

    def test_frequency_error_column(self, tmp_path):
        """Generated instances are scored by ESPRIT; exact recoveries find the true frequencies."""
        output = run_phase_transition(self._config(tmp_path))
        for record in output.records:
            assert not math.isnan(record.freq_error)
            if record.m == 0:
                assert record.freq_error <= 1e-4
        assert "max_freq_error" in summarize_trials(output.records).columns

    def test_csv_round_trip(self, tmp_path):
        """The trial CSV parses back into identical records."""
        output = run_phase_transition(self._config(tmp_path))
        back = read_trials(str(tmp_path / "phase_transition_trials.csv"), TrialRecord)
        assert back == output.records

    def test_thread_count_invariance(self, tmp_path):
        """Non-timing columns do not depend on the worker count."""
        one = run_phase_transition(self._config(tmp_path / "one", threads=1))
        two = run_phase_transition(self._config(tmp_path / "two", threads=2))
        pd.testing.assert_frame_equal(_non_timing(one.records), _non_timing(two.records))

    def test_output_checked_first(self, tmp_path):
        """An unwritable output location fails before any trial runs."""
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        config = ExperimentConfig(kind="phase_transition", n=[31], r=[1], trials=1, out=str(blocker / "sub"))
        with pytest.raises(OutputPathError):
            run_phase_transition(config)

    def test_wrong_kind(self, tmp_path):
        """Runners refuse configs of another kind."""
        with pytest.raises(InvalidSpecError):
            run_phase_transition(ExperimentConfig(kind="noise", out=str(tmp_path)))


class TestEfficiency:
    """Tests for run_efficiency."""

    def test_both_methods_timed(self, tmp_path):
        """One row per (method, n) with positive timings."""
        config = ExperimentConfig(kind="efficiency", n=[63, 127], r=[2], alpha=[0.05], gamma=[0.5],
                                  algorithm="both", trials=1, out=str(tmp_path))
        output = run_efficiency(config)
        assert len(output.table) == 4
        assert set(output.table["method"]) == {"asap", "sap"}
        assert (output.table["mean_time"] > 0).all()

    def test_iterations_deterministic(self, tmp_path):
        """Repeated runs give identical iteration counts."""
        config = ExperimentConfig(kind="efficiency", n=[127], r=[3], alpha=[0.1], trials=1, seed=3,
                                  out=str(tmp_path))
        a = run_efficiency(config)
        b = run_efficiency(config)
        assert [r.iterations for r in a.records] == [r.iterations for r in b.records]


class TestNoise:
    """Tests for run_noise."""

    def test_snr_levels(self, tmp_path):
        """Noiseless input is recovered to solver precision, 80 dB input to at least 60 dB."""
        config = ExperimentConfig(kind="noise", n=[63], r=[2], m=[0], snr_db=[math.inf, 80.0],
                                  trials=2, out=str(tmp_path))
        output = run_noise(config)
        clean = [r for r in output.records if math.isinf(r.snr_db)]
        noisy = [r for r in output.records if r.snr_db == 80.0]
        assert all(r.output_snr >= 100 for r in clean)
        assert all(r.output_snr >= 60 for r in noisy)
        assert (tmp_path / "noise_snr.csv").exists()


class TestImpulse:
    """Tests for run_impulse."""

    def test_spectra_and_gap(self, tmp_path):
        """Both methods run on each instance and spectra are written."""
        config = ExperimentConfig.from_dict({"kind": "impulse", "n": 63, "r": 2, "pairs": [[0.2, 0.6]],
                                             "trials": 1, "out": str(tmp_path)})
        output = run_impulse(config)
        assert {r.method for r in output.records} == {"asap", "sap"}
        assert output.records[0].method_gap == output.records[1].method_gap
        assert output.records[0].c == 10.0
        spectra = pd.read_csv(tmp_path / "impulse_spectra_0.csv")
        assert list(spectra.columns) == ["freq", "clean", "corrupted", "asap", "sap"]

    def test_user_signal(self, tmp_path, small_sparse_signal):
        """A clean signal file replaces the generator."""
        x, _ = small_sparse_signal
        write_signal(str(tmp_path / "clean.csv"), x)
        config = ExperimentConfig.from_dict({"kind": "impulse", "r": 3, "pairs": [[0.1, 0.6]],
                                             "input": str(tmp_path / "clean.csv"), "out": str(tmp_path)})
        output = run_experiment(config)
        assert all(r.n == x.size for r in output.records)
        assert all(math.isnan(r.freq_error) for r in output.records)
        back = read_trials(str(tmp_path / "impulse_trials.csv"), TrialRecord)
        assert all(math.isnan(r.freq_error) for r in back)


class TestSummarize:
    """Tests for summarize_trials."""

    def test_aggregates(self):
        """Success rate and mean time per cell."""
        base = dict(kind="noise", method="asap", cell=0, seed=1, n=10, r=1, m=0, alpha=0.0, c=1.0, gamma=0.9,
                    snr_db=math.inf, rel_error=0.0, iterations=1, converged=True, output_snr=math.inf,
                    freq_error=math.nan, method_gap=0.0, init_time=0.0, time_per_iteration=0.1)
        records = [
            TrialRecord(trial=0, success=True, wall_time=1.0, **base),
            TrialRecord(trial=1, success=False, wall_time=3.0, **base),
        ]
        table = summarize_trials(records)
        assert len(table) == 1
        assert table.loc[0, "success_rate"] == 0.5
        assert table.loc[0, "mean_time"] == 2.0
        assert table.loc[0, "trials"] == 2


class TestRecoverFile:
    """Tests for recover_file."""

    def test_clean_signal(self, tmp_path, sparse_signal):
        """A clean r-sparse file converges with an empty sparse part."""
        x, _ = sparse_signal
        write_signal(str(tmp_path / "z.csv"), x)
        result, _ = recover_file(str(tmp_path / "z.csv"), str(tmp_path / "out"), 5)
        report = read_report(str(tmp_path / "out" / "report.json"))
        assert report["converged"] is True
        assert result.s_hat.size == 0
        assert read_sparse(str(tmp_path / "out" / "s_hat.csv"), x.size).size == 0

    def test_matches_in_process(self, tmp_path):
        """File route and in-process route agree bit for bit."""
        inst = make_instance(125, 4, 10, 1.0, seed=8)
        write_signal(str(tmp_path / "z.csv"), inst.z)
        from_file, _ = recover_file(str(tmp_path / "z.csv"), str(tmp_path / "out"), 4)
        in_process, _ = recover(inst.z, 4)
        assert np.array_equal(from_file.x_hat, in_process.x_hat)
        assert np.array_equal(read_signal(str(tmp_path / "out" / "x_hat.csv")), in_process.x_hat)

    def test_empty_file(self, tmp_path):
        """An empty input is a parse error and nothing is written."""
        (tmp_path / "z.csv").write_text("")
        with pytest.raises(SignalFileError):
            recover_file(str(tmp_path / "z.csv"), str(tmp_path / "out"), 2)
        assert not (tmp_path / "out" / "report.json").exists()

    def test_overrides_applied(self, tmp_path, sparse_signal):
        """beta overrides reach the report."""
        x, _ = sparse_signal
        write_signal(str(tmp_path / "z.csv"), x)
        _, params = recover_file(str(tmp_path / "z.csv"), str(tmp_path / "out"), 5, beta=0.07)
        assert params.beta == 0.07
        assert read_report(str(tmp_path / "out" / "report.json"))["params"]["beta"] == 0.07
