from __future__ import annotations

import csv

import numpy as np
import pytest

from bmm2d import (
    ArParams,
    ContaminationSpec,
    DomainError,
    ExperimentConfig,
    OptimizerConfig,
    ReplaceWhiteNoise,
    emit_raw,
    emit_report,
    replication_seeds,
    run_experiment,
)


LIGHT = OptimizerConfig(restarts=2, max_evals=150, tolerance=1e-3)


def small_config(**overrides) -> ExperimentConfig:
    base = dict(
        true_params=ArParams(0.15, 0.17, 0.20),
        window=16,
        replications=6,
        master_seed=1234,
        methods=("ls", "bmm"),
        optimizer=LIGHT,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            small_config(window=3)
        with pytest.raises(DomainError):
            small_config(replications=0)
        with pytest.raises(DomainError):
            small_config(methods=())
        with pytest.raises(DomainError):
            small_config(methods=("ls", "ridge"))

    def test_methods_canonical_order(self):
        cfg = small_config(methods=("bmm", "ls", "m"))
        assert cfg.methods == ("ls", "m", "bmm")


class TestSeeds:
    def test_deterministic_and_distinct(self):
        a = replication_seeds(42, 0)
        assert a == replication_seeds(42, 0)
        seen = {replication_seeds(42, r) for r in range(100)}
        assert len(seen) == 100
        assert replication_seeds(43, 0) != a

    def test_field_and_contamination_streams_differ(self):
        f, c = replication_seeds(7, 3)
        assert f != c


class TestRunExperiment:
    def test_report_shape_and_determinism(self):
        cfg = small_config()
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a.n == 6
        assert a.estimates.shape == (6, 2, 3)
        np.testing.assert_array_equal(a.estimates, b.estimates)
        assert a.excluded == ()

    def test_method_list_independence(self):
        all_cfg = small_config(methods=("ls", "m", "bmm"))
        ls_cfg = small_config(methods=("ls",))
        full = run_experiment(all_cfg)
        solo = run_experiment(ls_cfg)
        np.testing.assert_array_equal(
            full.estimates[:, full.config.methods.index("ls"), :],
            solo.estimates[:, 0, :],
        )

    def test_parallel_equals_serial(self):
        cfg = small_config(replications=4, methods=("ls",))
        serial = run_experiment(cfg, jobs=1)
        parallel = run_experiment(cfg, jobs=2)
        np.testing.assert_array_equal(serial.estimates, parallel.estimates)
        assert serial.kept == parallel.kept

    def test_contaminated_run(self):
        cfg = small_config(
            contamination=ContaminationSpec(alpha=0.1, kind=ReplaceWhiteNoise(50.0)),
            methods=("ls",),
        )
        rep = run_experiment(cfg)
        # strong contamination pulls the LS means toward zero
        assert np.all(np.abs(rep.mean("ls")) < 0.15)

    def test_too_many_degenerate_replications_fail(self, monkeypatch):
        import bmm2d.montecarlo as mc

        def stub(config, rep):
            secs = np.zeros(len(config.methods))
            if rep % 2 == 0:
                return rep, None, secs
            return rep, np.full((len(config.methods), 3), 0.1), secs

        monkeypatch.setattr(mc, "_run_replication", stub)
        with pytest.raises(RuntimeError, match="degenerate"):
            mc.run_experiment(small_config(replications=6, methods=("ls",)))

    def test_few_degenerate_replications_excluded(self, monkeypatch):
        import bmm2d.montecarlo as mc

        def stub(config, rep):
            secs = np.zeros(len(config.methods))
            if rep == 17:
                return rep, None, secs
            return rep, np.full((len(config.methods), 3), 0.1), secs

        monkeypatch.setattr(mc, "_run_replication", stub)
        rep = mc.run_experiment(small_config(replications=40, methods=("ls",)))
        assert rep.excluded == (17,)
        assert rep.n == 39
        assert 17 not in rep.kept

    def test_single_replication_variance_zero(self):
        cfg = small_config(replications=1, methods=("ls",))
        rep = run_experiment(cfg)
        np.testing.assert_array_equal(rep.sample_variance("ls"), np.zeros(3))
        assert rep.n == 1

    def test_aggregates_match_raw_estimates(self):
        cfg = small_config(methods=("ls",))
        rep = run_experiment(cfg)
        est = rep.estimates[:, 0, :]
        np.testing.assert_allclose(rep.mean("ls"), est.mean(axis=0), rtol=1e-14)
        np.testing.assert_allclose(
            rep.sample_variance("ls"), est.var(axis=0, ddof=1), rtol=1e-12
        )
        truth = cfg.true_params.as_array()
        np.testing.assert_allclose(
            rep.mse("ls"), ((est - truth) ** 2).mean(axis=0), rtol=1e-12
        )

    def test_mse_decomposition(self):
        rep = run_experiment(small_config())
        n = rep.n
        for method in rep.config.methods:
            bias = rep.mean(method) - rep.config.true_params.as_array()
            recomposed = rep.sample_variance(method) * (n - 1) / n + bias**2
            np.testing.assert_allclose(rep.mse(method), recomposed, atol=1e-12)

    def test_timing_recorded(self):
        rep = run_experiment(small_config(methods=("bmm",)))
        assert rep.seconds("bmm") > 0.0


class TestEmit:
    def test_report_csv_layout(self, tmp_path):
        rep = run_experiment(small_config())
        path = tmp_path / "report.csv"
        emit_report(rep, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * 3
        assert [r["method"] for r in rows] == ["ls"] * 3 + ["bmm"] * 3
        assert [r["param"] for r in rows[:3]] == ["phi1", "phi2", "phi3"]
        first = rows[0]
        assert float(first["true"]) == 0.15
        assert int(first["n"]) == 6
        assert float(first["mean"]) == pytest.approx(rep.mean("ls")[0], rel=1e-10)
        assert float(first["variance"]) == pytest.approx(rep.sample_variance("ls")[0], rel=1e-10)
        assert float(first["mse"]) == pytest.approx(rep.mse("ls")[0], rel=1e-10)

    def test_raw_csv_layout(self, tmp_path):
        rep = run_experiment(small_config(methods=("ls",), replications=3))
        path = tmp_path / "raw.csv"
        emit_raw(rep, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * 3
        reps = sorted({int(r["replication"]) for r in rows})
        assert reps == [0, 1, 2]
        for row in rows:
            k = int(row["replication"])
            p = {"phi1": 0, "phi2": 1, "phi3": 2}[row["param"]]
            ki = rep.kept.index(k)
            assert float(row["estimate"]) == pytest.approx(
                rep.estimates[ki, 0, p], rel=1e-10
            )
