import filecmp

import numpy as np
import pytest

from echo_pathways import records, sweep
from echo_pathways.config import ConfigError


def tiny_sweep(**overrides) -> sweep.SweepConfig:
    base = dict(
        variants=(sweep.StrategyVariant("random"),),
        p_values=(0.0,),
        alpha_values=(0.2,),
        q_values=(0.2, 0.5),
        trials=2,
        base_seed=7,
        n=16,
        k_o=3.0,
        epsilon=0.45,
        k_R=3,
        max_steps=25,
        quiet_steps=8,
    )
    base.update(overrides)
    return sweep.SweepConfig(**base)


class TestGrid:
    def test_paper_grid_has_1024_scenarios(self):
        cfg = sweep.PRESETS["paper-full"]
        jobs = sweep.expand_grid(cfg)
        scenarios = {(j.variant, j.p, j.alpha, j.q) for j in jobs}
        assert len(scenarios) == 4 * 4 * 8 * 8 == 1024
        assert len(jobs) == 1024 * 20

    def test_single_cell_single_trial(self):
        jobs = sweep.expand_grid(tiny_sweep(q_values=(0.2,), trials=1))
        assert len(jobs) == 1

    def test_order_axes_then_trials_innermost(self):
        cfg = tiny_sweep(
            variants=(sweep.StrategyVariant("random"), sweep.StrategyVariant("structure")),
            q_values=(0.1, 0.9),
            trials=3,
        )
        jobs = sweep.expand_grid(cfg)
        assert len(jobs) == 2 * 1 * 1 * 2 * 3 == 12
        expected = [
            (v.tag, q, t)
            for v in cfg.variants
            for q in cfg.q_values
            for t in range(3)
        ]
        assert [(j.variant.tag, j.q, j.trial) for j in jobs] == expected

    def test_empty_axis_rejected(self):
        with pytest.raises(ConfigError):
            sweep.expand_grid(tiny_sweep(q_values=()))


class TestSeeds:
    def test_same_inputs_same_seed(self):
        v = sweep.StrategyVariant("opinion", 2)
        assert sweep.derive_seed(1, v, 0.1, 0.05, 0.2, 3) == \
            sweep.derive_seed(1, v, 0.1, 0.05, 0.2, 3)

    def test_trial_changes_seed(self):
        v = sweep.StrategyVariant("random")
        assert sweep.derive_seed(1, v, 0.1, 0.05, 0.2, 0) != \
            sweep.derive_seed(1, v, 0.1, 0.05, 0.2, 1)

    def test_no_collisions_over_the_full_grid(self):
        # exhaustive scan over all 20,480 paper-grid jobs
        jobs = sweep.expand_grid(sweep.PRESETS["paper-full"])
        seeds = {job.config.seed for job in jobs}
        assert len(seeds) == len(jobs)


class TestExecution:
    def test_execute_persists_all_jobs(self, tmp_path):
        jobs = sweep.expand_grid(tiny_sweep())
        failures = sweep.execute(jobs, tmp_path, parallelism=1)
        assert failures == []
        for job in jobs:
            assert records.is_complete(job.run_dir(tmp_path))

    def test_resume_skips_completed(self, tmp_path):
        jobs = sweep.expand_grid(tiny_sweep())
        sweep.execute(jobs[:2], tmp_path)
        seen = []
        sweep.execute(jobs, tmp_path,
                      progress=lambda done, total, what: seen.append(what))
        assert seen[0] == "resume-skip"
        # marker bytes unchanged for the pre-completed jobs
        assert all(records.is_complete(j.run_dir(tmp_path)) for j in jobs)

    def test_parallel_equals_serial_bytes(self, tmp_path):
        jobs = sweep.expand_grid(tiny_sweep())
        sweep.execute(jobs, tmp_path / "serial", parallelism=1)
        sweep.execute(jobs, tmp_path / "parallel", parallelism=4)
        for job in jobs:
            a = job.run_dir(tmp_path / "serial")
            b = job.run_dir(tmp_path / "parallel")
            files = [p.name for p in a.iterdir()]
            match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
            assert not mismatch and not errors

    def test_failures_reported_not_fatal(self, tmp_path, monkeypatch):
        jobs = sweep.expand_grid(tiny_sweep(q_values=(0.2,), trials=2))
        import echo_pathways.sweep as sweep_mod

        original = sweep_mod.run

        def flaky(config, *args, **kwargs):
            if config.seed == jobs[0].config.seed:
                raise RuntimeError("boom")
            return original(config, *args, **kwargs)

        monkeypatch.setattr(sweep_mod, "run", flaky)
        failures = sweep.execute(jobs, tmp_path, parallelism=1)
        assert len(failures) == 1
        assert "boom" in failures[0][1]
        assert records.is_complete(jobs[1].run_dir(tmp_path))
        assert not records.is_complete(jobs[0].run_dir(tmp_path))


class TestAggregation:
    def test_single_job_aggregates_to_itself(self, tmp_path):
        jobs = sweep.expand_grid(tiny_sweep(q_values=(0.2,), trials=1))
        sweep.execute(jobs, tmp_path)
        agg = sweep.aggregate(tmp_path)
        assert len(agg.rows) == 1
        summary = records.load_summary(jobs[0].run_dir(tmp_path))
        assert agg.rows[0]["i_w"] == summary["i_w"]
        matrix = agg.heatmap("i_w", "random", 0.0)
        assert matrix.shape == (1, 1)
        assert matrix[0, 0] == pytest.approx(summary["i_w"], abs=1e-15)

    def test_mean_recomputed_by_independent_reader(self, tmp_path):
        cfg = tiny_sweep()
        jobs = sweep.expand_grid(cfg)
        sweep.execute(jobs, tmp_path)
        agg = sweep.aggregate(tmp_path)
        out = tmp_path / "tables"
        sweep.write_aggregate_outputs(agg, out)

        # independent reader: parse cells.csv by hand, recompute cell means,
        # compare against the heatmap table
        lines = (out / "cells.csv").read_text().splitlines()
        header = lines[0].split(",")
        rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
        heat_lines = (out / "heatmap_iw_random_p0.0.csv").read_text().splitlines()
        q_axis = [float(v) for v in heat_lines[0].split(",")[1:]]
        for line in heat_lines[1:]:
            cells = line.split(",")
            alpha = float(cells[0])
            for q, cell in zip(q_axis, cells[1:]):
                trial_vals = [
                    float(r["i_w"]) for r in rows
                    if float(r["alpha"]) == alpha and float(r["q"]) == q
                ]
                assert abs(float(cell) - np.mean(trial_vals)) < 1e-12

    def test_union_of_disjoint_roots(self, tmp_path):
        cfg = tiny_sweep()
        jobs = sweep.expand_grid(cfg)
        sweep.execute(jobs[:2], tmp_path / "x")
        sweep.execute(jobs[2:], tmp_path / "y")
        combined = tmp_path / "union"
        combined.mkdir()
        (combined / "x").symlink_to(tmp_path / "x")
        (combined / "y").symlink_to(tmp_path / "y")
        agg_union = sweep.aggregate(combined)
        assert len(agg_union.rows) == len(jobs)
        parts = sweep.aggregate(tmp_path / "x").rows + sweep.aggregate(tmp_path / "y").rows
        key = lambda r: r["seed"]
        assert sorted([r["i_w"] for r in parts]) == sorted([r["i_w"] for r in agg_union.rows])

    def test_consensual_only_cells_marked_omitted(self, tmp_path):
        jobs = sweep.expand_grid(tiny_sweep(q_values=(0.2,), trials=1))
        sweep.execute(jobs, tmp_path)
        agg = sweep.aggregate(tmp_path)
        # flip the recorded state to polarized and confirm the cell vanishes
        for row in agg.rows:
            row["final_state"] = "polarized"
        matrix = agg.heatmap("i_p_trajectory", "random", 0.0, consensual_only=True)
        assert np.isnan(matrix).all()


class TestKde:
    def test_all_equal_single_peak_at_value(self):
        grid, density = sweep.kde_pdf([0.4] * 10)
        assert grid[np.argmax(density)] == pytest.approx(0.4, abs=0.01)
        assert abs(np.trapezoid(density, grid) - 1) < 1e-3

    def test_fewer_than_two_values_error(self):
        with pytest.raises(ValueError):
            sweep.kde_pdf([0.5])

    def test_symmetric_values_symmetric_density(self):
        values = [0.3, 0.7, 0.45, 0.55, 0.5]
        grid = np.linspace(0.0, 1.0, 201)  # symmetric about 0.5
        _, density = sweep.kde_pdf(values, grid)
        assert np.allclose(density, density[::-1], atol=1e-9)

    def test_bimodal_mixture_recovered(self):
        rng = np.random.default_rng(0)
        values = np.concatenate([
            rng.normal(0.3, 0.05, 400),
            rng.normal(0.9, 0.05, 400),
        ])
        grid, density = sweep.kde_pdf(values)
        modes = sweep.kde_modes(grid, density)
        assert len(modes) == 2
        assert abs(modes[0] - 0.3) < 0.07 and abs(modes[1] - 0.9) < 0.07
        valley = grid[(grid > modes[0]) & (grid < modes[1])]
        dens_between = density[(grid > modes[0]) & (grid < modes[1])]
        assert dens_between.min() < 0.5 * density.max()

    def test_integral_near_one(self):
        rng = np.random.default_rng(1)
        grid, density = sweep.kde_pdf(rng.uniform(0, 1, 300))
        assert abs(np.trapezoid(density, grid) - 1.0) < 1e-3
