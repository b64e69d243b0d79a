"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed at the end."""

import math
import os
import random
import time

import numpy as np
import pytest

from voxsim import io
from voxsim.cli import main
from voxsim.design_space import (N_DESIGNS, DesignGenome, HeatmapCell, VoxelKind,
                                 enumerate_designs, genome_at_cell, genome_from_index,
                                 heatmap_cell, parse_genome, rotate_z)
from voxsim.evaluation import fitness, reality_gap
from voxsim.physics import (MaterialParams, SimParams, Trajectory, actuation_volume, beam_forces,
                            build_lattice, collision_update, desk_scale_params, ground_contact,
                            refine_highres, run, simulate)

SP = SimParams()
MP = MaterialParams()
L = SP.voxel_edge
M_NODE = MP.density * L**3
G = abs(SP.gravity)


def _quat_from_rotvec(r):
    a = np.linalg.norm(r)
    return np.concatenate([[math.cos(a / 2)], math.sin(a / 2) * r / a])


def test_criterion_01_degenerate_fitness(criterion):
    with criterion(1, "degenerate fitness") as info:
        f_empty = fitness(simulate(DesignGenome.uniform(VoxelKind.EMPTY), SP, MP))
        f_passive = fitness(simulate(DesignGenome.uniform(VoxelKind.PASSIVE), SP, MP))
        f_active = fitness(simulate(DesignGenome.uniform(VoxelKind.ACTIVE), SP, MP))
        info.update(empty=f_empty, passive=f"{f_passive:.2e}", active=f"{f_active:.2e}")
        assert f_empty == 0.0
        assert f_passive < 1e-4
        assert f_active < 0.1 * L


# ---------------------------------------------------------------- desk-scale sweep

SWEEP_FILES = ("results.csv", "heatmap.csv", "heatmap.pgm")


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    runs = {}
    alt_workers = max(2, min(8, os.cpu_count() or 1))
    for name, workers, batch in (("a", 1, 50), ("b", alt_workers, 37)):
        out = tmp_path_factory.mktemp(f"sweep_{name}")
        t0 = time.perf_counter()
        assert main(["sweep", "--actuation-cycles", "4", "--output-dir", str(out),
                     "--workers", str(workers), "--batch", str(batch)]) == 0
        runs[name] = (out, time.perf_counter() - t0, workers)
    return runs


@pytest.mark.slow
def test_criterion_02_desk_scale_sweep(criterion, sweeps):
    with criterion(2, "desk-scale exhaustive sweep") as info:
        (out_a, wall_a, _), (out_b, wall_b, workers_b) = sweeps["a"], sweeps["b"]
        sweep = io.read_results_csv(out_a / "results.csv")
        assert len(sweep) == N_DESIGNS
        grid = io.read_heatmap_csv(out_a / "heatmap.csv")
        assert grid.shape == (81, 81)
        cells = {heatmap_cell(g) for g in enumerate_designs()}
        assert len(cells) == N_DESIGNS
        for name in SWEEP_FILES:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
        # one CPU here, so the 8-way time is projected from the serial run
        projected = wall_a / 8
        info.update(serial_s=f"{wall_a:.0f}", workers_b=workers_b, wall_b_s=f"{wall_b:.0f}",
                    projected_8way_min=f"{projected / 60:.1f}", aborts=sweep.abort_count)
        assert projected < 30 * 60


@pytest.mark.slow
def test_sweep_heatmap_matches_results(sweeps):
    out = sweeps["a"][0]
    sweep = io.read_results_csv(out / "results.csv")
    grid = io.read_heatmap_csv(out / "heatmap.csv")
    for r in sweep.results:
        c = heatmap_cell(genome_from_index(r.genome_index))
        assert grid[c.row, c.col] == r.fitness
    # the image stores the top row (row 80) first
    assert np.array_equal(io.read_pgm(out / "heatmap.pgm")[::-1], io.gray_levels(grid))


@pytest.mark.slow
def test_sweep_degenerate_designs_and_leaders(sweeps):
    sweep = io.read_results_csv(sweeps["a"][0] / "results.csv")
    fit = sweep.fitness_array()
    assert fit[0] == 0.0 and fit[3280] < 1e-4
    leaders = np.argsort(-fit, kind="stable")[:100]
    assert np.all(fit[leaders] > 0)


@pytest.mark.slow
def test_sweep_manifest_records_run(sweeps):
    meta = io.read_manifest_meta(sweeps["a"][0] / "manifest.txt")
    assert meta["designs"] == str(N_DESIGNS)
    assert meta["results_digest"] == io.file_digest(sweeps["a"][0] / "results.csv")
    assert float(meta["wall_time_s"]) > 0


# ---------------------------------------------------------------- physics

def test_criterion_03_rotation_equivariance(criterion):
    with criterion(3, "rotation equivariance, 50 genomes") as info:
        rng = random.Random(2024)
        worst = 0.0
        over = []
        for k in rng.sample(range(N_DESIGNS), 50):
            g = genome_from_index(k)
            a, b = simulate(g, SP, MP), simulate(rotate_z(g), SP, MP)
            fa, fb = fitness(a), fitness(b)
            tol = max(1e-6, 1e-3 * fa)
            d, dr = a.displacement(), b.displacement()
            err = max(abs(fa - fb), float(np.linalg.norm(dr - [-d[1], d[0]])))
            worst = max(worst, err / tol)
            if err > tol:
                over.append(f"{g} F={fa:.4g}/{fb:.4g}")
        assert not over, f"{len(over)} of 50 outside tolerance: " + "; ".join(over)
        info["worst_over_tol"] = f"{worst:.3g}"


def test_criterion_04_physics_oracles(criterion):
    with criterion(4, "physics oracles") as info:
        rng = np.random.default_rng(11)
        k_ax = MP.youngs_modulus * L
        c_ax = 2 * MP.lattice_zeta * math.sqrt(k_ax * M_NODE / 2)
        worst = 0.0
        for trial in range(1000):
            axis = trial % 3
            s = build_lattice(parse_genome({0: "11000000", 1: "10100000", 2: "10001000"}[axis]))
            q = _quat_from_rotvec(rng.normal(size=3))
            w, x, y, z = q
            n = np.array([[1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)],
                          [2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)],
                          [2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)]])[axis]
            delta = rng.uniform(-0.2, 0.2) * L
            rate = rng.uniform(-0.5, 0.5)
            s.pos[1] = s.pos[0] + (L + delta) * n
            s.quat[:] = q
            s.vel[1] = s.vel[0] + rate * n
            f, _ = beam_forces(s)
            oracle = -(k_ax * delta + c_ax * rate) * n
            worst = max(worst, np.linalg.norm(f[1] - oracle) / np.linalg.norm(oracle))
        assert worst <= 1e-9

        s = build_lattice(parse_genome("10000000"))
        run(s, 2000)
        pen = s.model.half[0] - s.pos[0, 2]
        expected = M_NODE * G / s.model.kc[0]
        pen_err = abs(pen / expected - 1)
        assert pen_err <= 0.01

        net = 0.0
        for text in ("21202211", "22222222", "12020002", "20100221"):
            s = build_lattice(parse_genome(text), desk_scale_params())
            for _ in range(700):
                run(s, 1, desk_scale_params())
                f, _ = beam_forces(s, s._rest)
                f = f + collision_update(s)
                net = max(net, np.linalg.norm(f.sum(axis=0)) / np.abs(f).sum())
        assert net <= 1e-10
        info.update(axial_rel=f"{worst:.1e}", penetration_rel=f"{pen_err:.1e}",
                    net_force_rel=f"{net:.1e}")


def _resting_node():
    s = build_lattice(parse_genome("10000000"))
    run(s, 1500)
    return s


def test_criterion_05_friction(criterion):
    with criterion(5, "stiction and kinetic friction") as info:
        s = _resting_node()
        normal = M_NODE * G
        x0 = s.pos[0, :2].copy()
        run(s, 1000, SP, MP, external=np.array([[0.4 * MP.static_friction * normal, 0, 0]]))
        drift = float(np.linalg.norm(s.pos[0, :2] - x0))
        assert drift < 1e-6

        s = _resting_node()
        pen = 2e-6
        s.pos[0, 2] = s.model.half[0] - pen
        s.vel[0] = [0.03, 0.04, 0.0]
        f = ground_contact(s, mp=MP)[0]
        n_force = s.model.kc[0] * pen
        kin = abs(math.hypot(f[0], f[1]) - MP.kinetic_friction * n_force) / (MP.kinetic_friction * n_force)
        assert kin <= 1e-9
        info.update(stiction_drift_m=f"{drift:.1e}", kinetic_rel=f"{kin:.1e}")


# ---------------------------------------------------------------- schedule

def test_criterion_06_timing(criterion, tmp_path, capsys):
    with criterion(6, "default schedule timing") as info:
        out = tmp_path / "traj.csv"
        assert main(["simulate", "21202211", "--out", str(out)]) == 0
        assert "aborted=0" in capsys.readouterr().out
        tr = io.read_trajectory_csv(out)
        t0, t1 = tr.t[0], tr.t[-1]
        cycles = (t1 - t0) * SP.actuation_frequency
        info.update(settle_s=f"{t0:.5f}", total_s=f"{t1:.4f}", cycles=f"{cycles:.3f}")
        assert round(t0, 5) == 0.25006
        assert round(t1, 4) == 4.0004
        assert math.floor(cycles) == 15


def test_criterion_07_waveform(criterion):
    with criterion(7, "actuation waveform") as info:
        period = 1 / SP.actuation_frequency
        ts = np.linspace(0.0, period, 4001)
        v = np.array([actuation_volume(t) for t in ts])
        negative = ts >= period / 2
        assert np.all(v[negative] == 1.0)
        peak = actuation_volume(period / 4)
        assert peak == pytest.approx(1.9, abs=1e-12)
        assert v.max() == pytest.approx(1.9, abs=1e-12) and ts[v.argmax()] == pytest.approx(period / 4)
        info["peak"] = f"{peak:.12g}"


def test_criterion_08_highres(criterion):
    with criterion(8, "high-res refinement") as info:
        g = parse_genome("21212121")
        s = refine_highres(g)
        assert s.n_nodes == 216
        act = s.model.actuated_beams
        block_of = s.model.node_sub // 3
        per_block = {}
        for b in act:
            ia, ib = s.model.ba[b], s.model.bb[b]
            key = tuple(block_of[ia])
            assert key == tuple(block_of[ib])
            local = {tuple(s.model.node_sub[i] % 3) for i in (ia, ib)}
            assert (1, 1, 1) in local
            per_block.setdefault(key, []).append(b)
        n_active = sum(1 for k in g.sites if k == VoxelKind.ACTIVE)
        assert len(per_block) == n_active
        assert all(len(v) == 6 for v in per_block.values())
        tr = simulate(g, desk_scale_params(), MP, highres=True)
        assert np.all(np.isfinite(tr.com))
        info.update(nodes=s.n_nodes, active_blocks=n_active)


def _random_trajectory(rng):
    n = int(rng.integers(2, 200))
    t = np.cumsum(rng.uniform(0.001, 0.1, n))
    com = np.cumsum(rng.normal(size=(n, 3)) * 0.01, axis=0)
    com[-1, :2] = com[0, :2] + rng.uniform(0.01, 0.2) * np.array(
        [math.cos(a := rng.uniform(-math.pi, math.pi)), math.sin(a)])
    return Trajectory(t, com)


def test_criterion_09_reality_gap(criterion):
    with criterion(9, "reality-gap metrics, 20 trajectories") as info:
        rng = np.random.default_rng(9)
        worst = 0.0
        for _ in range(20):
            tr = _random_trajectory(rng)
            assert reality_gap(tr, tr) == (1.0, 0.0, 0.0)
            # reflect the horizontal path through its starting point
            com = tr.com.copy()
            com[:, :2] = 2 * com[0, :2] - com[:, :2]
            reflected = Trajectory(tr.t, com)
            worst = max(worst, abs(reality_gap(tr, reflected).heading_gap - math.pi))
        assert worst <= 1e-9
        info["worst_heading_err"] = f"{worst:.1e}"


def test_criterion_10_heatmap(criterion):
    with criterion(10, "heatmap bijection and corners"):
        cells = {}
        for g in enumerate_designs():
            cells.setdefault(heatmap_cell(g), []).append(g)
        assert len(cells) == N_DESIGNS
        assert all(0 <= c.row < 81 and 0 <= c.col < 81 for c in cells)
        assert genome_at_cell(HeatmapCell(0, 0)) == DesignGenome.uniform(VoxelKind.EMPTY)
        assert genome_at_cell(HeatmapCell(40, 40)) == DesignGenome.uniform(VoxelKind.PASSIVE)
        assert genome_at_cell(HeatmapCell(80, 80)) == DesignGenome.uniform(VoxelKind.ACTIVE)
