"""Dev scratch: scan default geometry candidates against acceptance criteria 5, 6, 8."""
import numpy as np
from mpidyn.model import Grid2D
from mpidyn.simulator import ScannerConfig, PhantomMotion, generate_dataset
from mpidyn.inexactness import zeta_norm_frames, zeta_subframe_interpolated
from mpidyn.solvers import SolverConfig, regularized_kaczmarz, resesop_kaczmarz
from mpidyn.evaluation import mse, centroid_error, background_mse

grid = Grid2D(31, 31, 0.02, 0.02)
fine = Grid2D(63, 63, 0.02, 0.02, origin_shift=(0.5 * 0.02 / 63, 0.5 * 0.02 / 63))
LAM_GRID = (0.5, 1, 2, 4, 8.5, 16, 32)


def check(beta, rad, orbit, gain, seed=20240501, verbose=False):
    cfg = ScannerConfig((16000., 17000.), (0.022, 0.022), (2., 2.), 1632000.,
                        langevin_beta=beta, signal_gain=gain)
    motion = PhantomMotion(disk_radius=rad, orbit_radius=orbit, frames_per_rotation=7.0)
    acq = generate_dataset(cfg, grid, fine, motion, n_frames=7, snr=10.0, seed=seed)

    rot = acq.dataset.rotated(4)
    truth4 = rot.ground_truth.states[0]
    base = []
    for lam in LAM_GRID:
        c = SolverConfig(algorithm='reg-kaczmarz', lam=lam, max_sweeps=5)
        r = regularized_kaczmarz(rot.system_matrix.entries, rot.frames[0], c)
        base.append((mse(r.reconstruction, truth4), lam))
    best, bl = min(base)
    lev4 = zeta_norm_frames(rot)
    r1 = resesop_kaczmarz(rot, lev4, SolverConfig(algorithm='resesop', max_sweeps=10))
    m1 = mse(r1.reconstruction, truth4)
    ce1 = centroid_error(r1.reconstruction, truth4, grid)
    bg1 = background_mse(r1.reconstruction, truth4)
    init_mse = np.mean(truth4 ** 2)
    trace = np.concatenate([[init_mse], r1.mse_trace])
    mono = bool(np.all(np.diff(trace) <= 1e-12))
    drop1 = trace[0] - trace[1]
    total = trace[0] - trace[-1]
    fastdrop = drop1 >= 0.5 * total if total > 0 else False

    # criterion 8: subsizes
    out8 = {}
    import mpidyn.io as mio  # noqa
    from mpidyn.model import DynamicDataset, TimePartition, ConcentrationSequence
    for s in (4, 32):
        per = 32 // s
        part = TimePartition(7, cfg.samples_per_frame, s)
        ds_s = DynamicDataset(
            system_matrix=acq.dataset.system_matrix, partition=part,
            frames=acq.dataset.frames, grid=grid,
            ground_truth=ConcentrationSequence(acq.truth_states[::per]), snr=10.0)
        rot_s = ds_s.rotated(4)
        lev_s = zeta_subframe_interpolated(rot_s)
        r_s = resesop_kaczmarz(rot_s, lev_s, SolverConfig(algorithm='resesop', max_sweeps=10))
        t_s = rot_s.ground_truth.states[0]
        out8[s] = (mse(r_s.reconstruction, t_s), centroid_error(r_s.reconstruction, t_s, grid),
                   background_mse(r_s.reconstruction, t_s))

    crit5 = m1 <= 0.9 * best
    crit8a = out8[4][1] < ce1
    crit8b = out8[32][2] > out8[4][2]
    print(f'beta={beta} r={rad*1e3}mm orb={orbit*1e3}mm gain={gain}: '
          f'base={best:.5g}@{bl} res={m1:.5g} ratio={m1/best:.3f} C5={crit5} mono={mono} fast={fastdrop}')
    print(f'   centroid: frame={ce1*1e3:.2f}mm quarter={out8[4][1]*1e3:.2f}mm C8a={crit8a} | '
          f'bg: q={out8[4][2]:.3g} s32={out8[32][2]:.3g} C8b={crit8b}')
    if verbose:
        print('   trace:', np.array2string(trace, precision=4))
    return crit5, mono, fastdrop, crit8a, crit8b


if __name__ == '__main__':
    import sys
    combos = [
        (500., 0.0012, 0.004, 1.0),
        (500., 0.0012, 0.003, 1.0),
        (500., 0.001, 0.004, 1.0),
        (500., 0.0015, 0.004, 1.0),
        (1000., 0.0012, 0.004, 1.0),
        (300., 0.0012, 0.004, 1.0),
    ]
    for combo in combos:
        check(*combo, verbose=True)
