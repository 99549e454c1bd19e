"""Dev scratch: fine scan around the promising region, all solver criteria."""
import numpy as np
from mpidyn.model import Grid2D
from mpidyn.simulator import ScannerConfig, PhantomMotion, generate_dataset
from mpidyn.inexactness import zeta_norm_frames, zeta_prior_recon, zeta_subframe_interpolated
from mpidyn.solvers import SolverConfig, regularized_kaczmarz, resesop_kaczmarz
from mpidyn.evaluation import mse, centroid_error, background_mse
from scipy.stats import spearmanr

grid = Grid2D(31, 31, 0.02, 0.02)
fine = Grid2D(63, 63, 0.02, 0.02, origin_shift=(0.5 * 0.02 / 63, 0.5 * 0.02 / 63))
LAM_GRID = (0.5, 1, 2, 4, 8.5, 16, 32)


def full_check(beta, rad, orbit, n_frames=14, seed=20240501, verbose=False):
    cfg = ScannerConfig((16000., 17000.), (0.022, 0.022), (2., 2.), 1632000.,
                        langevin_beta=beta)
    motion = PhantomMotion(disk_radius=rad, orbit_radius=orbit, frames_per_rotation=7.0)
    acq = generate_dataset(cfg, grid, fine, motion, n_frames=n_frames, snr=10.0, seed=seed)
    ds = acq.dataset
    rot = ds.rotated(4)
    truth4 = rot.ground_truth.states[0]

    base = min(
        mse(regularized_kaczmarz(rot.system_matrix.entries, rot.frames[0],
            SolverConfig(algorithm='reg-kaczmarz', lam=lam, max_sweeps=5)).reconstruction, truth4)
        for lam in LAM_GRID)
    lev = zeta_norm_frames(rot)
    res = {}
    for scale in (1.0, 0.1, 10.0, 1e5):
        r = resesop_kaczmarz(rot, lev.scaled(scale) if scale != 1 else lev,
                             SolverConfig(algorithm='resesop', max_sweeps=10))
        res[scale] = mse(r.reconstruction, truth4)
        if scale == 1.0:
            r1 = r
    rn = resesop_kaczmarz(rot, lev.perturbed(0.15, 77),
                          SolverConfig(algorithm='resesop', max_sweeps=10))
    noise_mse = mse(rn.reconstruction, truth4)

    m1 = res[1.0]
    tr = np.concatenate([[np.mean(truth4 ** 2)], r1.mse_trace])
    mono = bool(np.all(np.diff(tr) <= 1e-12))
    total = tr[0] - tr[-1]
    drop1 = (tr[0] - tr[1]) / total if total > 0 else -1

    c5 = m1 <= 0.9 * base
    c7a = res[10.0] <= 2 * m1 and res[1e5] <= 2 * m1
    c7b = res[0.1] > m1
    c7c = abs(noise_mse - m1) < 0.25 * m1

    # prior-recon agreement (criterion 9, first rotation only for spearman)
    lev_pr = zeta_prior_recon(rot, lam=1.0, iters=5)
    rho_s = spearmanr(lev.zeta, lev_pr.zeta).statistic
    c9 = rho_s > 0.8

    print(f'beta={beta} r={rad*1e3:.2g} orb={orbit*1e3:.2g} n={n_frames}: '
          f'base={base:.4g} res={m1:.4g} ratio={m1/base:.3f} C5={c5} mono={mono} drop1={drop1:.2f} '
          f'| x0.1={res[0.1]/m1:.2f} x10={res[10.]/m1:.2f} x1e5={res[1e5]/m1:.2f} noise_d={abs(noise_mse-m1)/m1:.2f} '
          f'C7={c7a and c7b and c7c} | spearman={rho_s:.2f} C9={c9}')
    if verbose:
        print('   trace:', np.array2string(tr, precision=4))
    return c5, mono, drop1 >= 0.5, c7a, c7b, c7c, c9


if __name__ == '__main__':
    for combo in [
        (500., 0.002, 0.0025),
        (500., 0.002, 0.003),
        (500., 0.0022, 0.0028),
        (500., 0.0018, 0.0025),
        (400., 0.002, 0.0025),
        (700., 0.002, 0.0025),
    ]:
        full_check(*combo, verbose=True)
