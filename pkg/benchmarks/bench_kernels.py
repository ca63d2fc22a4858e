"""Compare the numba and numpy kernel backends on the two hot loops.

    python benchmarks/bench_kernels.py [--trials N] [--reconstructions N] [--repeat R]

Both backends receive identical inputs; the script reports the best wall
time of R runs per backend and the largest disagreement between them.
"""
import argparse
import time

import numpy as np

from mpgame.kernels import get_backend
from mpgame.measurement import StrategyKind, build_mp_basis, build_tetrahedron, make_device, outcome_model
from mpgame.qcore import haar_random_bloch
from mpgame.tomography import mle_starts


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2_000_000)
    ap.add_argument("--reconstructions", type=int, default=2000)
    ap.add_argument("--pairs", type=int, default=256, help="pairs per reconstructed count vector")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    frame = build_tetrahedron()
    basis = build_mp_basis(frame)
    model = outcome_model(StrategyKind.COLLECTIVE, make_device(basis), basis)
    rng = np.random.default_rng(args.seed)
    bloch = haar_random_bloch(rng, args.trials)
    u = rng.random(args.trials)

    truth = haar_random_bloch(rng, args.reconstructions)
    q = get_backend("numpy").outcome_weights(truth, model.forms)
    p = q / q.sum(axis=1, keepdims=True)
    counts = np.array([rng.multinomial(args.pairs, row) for row in p], dtype=float)
    freqs = counts / counts.sum(axis=1, keepdims=True)
    starts = mle_starts(frame)

    results = {}
    for name in ("numba", "numpy"):
        be = get_backend(name)
        # warm-up triggers compilation (or loads the on-disk cache)
        be.score_trials(be.outcome_weights(bloch[:16], model.forms), u[:16], bloch[:16], model.guesses)
        be.apg_mle_batch(freqs[:2], model.forms, starts)

        def game():
            w = be.outcome_weights(bloch, model.forms)
            return be.score_trials(w, u, bloch, model.guesses)

        t_game, (_, fid) = best_time(game, args.repeat)
        t_mle, mle = best_time(lambda: be.apg_mle_batch(freqs, model.forms, starts), args.repeat)
        results[name] = (t_game, fid, t_mle, mle[0])

    print(f"{'backend':<8} {'game trials/s':>15} {'MLE recon/s':>13}")
    for name, (t_game, _, t_mle, _) in results.items():
        print(f"{name:<8} {args.trials / t_game:15.3e} {args.reconstructions / t_mle:13.1f}")
    (tg1, f1, tm1, x1), (tg2, f2, tm2, x2) = results["numba"], results["numpy"]
    print(f"speedup  game x{tg2 / tg1:.1f}  mle x{tm2 / tm1:.1f}")
    print(f"max |fidelity diff| {np.max(np.abs(f1 - f2)):.1e}   "
          f"max estimate infidelity diff {np.max(0.5 * (1 - np.sum(x1 * x2, axis=1))):.1e}")


if __name__ == "__main__":
    main()
