"""
Throughput of the polymer forward pass: slab steps per second and lattice cells per second.
"""
import argparse
import time

import torch
from tqdm import tqdm

from polymer_lab.environment import EnvironmentField, create_named_family, temperature_profile
from polymer_lab.polymer import PolymerState, default_radius_cap, increment_bracket
from polymer_lab.utils.logging import get_logger
from polymer_lab.walk import SUPPORTED_DIMENSIONS

#################################################################################
#                                 Benchmark Loop                                #
#################################################################################


def main(args):
    logger = get_logger()
    torch.set_num_threads(args.threads)
    family = create_named_family(args.family)
    profile = temperature_profile(family, args.beta, args.d)
    radius_cap = args.radius_cap or default_radius_cap(args.d, args.steps)

    total_steps = 0
    total_cells = 0
    total_duration = 0.0
    for r in range(args.replicates):
        state = PolymerState(EnvironmentField(args.seed + r, family), profile, radius_cap=radius_cap)
        for i in tqdm(range(args.warmup_steps + args.steps), desc=f"replicate {r}", disable=None):
            start = time.time()
            if args.bracket:
                increment_bracket(state, alpha=6.0)
            state.step()
            time_per_step = time.time() - start
            if i >= args.warmup_steps:
                total_steps += 1
                total_cells += state.slab.numel()
                total_duration += time_per_step
        logger.info(f"replicate {r}: W_{state.k} = {state.W:.6f}, clipped mass {state.clipped_mass:.3e}")

    logger.info(f"Throughput: {total_steps / total_duration:.2f} steps/s, {total_cells / total_duration:.3e} cells/s")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("-d", "--d", type=int, default=3, choices=SUPPORTED_DIMENSIONS)
    parser.add_argument("-f", "--family", type=str, default="gaussian")
    parser.add_argument("--beta", type=float, default=0.4)
    parser.add_argument("--seed", type=int, default=20240101)
    parser.add_argument("-r", "--replicates", type=int, default=2)
    parser.add_argument("-w", "--warmup_steps", type=int, default=4)
    parser.add_argument("-s", "--steps", type=int, default=256)
    parser.add_argument("--radius_cap", type=int, default=0)
    parser.add_argument("-t", "--threads", type=int, default=1)
    parser.add_argument("--bracket", action="store_true", default=False, help="also compute the increment bracket")
    args = parser.parse_args()
    main(args)
