"""
Root-seed splitting scheme

A single integer seed is expanded into independent numpy generators by
``SeedSequence(root_seed, spawn_key=keys)``. Stream keys used by the harness:

    (seed, ENV_STREAM)     environment resets / domain randomization
    (seed, AGENT_STREAM)   network initialisation and exploration noise
    (seed, REPLAY_STREAM)  replay / minibatch sampling
    (seed, EVAL_STREAM)    evaluation episodes
    (seed, BASELINE_STREAM) random-policy baseline actions

Monte Carlo shards use ``SeedSequence(seed).spawn(shard_count)``.
"""

from typing import Any, Dict, List

import numpy as np

ENV_STREAM = 0
AGENT_STREAM = 1
REPLAY_STREAM = 2
EVAL_STREAM = 3
BASELINE_STREAM = 4


def derive_rng(root_seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``keys`` under ``root_seed``"""
    seq = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def shard_rngs(seed: int, shard_count: int) -> List[np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(int(shard_count))
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def rng_state(rng: np.random.Generator) -> Dict[str, Any]:
    return rng.bit_generator.state


def restore_rng(state: Dict[str, Any]) -> np.random.Generator:
    bit_gen = np.random.PCG64()
    bit_gen.state = state
    return np.random.Generator(bit_gen)
