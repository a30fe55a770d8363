#!/usr/bin/env python3
"""
Rollouts
Episode execution, per-candidate fitness and parallel population evaluation.
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .environments import (
    STANDARD_MORPHOLOGY,
    EnvConfig,
    EpisodeResult,
    MorphologyVariant,
    RewardMode,
    add_observation_noise,
    make_env,
)
from .models import Controller, ModelConfig, build_controller
from .rules import RuleSet

# Configure logging
logger = logging.getLogger(__name__)

UpdateHook = Callable[[List[np.ndarray]], None]


def split_episode_seed(seed: int) -> List[int]:
    """Derive independent (environment, initial weights, observation noise) seeds from one episode seed."""
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(3)]


def generation_episode_seeds(replicate_seed: int, generation: int, count: int) -> List[int]:
    """Episode seeds shared by every candidate of a generation (common random numbers)."""
    state = np.random.SeedSequence([int(replicate_seed), int(generation)]).generate_state(count)
    return [int(s) for s in state]


def evaluation_episode_seeds(base_seed: int, count: int) -> List[int]:
    return [int(np.random.SeedSequence([int(base_seed), episode]).generate_state(1)[0]) for episode in range(count)]


def run_episode(
    controller: Controller,
    env,
    variant: MorphologyVariant = STANDARD_MORPHOLOGY,
    seed: int = 0,
    noise_sigma: float = 0.0,
    trace: Optional[List[np.ndarray]] = None,
    update_hook: Optional[UpdateHook] = None,
) -> EpisodeResult:
    """Run one episode: observe, (noise), act, step, then apply the Hebbian update for plastic controllers.

    Args:
        trace: if given, every action is appended to it
        update_hook: if given, receives the per-layer weight deltas of every plastic update
    """
    env_seed, weight_seed, noise_seed = split_episode_seed(seed)
    controller.begin_episode(weight_seed)
    obs, info = env.reset(seed=env_seed, options={"variant": variant})
    noise_rng = np.random.default_rng(noise_seed)

    fitness = 0.0
    steps = 0
    distance = info.get("distance", 0.0)
    while True:
        action = controller.act(add_observation_noise(obs, noise_sigma, noise_rng))
        if trace is not None:
            trace.append(action.copy())
        obs, reward, terminated, truncated, info = env.step(action)
        deltas = controller.learn(return_deltas=update_hook is not None)
        if update_hook is not None and deltas is not None:
            update_hook(deltas)
        fitness += reward
        steps += 1
        distance = info.get("distance", distance)
        if terminated or truncated:
            break
    return EpisodeResult(fitness=fitness, distance=distance, steps_survived=steps)


def candidate_fitness(
    config: ModelConfig,
    env_config: EnvConfig,
    genome: np.ndarray,
    template: Optional[RuleSet],
    episode_seeds: Sequence[int],
    variant: MorphologyVariant = STANDARD_MORPHOLOGY,
    reward_mode: Optional[RewardMode] = None,
    noise_sigma: Optional[float] = None,
) -> float:
    """Mean fitness of one genome over the given episodes.

    Observation noise defaults to config.noise_sigma, which is zero for every kind but NOISY_STATIC.
    """
    return float(np.mean(episode_scores(config, env_config, genome, template, episode_seeds,
                                        variant, reward_mode, noise_sigma)))


def episode_scores(
    config: ModelConfig,
    env_config: EnvConfig,
    genome: np.ndarray,
    template: Optional[RuleSet],
    episode_seeds: Sequence[int],
    variant: MorphologyVariant = STANDARD_MORPHOLOGY,
    reward_mode: Optional[RewardMode] = None,
    noise_sigma: Optional[float] = None,
) -> List[float]:
    """Fitness of every episode, sharing one controller and one environment instance."""
    sigma = config.noise_sigma if noise_sigma is None else noise_sigma
    controller = build_controller(config, genome, template)
    env = make_env(env_config, reward_mode=reward_mode)
    scores = [run_episode(controller, env, variant, seed, noise_sigma=sigma).fitness for seed in episode_seeds]
    env.close()
    return scores


def evaluate_population(
    config: ModelConfig,
    env_config: EnvConfig,
    population: np.ndarray,
    template: Optional[RuleSet],
    episode_seeds: Sequence[int],
    jobs: int = 1,
) -> np.ndarray:
    """Fitness of every candidate, in the order of the population rows."""
    if jobs == 1:
        fitnesses = [
            candidate_fitness(config, env_config, genome, template, episode_seeds)
            for genome in population
        ]
    else:
        fitnesses = Parallel(n_jobs=jobs)(
            delayed(candidate_fitness)(config, env_config, genome, template, episode_seeds)
            for genome in population
        )
    return np.asarray(fitnesses, dtype=np.float64)
