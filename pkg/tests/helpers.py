"""Checks shared by the unit and acceptance tests."""

import numpy as np

from hpcm.codec import encoder_engine


def relative_error(actual, expected) -> float:
    """Max-norm error scaled by the max-norm of the reference."""
    actual, expected = np.asarray(actual, dtype=np.float64), np.asarray(expected, dtype=np.float64)
    return float(np.abs(actual - expected).max() / max(np.abs(expected).max(), 1e-300))


def _params_through(y, recon, config, last_step, store=None):
    engine, _, _ = encoder_engine(y, config, store)
    for step in range(1, last_step + 1):
        params = engine.params(step, recon)
    return params


def causality_violations(y, config, rng, store=None) -> list[str]:
    """Perturb every site coded at step >= i and compare the step-i parameters.

    Side information stays the one measured on ``y``; only what the context
    model can read (the reconstruction) changes.
    """
    engine, _, _ = encoder_engine(y, config, store)
    schedule = engine.schedule
    reference = [engine.params(step, y) for step in range(1, schedule.num_steps + 1)]
    problems = []
    for step in range(1, schedule.num_steps + 1):
        perturbed = y.copy()
        later = schedule.step_map >= step
        perturbed[later] = rng.integers(-100, 101, size=int(later.sum()))
        got = _params_through(y, perturbed, config, step, store)
        ref = reference[step - 1]
        if not (np.array_equal(got.mu, ref.mu) and np.array_equal(got.alpha, ref.alpha)):
            problems.append(f"{config.backend} step {step}")
    return problems


def trace_mismatches(enc_trace, dec_trace) -> list[int]:
    bad = []
    for e, d in zip(enc_trace.steps, dec_trace.steps, strict=True):
        if not (np.array_equal(e.sites, d.sites) and np.array_equal(e.mu, d.mu)
                and np.array_equal(e.alpha, d.alpha)):
            bad.append(e.step)
    return bad
