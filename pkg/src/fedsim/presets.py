"""Experiment grids behind ``fedsim replicate``.

Synthetic runs use two blob sets. ``separable`` (64-d) is the default
stand-in for MNIST. ``overlap`` (4-d) has neighbouring classes that bleed
into each other; that is what keeps the one-class-per-agency penalty alive
for 50 rounds of flavor 1, so the per-class flavor-1 curves and their
random-split references use it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .federation import FederationConfig

SYNTHETIC = {
    "separable": dict(classes=10, per_class=6000, dim=64, test_per_class=500),
    "overlap": dict(classes=10, per_class=6000, dim=4, test_per_class=500),
}

# one local epoch of a 6000-example shard at batch 128
LOCAL_EPOCH_STEPS = 47

EXCHANGE_SWEEP = (0, 16, 32, 64, 128, 256)
FIGURES = ("fig4", "fig6", "fig7", "fig8", "fig9", "fig10")


@dataclass(frozen=True)
class Curve:
    name: str
    config: FederationConfig
    dataset: str = "separable"


def _flavor1_sync(mnist: bool) -> FederationConfig:
    # one mini-batch per agency per round; MNIST needs many more rounds to settle
    return FederationConfig(flavor="flavor1", rounds=500 if mnist else 50, local_steps=1)


def _flavor1_skewed() -> FederationConfig:
    return FederationConfig(flavor="flavor1", rounds=50, local_steps=LOCAL_EPOCH_STEPS)


def relay_reference(config: FederationConfig, shard_sizes) -> FederationConfig:
    """Centralized config doing as many SGD steps as a flavor-2 relay over ``shard_sizes``."""
    b = config.batch_size
    steps = config.local_epochs * sum(-(-n // min(b, n)) for n in shard_sizes)
    return replace(config, flavor="centralized", rounds=steps, local_steps=1, passes=None)


def curves(figure: str, mnist: bool = False, seed: int = 0) -> list[Curve]:
    """Runs plotted in ``figure`` (not fig4, which is analytic)."""
    skew_data = "mnist" if mnist else "overlap"
    base_data = "mnist" if mnist else "separable"
    f1 = replace(_flavor1_sync(mnist), seed=seed)
    f1_skew = replace(_flavor1_skewed(), seed=seed)
    f2 = FederationConfig(flavor="flavor2", seed=seed)
    by_class = dict(partition="by_class")
    if figure == "fig6":
        return [
            Curve("flavor1_random", f1, base_data),
            Curve("centralized", replace(f1, flavor="centralized"), base_data),
        ]
    if figure == "fig7":
        return [
            Curve("flavor2_random", f2, base_data),
            # rounds filled in from the shard sizes at run time
            Curve("centralized", replace(f2, flavor="centralized"), base_data),
        ]
    if figure == "fig8":
        return [
            Curve("flavor1_by_class", replace(f1_skew, **by_class), skew_data),
            Curve("flavor2_by_class", replace(f2, **by_class), base_data),
        ]
    if figure == "fig9":
        return [
            Curve("flavor1_by_class", replace(f1_skew, **by_class), skew_data),
            Curve("flavor1_by_class_k128",
                  replace(f1_skew, exchange_per_class=128, **by_class), skew_data),
            Curve("flavor2_by_class", replace(f2, **by_class), base_data),
            Curve("flavor2_by_class_k128",
                  replace(f2, exchange_per_class=128, **by_class), base_data),
        ]
    if figure == "fig10":
        return [Curve("exchange_sweep", replace(f1_skew, **by_class), skew_data)]
    raise ValueError(f"unknown figure {figure!r}; choose from {FIGURES}")
