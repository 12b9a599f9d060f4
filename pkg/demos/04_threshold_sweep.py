#!/usr/bin/env python3
"""Confidence-threshold sweep on a small noisy corpus.

The routing threshold controls how much of the batch trains negatively;
this script sweeps it and prints the resulting clean-test accuracies.
Small sizes keep it quick, so expect noisy numbers; the full-size sweep
lives in the acceptance suite.
"""

from beatlearn.data import (
    NoiseSpec,
    build_synthetic_corpus,
    inject_label_noise,
)
from beatlearn.evaluation import confidence_sweep, write_sweep_csv
from beatlearn.network import default_network_spec
from beatlearn.training import RoutingPolicy, TrainConfig


def main():
    seed = 1
    corpus = build_synthetic_corpus(200, 6, seed=seed)
    noisy = inject_label_noise(corpus, NoiseSpec(rate=0.3, seed=seed))
    spec = default_network_spec(base_filters=8, stem_stride=2)
    config = TrainConfig(epochs=8, batch_size=128, alpha=0.05, seed=seed,
                         routing=RoutingPolicy(tau=0.8, warmup_epochs=2))
    taus = [0.99, 0.8, 0.5, 0.3]
    print(f"sweeping {len(taus)} thresholds on {len(noisy)} noisy beats "
          f"({config.epochs} epochs each)...")
    rows = confidence_sweep(noisy, taus, spec, config, holdout_patients=1)
    for tau, accuracy in rows:
        bar = "#" * int(accuracy * 40)
        print(f"  tau {tau:4.2f}  accuracy {accuracy:.4f}  {bar}")
    write_sweep_csv("sweep_demo.csv", rows)
    print("wrote sweep_demo.csv")


if __name__ == "__main__":
    main()
