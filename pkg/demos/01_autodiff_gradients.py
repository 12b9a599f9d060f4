#!/usr/bin/env python3
"""Tour of the autodiff engine: taped ops, backward, and a finite-difference audit.

Builds a toy conv -> batchnorm -> relu -> dense -> softmax stack, computes
the cross-entropy gradient with the tape, then re-derives a few gradient
coordinates numerically to show they agree.
"""

import numpy as np

from beatlearn import autodiff as ad
from beatlearn.autodiff import BatchNormState, Parameter, Tape, Tensor, backward
from beatlearn.training import positive_loss


def forward(x, params, state, tape=None):
    w1, b1, gamma, beta, w2, b2 = params
    h = ad.conv1d(tape, x, w1, b1, stride=1, padding=1)
    h = ad.batchnorm1d(tape, h, gamma, beta, state, "train")
    h = ad.relu(tape, h)
    h = ad.flatten(tape, h)
    logits = ad.dense(tape, h, w2, b2)
    return ad.softmax(tape, logits)


def main():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 1, 16)))
    params = [
        Parameter("conv.w", rng.normal(size=(3, 1, 3)) * 0.5),
        Parameter("conv.b", np.zeros(3)),
        Parameter("bn.gamma", np.ones(3)),
        Parameter("bn.beta", np.zeros(3)),
        Parameter("dense.w", rng.normal(size=(4, 48)) * 0.2),
        Parameter("dense.b", np.zeros(4)),
    ]
    labels = np.zeros((2, 4))
    labels[[0, 1], [2, 0]] = 1.0

    tape = Tape()
    probs = forward(x, params, BatchNormState.initial(3), tape)
    loss = positive_loss(tape, probs, labels)
    print(f"loss = {loss.item():.6f}  (tape recorded {len(tape)} ops)")
    backward(tape, loss)

    print("\nanalytic vs central-difference gradients (first coordinate of each):")
    h = 1e-6
    for p in params:
        flat = p.data.reshape(-1)
        keep = flat[0]
        flat[0] = keep + h
        up = positive_loss(None, forward(x, params, BatchNormState.initial(3)), labels).item()
        flat[0] = keep - h
        down = positive_loss(None, forward(x, params, BatchNormState.initial(3)), labels).item()
        flat[0] = keep
        numeric = (up - down) / (2 * h)
        analytic = p.grad.reshape(-1)[0]
        print(f"  {p.name:10s} analytic {analytic:+.8f}   numeric {numeric:+.8f}")


if __name__ == "__main__":
    main()
