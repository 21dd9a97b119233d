"""CPU micro-benchmark of convolution kernel sizes (forward + backward).

Two comparisons:

* matched output channels: one k x k conv for k in {1, 3, 5};
* matched receptive field: two stacked 3x3 convs against one 5x5 conv.

Each case reports the median of ``reps`` timed runs after one warmup.
"""
from __future__ import annotations

import statistics
import time

import numpy as np

from .layers import Conv2d
from .tensor import make_rng


def _time_stack(convs, x, reps):
    def run():
        y = x
        for conv in convs:
            y = conv.forward(y, train=True)
        dy = np.ones_like(y)
        for conv in reversed(convs):
            dy = conv.backward(dy)

    run()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        run()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run_bench(channels=64, size=32, batch=8, reps=5, seed=0):
    rng = make_rng(seed)
    x = rng.standard_normal((batch, channels, size, size), dtype=np.float32)
    cases = [("matched-channels", f"{k}x{k}", [k]) for k in (1, 3, 5)]
    cases += [("matched-receptive-field", "2x(3x3)", [3, 3]),
              ("matched-receptive-field", "1x(5x5)", [5])]
    rows = []
    for group, label, kernels in cases:
        convs = [Conv2d(channels, channels, k, rng=rng) for k in kernels]
        macc = sum(k * k * channels * channels * size * size * batch for k in kernels)
        seconds = _time_stack(convs, x, reps)
        # forward + the two backward products cost ~3x the forward MACC
        rows.append(dict(group=group, case=label, params=sum(k * k * channels * channels for k in kernels),
                         macc=macc, median_s=seconds, gmacc_per_s=3 * macc / seconds / 1e9))
    return rows


def render(rows) -> str:
    header = f"{'group':<24}{'case':<10}{'params':>10}{'MACC(fwd)':>14}{'median s':>11}{'GMACC/s':>9}"
    lines = [header]
    for r in rows:
        lines.append(f"{r['group']:<24}{r['case']:<10}{r['params']:>10}{r['macc']:>14}"
                     f"{r['median_s']:>11.4f}{r['gmacc_per_s']:>9.2f}")
    return "\n".join(lines) + "\n"
