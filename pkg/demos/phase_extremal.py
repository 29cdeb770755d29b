"""A worst case for the current construction: 200% bias at any batch size.

Phase-like error models f(y, s) = sin(y + s) wash information out of the
nominal values when the error spread is wide.  Push that to the limit —
errors uniform on (-pi, pi), data equally likely to be +pi/2 or -pi/2 —
and the conditional mean E[f | Y] is identically zero: the nominals still
vary, but they say nothing about where the replicates will land.

The current construction scales its replicates by the covariance of the
nominals and triples the variance it should report.  The relative bias is
exactly 2, no matter how many vectors J are averaged; growing the batch
cannot fix it.
"""

import math

from mcombine.analytics import (
    ScalarScenario,
    bias_factor_current,
    relbias_current,
    target_variance,
)
from mcombine.experiments import ExperimentConfig, estimate_combine_bias
from mcombine.models import PHASE, TwoPoint, Uniform


def scenario(j: int) -> ScalarScenario:
    return ScalarScenario(
        kernel=PHASE,
        y_dist=TwoPoint(a=[-math.pi / 2.0], b=[math.pi / 2.0], p=0.5),
        s_dist=Uniform(lo=[-math.pi], hi=[math.pi]),
        j=j,
        q=50,
    )


def main():
    print("extremal phase model: S ~ Unif(-pi, pi), Y = +/- pi/2, current construction\n")
    print(f"{'J':>3}  {'bias factor':>12}  {'target var':>11}  {'relbias (MC)':>13}  {'closed':>7}")
    for salt, j in enumerate((2, 4, 8)):
        sc = scenario(j)
        est = estimate_combine_bias(
            ExperimentConfig(
                estimand="combine_bias_current",
                trials=100_000,
                scenario=sc,
                master_seed=0,
                salt=salt,
            )
        )
        print(
            f"{j:>3}  {bias_factor_current(sc):>12.4f}  {target_variance(sc):>11.4f}"
            f"  {est.point:>10.4f} +/- {est.std_error:.4f}  {relbias_current(sc):>7.3f}"
        )
    print(
        "\nBias factor and target both scale as 1/J, so their ratio is"
        "\npinned at 2: the reported variance is 3x the true one at any J."
    )


if __name__ == "__main__":
    main()
