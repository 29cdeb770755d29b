"""Bias is not the whole story: the constructions also differ in spread.

Two estimators can aim at the same target yet scatter differently from
run to run.  Here we measure, for each construction, the variance across
trials of the sample variance its replicates report, and summarize the
contrast as a normalized difference

    reldiff = (V_current - V_alternative) / (V_current + V_alternative),

which lives in [-1, 1].  A negative value means the current construction
is the steadier one.

Three error models show the range of outcomes: additive (identical
constructions, reldiff 0), multiplicative (a small edge fading as 1/Q),
and a wide exponent model where the current construction is clearly
steadier even at Q=500 — a genuine trade-off against its bias.
"""

from mcombine.analytics import ScalarScenario, synthesis_input_variance_gap
from mcombine.experiments import ExperimentConfig, estimate_vardiff
from mcombine.models import ADDITIVE, EXPONENTIAL, MULTIPLICATIVE, Normal, Uniform

STD = Normal(mean=[0.0], cov=[[1.0]])
QS = (5, 50, 500)


def scenario(kind, q):
    if kind is EXPONENTIAL:
        return ScalarScenario(
            kernel=kind,
            y_dist=Uniform(lo=[0.0], hi=[8.0]),
            s_dist=Uniform(lo=[0.05], hi=[1.95]),
            j=4,
            q=q,
        )
    return ScalarScenario(kernel=kind, y_dist=STD, s_dist=STD, j=4, q=q)


def main():
    for kind, label in ((ADDITIVE, "additive"), (MULTIPLICATIVE, "multiplicative"), (EXPONENTIAL, "exponent")):
        print(f"\n{label} model, J=4, 30,000 trials")
        print(f"{'Q':>5}  {'reldiff':>11}  {'std err':>10}")
        for salt, q in enumerate(QS):
            est = estimate_vardiff(
                ExperimentConfig(
                    estimand="vardiff_reldiff",
                    trials=30_000,
                    scenario=scenario(kind, q),
                    master_seed=0,
                    salt=salt,
                )
            )
            print(f"{q:>5}  {est.point:>11.5f}  {est.std_error:>10.5f}")
    print("\nlarge-Q closed form for the standard multiplicative model:")
    print(f"{'Q':>5}  {'V[S2_alt] - V[S2_cur] (leading term)':>38}")
    for q in QS:
        print(f"{q:>5}  {synthesis_input_variance_gap(scenario(MULTIPLICATIVE, q)) / 16:>38.3e}")
    print(
        "\nPositive gap means the alternative construction's reported"
        "\nvariance wobbles more; it shrinks like 1/Q^2 here, but stays"
        "\nmaterial for the wide exponent model."
    )


if __name__ == "__main__":
    main()
