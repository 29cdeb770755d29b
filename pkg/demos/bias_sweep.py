"""How the two replicate constructions' covariance bias behaves as Q grows.

The setting: J=4 measured vectors pushed through a multiplicative error
model with standard-normal data and errors.  For each Q we synthesize
replicates thousands of times and compare the mean sample variance
against the target variance of the shared-error batch mean.

The punch line: the current construction is exactly unbiased here, while
the alternative construction carries a relative bias of 1/Q — visible at
Q=3, negligible by Q=300.
"""

from mcombine.analytics import ScalarScenario, relbias_alternative, relbias_current
from mcombine.experiments import ExperimentConfig, estimate_combine_bias
from mcombine.models import MULTIPLICATIVE, Normal

STD = Normal(mean=[0.0], cov=[[1.0]])
TRIALS = 10_000
QS = (3, 10, 30, 100, 300)


def sweep(construction: str):
    rows = []
    for salt, q in enumerate(QS):
        scenario = ScalarScenario(kernel=MULTIPLICATIVE, y_dist=STD, s_dist=STD, j=4, q=q)
        est = estimate_combine_bias(
            ExperimentConfig(
                estimand=f"combine_bias_{construction}",
                trials=TRIALS,
                scenario=scenario,
                master_seed=0,
                salt=salt,
            )
        )
        closed = (
            relbias_current(scenario) if construction == "current" else relbias_alternative(scenario)
        )
        rows.append((q, est.point, est.std_error, closed))
    return rows


def main():
    for construction in ("current", "alternative"):
        print(f"\n{construction} construction, multiplicative model, J=4, {TRIALS} trials")
        print(f"{'Q':>5}  {'relbias (MC)':>14}  {'std err':>10}  {'closed form':>12}")
        for q, point, se, closed in sweep(construction):
            print(f"{q:>5}  {point:>14.5f}  {se:>10.5f}  {closed:>12.5f}")
    print(
        "\nThe alternative construction's bias tracks 1/Q; the current one"
        "\nis unbiased for this model because its bias factor vanishes."
    )


if __name__ == "__main__":
    main()
