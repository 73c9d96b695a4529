from src.core.prior import Prior, Regime
from src.core.theory import CountingModel, LassoCoefModel, LcdModel, lm_fdp_at_tpp, power_at_level
from src.core.tuning import cv_amp, oracle_lambda_star
from src.sim.experiment import ExperimentConfig, LambdaSpec, run_trial
from src.utils.constants import Statistic


def print_levels(name, model, levels, use_hat):
    """Print the limiting power of one selection rule at each target level."""
    powers = "  ".join(f"q={q:g}: {power_at_level(model, q, use_hat=use_hat):.3f}" for q in levels)
    print(f"{name:<28}{powers}")


def demo_theory():
    """Limiting FDP / TPP tradeoff of each rule on the two-point prior."""
    prior, delta, sigma = Prior.two_point(0.1, 10.0), 0.5, 1.0
    levels = (0.05, 0.1, 0.2)
    print(f"Prior: {prior.atoms}, delta={delta}, sigma={sigma}\n")

    lam_star = oracle_lambda_star(prior, delta, sigma)
    lam_cv = cv_amp(prior, delta, sigma, 10).lambda_cv
    counting_star = oracle_lambda_star(prior, delta, sigma, Regime.counting(0.3))
    print(f"lambda* = {lam_star:.4f}  lambda_cv = {lam_cv:.4f}")
    print(f"counting lambda* = {counting_star:.4f}")

    point = lm_fdp_at_tpp(prior, delta, sigma, 0.8)
    print(f"Lasso-max reaches tpp 0.8 at fdp {point.fdp:.3f}\n")

    oracle = LassoCoefModel(prior, delta, sigma, lam_star)
    print_levels("thresholded Lasso (oracle)", oracle, levels, False)
    print_levels("knockoffs LCD at lambda_cv", LcdModel(prior, delta, sigma, lam_cv), levels, True)
    counting = CountingModel(prior, delta, sigma, counting_star, 0.3)
    print_levels("counting knockoffs c=0.3", counting, levels, True)


def demo_trial():
    """One finite-sample knockoff trial next to its limit."""
    prior = Prior.two_point(0.1, 10.0)
    config = ExperimentConfig(
        n=500,
        p=1000,
        sigma=1.0,
        prior=prior,
        lambda_spec=LambdaSpec.fixed(1.0),
        statistic=Statistic.LCD,
        q_levels=(0.1,),
        base_seed=1,
    )
    outcome = run_trial(config, 0).outcomes[0]
    limit = power_at_level(LcdModel(prior, config.delta, 1.0, 1.0), 0.1, use_hat=True)
    print(f"\nOne trial, n={config.n}, p={config.p}, lambda=1:")
    print(f"  selected {outcome.selected}, fdp {outcome.fdp:.3f}, tpp {outcome.tpp:.3f}")
    print(f"  limiting tpp at q=0.1: {limit:.3f}")


if __name__ == "__main__":
    demo_theory()
    demo_trial()
