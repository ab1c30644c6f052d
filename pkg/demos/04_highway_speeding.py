"""Highway: how often does the learned policy speed near police cars?

Demonstrations come from a driver who goes fast except next to police.  The
speeding probability is the fraction of visited states, weighted by the
policy's discounted occupancy, where the rule is broken.
"""

from dgpirl.harness import METHODS, FeatureTransform, demonstration_policy, evaluate_reward, method_options
from dgpirl.mdp import sample_demonstrations
from dgpirl.worlds import gen_highway, speeding_probability

world = gen_highway(seed=0)
expert = demonstration_policy(world, "greedy", 1e-8)
demos = sample_demonstrations(world.mdp, expert, horizon=8, count=64, seed=1)
x = FeatureTransform.fit(world.features)(world.features)

print("expert speeding probability: %.3f" % speeding_probability(world, expert))
for name in ("maxent", "dgp-irl"):
    params = {} if name == "maxent" else {"max_iter": 200}
    method = METHODS[name]
    model, _, _ = method.fit(x, demos, world.mdp, method_options(name, params, 0, 1e-8, None))
    result = evaluate_reward(world, method.reward(model, x))
    print(f"{name:8s} EVD {result['evd']:.3f}  speeding probability {result['speeding']:.3f}")
