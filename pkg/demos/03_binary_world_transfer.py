"""Binary World: learning a reward and reusing it on a fresh layout.

The reward of a cell depends on how many of its 3x3 neighbours are blue,
which no single feature expresses.  After training on one random layout the
models are evaluated on a second layout without any new demonstrations.
"""

from dgpirl.harness import METHODS, FeatureTransform, demonstration_policy, evaluate_reward, method_options
from dgpirl.mdp import sample_demonstrations
from dgpirl.worlds import gen_binary_world

train_world = gen_binary_world(grid=10, seed=0)
test_world = gen_binary_world(grid=10, seed=100)
policy = demonstration_policy(train_world, "greedy", 1e-8)
demos = sample_demonstrations(train_world.mdp, policy, horizon=8, count=128, seed=1)

# standardise with training statistics only, then apply the same map to the new layout
transform = FeatureTransform.fit(train_world.features)
x_train, x_test = transform(train_world.features), transform(test_world.features)

for name in ("maxent", "gpirl", "dgp-irl"):
    params = {} if name == "maxent" else {"max_iter": 200}
    method = METHODS[name]
    model, _, _ = method.fit(x_train, demos, train_world.mdp, method_options(name, params, 0, 1e-8, None))
    evd_train = evaluate_reward(train_world, method.reward(model, x_train))["evd"]
    evd_test = evaluate_reward(test_world, method.reward(model, x_test))["evd"]
    print(f"{name:8s} training EVD {evd_train:.3f}  transfer EVD {evd_test:.3f}")
