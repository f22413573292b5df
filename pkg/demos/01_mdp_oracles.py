"""Exact Markov-chain oracles on a synthetic multi-agent MDP.

Builds a seeded random environment, closes the loop policy -> induced
state chain -> stationary distribution -> exact long-run objective, and
confirms the exact value against a plain simulated trajectory.
"""
import numpy as np

from resilient_marl import (
    JointPolicy,
    generate_random_mdp,
    global_return,
    induced_chain,
    sample_transition,
    stationary_distribution,
)

mdp = generate_random_mdp(n_agents=3, n_states=4, actions_per_agent=2,
                          reward_range=(0.0, 4.0), seed=42)
print(f"MDP: {mdp.n_agents} agents, {mdp.n_states} states, "
      f"{mdp.n_joint_actions} joint actions")

policy = JointPolicy.uniform(mdp)
chain = induced_chain(mdp, policy)
print("\ninduced state chain under the uniform policy (rows sum to 1):")
print(np.round(chain, 3))

d = stationary_distribution(chain)
print("\nstationary distribution:", np.round(d, 4))

j_exact = global_return(mdp, policy)
print(f"\nexact long-run agent-averaged reward J = {j_exact:.6f}")

# sanity: a simulated trajectory should average to the same value
rng = np.random.default_rng(0)
joint_cdf = np.cumsum(policy.joint_table(), axis=1)
rbar = mdp.mean_reward_table()
s, total, steps = 0, 0.0, 200_000
for _ in range(steps):
    a = min(int(np.searchsorted(joint_cdf[s], rng.random(), side="right")),
            mdp.n_joint_actions - 1)
    total += rbar[s, a]
    s = sample_transition(mdp, s, a, rng)
print(f"simulated average over {steps} steps  = {total / steps:.6f}")
print(f"difference                            = {abs(total / steps - j_exact):.2e}")
