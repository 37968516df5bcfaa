"""Controllers, observations, rewards, and the policy-gradient trainer."""
