"""Policy recognition in abstract hidden Markov models."""
