"""Distributed subgradient-free stochastic optimization over time-varying networks."""
