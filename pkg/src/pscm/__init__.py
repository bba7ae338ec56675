"""Linear propagation structural causal models."""
