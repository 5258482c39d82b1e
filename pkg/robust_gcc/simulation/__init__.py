"""Monte Carlo closed-loop simulation."""
