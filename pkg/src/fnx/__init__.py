"""Variable-exponent function spaces on Lipschitz domains: kernels, norms and extension."""
