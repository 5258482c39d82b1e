"""Dense linear algebra kernels and S-procedure multipliers."""
