"""Semidefinite program builder and solvers."""
