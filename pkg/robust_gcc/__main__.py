"""Entry point for ``python -m robust_gcc``."""

from .cli import main

if __name__ == "__main__":
    main(prog_name="robust-gcc")
