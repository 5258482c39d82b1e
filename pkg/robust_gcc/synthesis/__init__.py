"""Controller synthesis and certification."""
