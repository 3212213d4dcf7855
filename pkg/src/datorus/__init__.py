"""Derived-from-Anosov dynamics on the 3-torus and its verification suite."""
