"""Sparse identification of nonlinear dynamics with control, plus strategies
for hidden states and hard nonlinearities."""

__version__ = "0.1.0"
