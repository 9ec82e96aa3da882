"""Dialect identification stack: log-mel frontend, CTC acoustic model on a
small residual CNN + BLSTM, and a downstream RNN dialect classifier trained
on the acoustic model's intermediate features."""

__version__ = "0.1.0"
