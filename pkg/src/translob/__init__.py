"""TransLOB: dilated causal convolutions plus masked self-attention for limit order books."""

__version__ = "0.1.0"
