"""carnotflow: transport-diffusion with half-order dissipation on stratified groups."""

__version__ = "0.1.0"
