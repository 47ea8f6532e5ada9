"""Desk-scale driver: scenario files, a deterministic runner, security
probes over the resulting transcripts, and microbenchmarks."""
