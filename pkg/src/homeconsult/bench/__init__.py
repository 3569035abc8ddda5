"""Synthetic benchmark: corpus/scenario generators, independent gold
oracle, metric implementations, the simulated latency model, and the
variant runner."""
