"""Planted-partition random connection model: sampling, GBG clustering, thresholds."""
