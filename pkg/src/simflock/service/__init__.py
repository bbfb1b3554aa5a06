"""HTTP service wrapping the study workflows."""
