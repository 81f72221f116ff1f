"""
Experiment handlers, one per experiment id.
"""
