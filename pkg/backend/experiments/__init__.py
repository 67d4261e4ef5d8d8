"""
Experiment runners: stream learning, denoising benchmark, GD vs FTL, Dyna control
"""
