"""
Experiment configuration and command-line front-end
"""
