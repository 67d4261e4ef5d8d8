"""
Core numerics: encoders, learners, world model, agent, Dyna loop
"""
