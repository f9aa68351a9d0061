"""Simulation of a tendon-driven ball joint actuated by two antagonistic
pairs of electrohydraulic artificial muscles, with capacitive self-sensing,
a polynomial pose estimator and tendon-space PID control."""

__version__ = "0.1.0"
