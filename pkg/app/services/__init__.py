"""Numerical services: Riccati and LMI solves, matching, MPC, estimation and simulation"""
