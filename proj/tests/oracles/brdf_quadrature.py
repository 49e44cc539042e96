"""Cosine-weighted hemisphere integral of the pseudospecular BRDF (sigma=0.25, lobe power 100)."""
import numpy as np
from scipy import integrate

P = 100.0
SIGMA = 0.25


def rho(theta_o, phi_o, theta_i):
    n = np.array([0.0, 0.0, 1.0])
    v_in = np.array([np.sin(theta_i), 0.0, np.cos(theta_i)])
    mirror = 2 * np.dot(v_in, n) * n - v_in
    v_out = np.array([np.sin(theta_o) * np.cos(phi_o), np.sin(theta_o) * np.sin(phi_o), np.cos(theta_o)])
    c = max(0.0, float(np.dot(mirror, v_out)))
    return SIGMA / np.pi + (1 - SIGMA) * (P + 2) / (2 * np.pi) * c ** P


for theta_i in (0.0, 0.5):
    val, _ = integrate.dblquad(lambda t, p: rho(t, p, theta_i) * np.cos(t) * np.sin(t),
                               0, 2 * np.pi, 0, np.pi / 2, epsabs=1e-10, epsrel=1e-10)
    print(f"theta_i={theta_i} integral={val:.6f}")
