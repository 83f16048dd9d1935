"""Unit-circle algebra for rotor orientations and rotating frames.

A point on S^1 is a plain length-2 float64 array ``(c, s)`` with
``c**2 + s**2 == 1``.  Every composition renormalizes its result, so long
simulations cannot drift off the circle.  Integration is done by exact
rotation (the exponential map), never by Euler steps on the embedding.
"""

import math

import numpy as np
from numba import njit

# 90-degree rotation; x -> (-x2, x1)
J = np.array([[0.0, -1.0], [1.0, 0.0]])

IDENTITY = np.array([1.0, 0.0])


@njit(cache=True)
def normalize(z):
    """Project a near-unit 2-vector back onto the circle."""
    n = math.sqrt(z[0] * z[0] + z[1] * z[1])
    if not n > 0.5:
        raise ValueError("cannot normalize: vector too far from the unit circle")
    return np.array([z[0] / n, z[1] / n])


@njit(cache=True)
def from_angle(theta):
    return np.array([math.cos(theta), math.sin(theta)])


@njit(cache=True)
def angle_of(z):
    """Angle of a circle point in (-pi, pi]."""
    a = math.atan2(z[1], z[0])
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@njit(cache=True)
def wrap_angle(theta):
    """Wrap any angle into (-pi, pi]."""
    a = math.remainder(theta, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@njit(cache=True)
def rot_matrix(z):
    return np.array([[z[0], -z[1]], [z[1], z[0]]])


@njit(cache=True)
def mul(z1, z2):
    """Group product; symmetric formula, so commutativity is bitwise."""
    c = z1[0] * z2[0] - z1[1] * z2[1]
    s = z1[1] * z2[0] + z1[0] * z2[1]
    return normalize(np.array([c, s]))


@njit(cache=True)
def rotate(z, angle):
    """Rotate a circle point by an angle (exact exponential-map update)."""
    c = math.cos(angle)
    s = math.sin(angle)
    return normalize(np.array([c * z[0] - s * z[1], s * z[0] + c * z[1]]))


@njit(cache=True)
def step(z, rate, dt):
    """Advance the integrator ``dz/dt = rate * J z`` by one exact step."""
    return rotate(z, rate * dt)
