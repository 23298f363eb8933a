"""Small SOCPs whose optimal values are known in closed form.

Each builder returns ``(program, expected_objective)``; the expected values are
worked out by hand (or by elementary linear algebra) in the comments, never by
the solver under test.
"""
import math

import numpy as np

from wsrm.conic import Affine, ConeProgram, add_geometric_mean_tree, add_hyperbolic

V = Affine.var


def bound_box():
    # max x s.t. x <= 3
    p = ConeProgram()
    x = p.add_var()
    p.add_le(V(x), 3.0)
    p.set_objective(V(x))
    return p, 3.0


def unit_disc_diagonal():
    # max x + y on the unit disc: attained at (1, 1)/sqrt 2
    p = ConeProgram()
    x, y = p.add_vars(2)
    p.add_soc([V(x), V(y)], Affine.constant(1.0))
    p.set_objective(V(x) + V(y))
    return p, math.sqrt(2.0)


def ball_linear_objective():
    # max c'y s.t. ||y|| <= r gives r ||c||
    c = np.array([1.0, -2.0, 0.5, 3.0, -1.0])
    r = 2.5
    p = ConeProgram()
    y = p.add_vars(5)
    p.add_soc([V(i) for i in y], Affine.constant(r))
    p.set_objective(sum((V(i) * ci for i, ci in zip(y, c)), Affine()))
    return p, r * math.sqrt(float(c @ c))


def halfspace_distance():
    # distance from p0 = (3, 4) to {y : y1 + y2 <= 1} is (7 - 1)/sqrt 2
    p = ConeProgram()
    y1, y2, t = p.add_vars(3)
    p.add_le(V(y1) + V(y2), 1.0)
    p.add_soc([V(y1) - 3.0, V(y2) - 4.0], V(t))
    p.set_objective(-V(t))
    return p, -6.0 / math.sqrt(2.0)


def least_norm_equality():
    # min ||y|| s.t. A y = b is ||pinv(A) b||
    A = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0])
    p = ConeProgram()
    y = p.add_vars(3)
    t = p.add_var()
    for r in range(2):
        p.add_equality(sum((V(i) * A[r, i] for i in range(3)), Affine()), b[r])
    p.add_soc([V(i) for i in y], V(t))
    p.set_objective(-V(t))
    return p, -float(np.linalg.norm(np.linalg.pinv(A) @ b))


def geometric_mean_two():
    # max sqrt(y1 y2) s.t. y1 + y2 <= 2 is 1 at y1 = y2 = 1
    p = ConeProgram()
    y1, y2 = p.add_vars(2)
    p.add_le(V(y1) + V(y2), 2.0)
    root = add_geometric_mean_tree(p, [V(y1), V(y2)])
    p.set_objective(root)
    return p, 1.0


def hyperbolic_bound():
    # max z with z^2 <= u v, u <= 2, v <= 8 gives 4
    p = ConeProgram()
    u, v, z = p.add_vars(3)
    p.add_le(V(u), 2.0)
    p.add_le(V(v), 8.0)
    add_hyperbolic(p, V(u), V(v), V(z))
    p.set_objective(V(z))
    return p, 4.0


def lp_vertex():
    # max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, x <= 3, x, y >= 0: vertex (3, 1), value 11
    p = ConeProgram()
    x, y = p.add_vars(2)
    p.add_le(V(x) + V(y), 4.0)
    p.add_le(V(x) + 3.0 * V(y), 6.0)
    p.add_le(V(x), 3.0)
    p.add_nonneg(V(x))
    p.add_nonneg(V(y))
    p.set_objective(3.0 * V(x) + 2.0 * V(y))
    return p, 11.0


def simplex_lp():
    # max x1 + 2 x2 + 3 x3 over the probability simplex: put all mass on x3
    p = ConeProgram()
    x = p.add_vars(3)
    p.add_equality(V(x[0]) + V(x[1]) + V(x[2]), 1.0)
    for i in x:
        p.add_nonneg(V(i))
    p.set_objective(V(x[0]) + 2.0 * V(x[1]) + 3.0 * V(x[2]))
    return p, 3.0


def reciprocal_sum():
    # min x + y s.t. x y >= 1 is 2 at x = y = 1
    p = ConeProgram()
    x, y = p.add_vars(2)
    add_hyperbolic(p, V(x), V(y), Affine.constant(1.0))
    p.set_objective(-(V(x) + V(y)))
    return p, -2.0


def padded_geometric_mean():
    # three leaves padded with a one: root = (2 * 3 * 5 * 1)^(1/4)
    p = ConeProgram()
    y = p.add_vars(3)
    for i, a in zip(y, (2.0, 3.0, 5.0)):
        p.add_le(V(i), a)
    root = add_geometric_mean_tree(p, [V(i) for i in y])
    p.set_objective(root)
    return p, 30.0 ** 0.25


def overdetermined_least_squares():
    # min ||A y - b|| has the least-squares residual norm as its value
    A = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0, 2.0, 4.0])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    p = ConeProgram()
    y = p.add_vars(2)
    t = p.add_var()
    rows = [V(y[0]) * A[r, 0] + V(y[1]) * A[r, 1] - b[r] for r in range(4)]
    p.add_soc(rows, V(t))
    p.set_objective(-V(t))
    return p, -float(np.linalg.norm(A @ coef - b))


def fixed_coordinate_on_circle():
    # max y1 with ||(y1, y2)|| <= 1 and y2 = 0.6 gives 0.8
    p = ConeProgram()
    y1, y2 = p.add_vars(2)
    p.add_equality(V(y2), 0.6)
    p.add_soc([V(y1), V(y2)], Affine.constant(1.0))
    p.set_objective(V(y1))
    return p, 0.8


def lens_top():
    # highest point of the intersection of unit discs centred at (0,0) and (1,0): (1/2, sqrt 3/2)
    p = ConeProgram()
    y1, y2 = p.add_vars(2)
    p.add_soc([V(y1), V(y2)], Affine.constant(1.0))
    p.add_soc([V(y1) - 1.0, V(y2)], Affine.constant(1.0))
    p.set_objective(V(y2))
    return p, math.sqrt(3.0) / 2.0


def badly_scaled_bound():
    # max 1000 y s.t. y <= 1e-3
    p = ConeProgram()
    y = p.add_var()
    p.add_le(V(y), 1e-3)
    p.set_objective(1000.0 * V(y))
    return p, 1.0


def scalar_quadratic():
    # min y^2 - 2y via t >= y^2 written as ||(2y, t - 1)|| <= t + 1; min is -1 at y = 1,
    # so the maximized negation is +1
    p = ConeProgram()
    y, t = p.add_vars(2)
    p.add_soc([2.0 * V(y), V(t) - 1.0], V(t) + 1.0)
    p.set_objective(-(V(t) - 2.0 * V(y)))
    return p, 1.0


def two_point_distance():
    # min ||y - a|| + ||y - b|| equals ||a - b|| (any y on the segment)
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    p = ConeProgram()
    y1, y2, t1, t2 = p.add_vars(4)
    p.add_soc([V(y1) - a[0], V(y2) - a[1]], V(t1))
    p.add_soc([V(y1) - b[0], V(y2) - b[1]], V(t2))
    p.set_objective(-(V(t1) + V(t2)))
    return p, -5.0


def fermat_point():
    # sum of distances from the Fermat point of a unit equilateral triangle is sqrt 3
    pts = [(0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3.0) / 2.0)]
    p = ConeProgram()
    y1, y2 = p.add_vars(2)
    ts = p.add_vars(3)
    for (px, py), t in zip(pts, ts):
        p.add_soc([V(y1) - px, V(y2) - py], V(t))
    p.set_objective(-(V(ts[0]) + V(ts[1]) + V(ts[2])))
    return p, -math.sqrt(3.0)


def zero_sum_ball():
    # max mu'y s.t. ||y|| <= 1, sum y = 0 gives the norm of mu minus its mean
    mu = np.array([0.3, -0.1, 0.7, 0.2])
    p = ConeProgram()
    y = p.add_vars(4)
    p.add_soc([V(i) for i in y], Affine.constant(1.0))
    p.add_equality(sum((V(i) for i in y), Affine()), 0.0)
    p.set_objective(sum((V(i) * m for i, m in zip(y, mu)), Affine()))
    return p, float(np.linalg.norm(mu - mu.mean()))


def duplicated_constraint():
    # max x with x <= 1 stated twice (degenerate duals)
    p = ConeProgram()
    x = p.add_var()
    p.add_le(V(x), 1.0)
    p.add_le(V(x), 1.0)
    p.set_objective(V(x))
    return p, 1.0


def equality_only():
    # no cones: y = 2, objective constant 5
    p = ConeProgram()
    y = p.add_var()
    p.add_equality(V(y), 2.0)
    p.set_objective(Affine.constant(5.0))
    return p, 5.0


def objective_constant():
    # max x + 10 s.t. ||x|| <= 2
    p = ConeProgram()
    x = p.add_var()
    p.add_soc([V(x)], Affine.constant(2.0))
    p.set_objective(V(x) + 10.0)
    return p, 12.0


def rate_style_cone():
    # max sqrt(x) s.t. x <= 9 written through a hyperbolic cone: s^2 <= x * 1, value 3
    p = ConeProgram()
    x, s = p.add_vars(2)
    p.add_le(V(x), 9.0)
    add_hyperbolic(p, V(x), Affine.constant(1.0), V(s))
    p.set_objective(V(s))
    return p, 3.0


OPTIMAL = [bound_box, unit_disc_diagonal, ball_linear_objective, halfspace_distance,
           least_norm_equality, geometric_mean_two, hyperbolic_bound, lp_vertex, simplex_lp,
           reciprocal_sum, padded_geometric_mean, overdetermined_least_squares,
           fixed_coordinate_on_circle, lens_top, badly_scaled_bound, scalar_quadratic,
           two_point_distance, fermat_point, zero_sum_ball, duplicated_constraint,
           equality_only, objective_constant, rate_style_cone]


def infeasible_bounds():
    # y <= -1 and y >= 1
    p = ConeProgram()
    y = p.add_var()
    p.add_le(V(y), -1.0)
    p.add_nonneg(V(y) - 1.0)
    p.set_objective(V(y))
    return p


def infeasible_equalities():
    p = ConeProgram()
    y1, y2 = p.add_vars(2)
    p.add_equality(V(y1) + V(y2), 1.0)
    p.add_equality(V(y1) + V(y2), 2.0)
    p.add_nonneg(V(y1))
    p.set_objective(V(y1))
    return p


def infeasible_ball_and_plane():
    # unit disc versus the line y1 = 2
    p = ConeProgram()
    y1, y2 = p.add_vars(2)
    p.add_soc([V(y1), V(y2)], Affine.constant(1.0))
    p.add_equality(V(y1), 2.0)
    p.set_objective(V(y2))
    return p


INFEASIBLE = [infeasible_bounds, infeasible_equalities, infeasible_ball_and_plane]


def unbounded_ray():
    p = ConeProgram()
    y = p.add_var()
    p.add_nonneg(V(y))
    p.set_objective(V(y))
    return p


def unbounded_cone():
    # max t with ||y|| <= t: t can grow without limit
    p = ConeProgram()
    y1, y2, t = p.add_vars(3)
    p.add_soc([V(y1), V(y2)], V(t))
    p.set_objective(V(t) - V(y1))
    return p


UNBOUNDED = [unbounded_ray, unbounded_cone]
