"""Walk a point around a triangle and print which feature it snaps to.

Run: python3 demos/closest_point_tour.py
"""
import numpy as np

from bgnn.geometry import Triangle, closest_point_on_triangle, ordered_normal_pair

tri = Triangle.from_vertices((0, 0, 0), (1, 0, 0), (0, 1, 0))

for p in [(0.2, 0.2, 0.5), (1.5, 1.5, 0.0), (0.5, -0.7, 0.1), (-0.4, 0.3, 0.0),
          (-1.0, -1.0, 0.2), (2.0, -0.3, 0.0), (-0.3, 2.0, 0.0)]:
    r = closest_point_on_triangle(p, tri)
    print(f"{str(p):22s} -> {r.region.name:13s} closest={np.round(r.point, 3)} dist={np.sqrt(r.dist_sq):.4f}")

# the ordered pair does not care which way the wall was wound
n = np.array([0.0, 0.0, 1.0])
print("pair(+n):", ordered_normal_pair(n).as_features())
print("pair(-n):", ordered_normal_pair(-n).as_features())
