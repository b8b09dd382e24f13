"""
Snapping noisy records onto a road network
==========================================

Sanitized points fall off the road. Each one is projected onto the nearest
road segment. A record counts toward a route only if it lands on one of the
route's own segments, so a point pulled onto a parallel road is lost for
travel-time purposes.
"""
import numpy as np

from privtravel import Trajectory, make_network, map_trajectory, sanitize_trajectory, snap_point
from privtravel.mapmatch import signed_route_distance

net, route = make_network("three-parallel-roads", length=4800.0, spacing=100.0)
print("roads:", net.segment_ids, "target route length:", route.length, "m")

# %%
# Perpendicular projection, clamped to the road ends.
for p in [(50.0, 30.0), (2000.0, 70.0), (5000.0, -40.0)]:
    m = snap_point(net, p)
    print(f"{p} -> road {m.seg_id} at ({m.x:.0f}, {m.y:.0f})")

# %%
# A trip along road 1, released at a total of 0.1 per meter (0.01 per
# record, about 200 m of typical noise). Several records jump to roads 2
# and 3.
trip = Trajectory("t1", np.arange(10) * 20.0, np.column_stack([np.arange(10) * 480.0, np.zeros(10)]))
noisy = sanitize_trajectory(trip, 0.1, np.random.default_rng(3))
mapped = map_trajectory(net, noisy, route)
for q in mapped:
    print(f"t={q.timestamp:>5.0f}s road {q.seg_id} on route {q.on_route!s:<5} arc {q.arc_pos:8.1f}")

# %%
# Signed distances along the route between consecutive on-route records.
# Backward steps are kept as negative values rather than discarded.
steps = [signed_route_distance(route, a, b) for a, b in zip(mapped, list(mapped)[1:]) if a.on_route and b.on_route]
print("signed steps (m):", np.round(steps, 1))
