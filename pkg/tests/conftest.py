import numpy as np
import pytest

from spheremap import FREE, OCCUPIED, OccupancyGrid


def box_room(extent, resolution=0.2):
    """Free box with a one-voxel occupied shell; extent is the free interior."""
    dims = tuple(int(round(e / resolution)) + 2 for e in extent)
    grid = OccupancyGrid.filled(resolution, -resolution * np.ones(3), dims, OCCUPIED)
    grid.states[1:-1, 1:-1, 1:-1] = FREE
    return grid


def spherical_cavity(radius, resolution=0.2):
    """Free ball carved in occupied space; clearance grows radially inward."""
    n = int(round(2 * radius / resolution)) + 4
    grid = OccupancyGrid.filled(resolution, -resolution * np.ones(3) * (n / 2), (n, n, n),
                                OCCUPIED)
    idx = np.argwhere(np.ones(grid.states.shape, dtype=bool))
    centers = grid.origin + resolution * (idx + 0.5)
    inside = np.einsum("ij,ij->i", centers, centers) <= radius * radius
    grid.states[idx[inside, 0], idx[inside, 1], idx[inside, 2]] = FREE
    return grid


def two_rooms_with_corridor(room=8.0, corridor_len=20.0, corridor_width=2.4,
                            height=3.0, resolution=0.2):
    """Two box rooms joined by a thin corridor along x.

    Returns (grid, room1_center, room2_center, corridor_x_range).
    """
    ex = 2 * room + corridor_len
    ey = room
    dims = (int(round(ex / resolution)) + 2, int(round(ey / resolution)) + 2,
            int(round(height / resolution)) + 2)
    grid = OccupancyGrid.filled(resolution, -resolution * np.ones(3), dims, OCCUPIED)

    def carve(lo, hi):
        a = np.maximum(np.round((np.asarray(lo) - grid.origin) / resolution).astype(int), 1)
        b = np.minimum(np.round((np.asarray(hi) - grid.origin) / resolution).astype(int),
                       np.asarray(dims) - 1)
        grid.states[a[0]:b[0], a[1]:b[1], a[2]:b[2]] = FREE

    carve((0, 0, 0), (room, room, height))
    carve((room + corridor_len, 0, 0), (ex, room, height))
    yc = room / 2
    carve((room, yc - corridor_width / 2, 0),
          (room + corridor_len, yc + corridor_width / 2, height))
    c1 = np.array([room / 2, yc, height / 2])
    c2 = np.array([room + corridor_len + room / 2, yc, height / 2])
    return grid, c1, c2, (room, room + corridor_len)


@pytest.fixture(scope="session")
def small_room():
    return box_room((8.0, 8.0, 3.0))
