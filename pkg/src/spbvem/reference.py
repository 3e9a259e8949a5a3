"""Published reference errors for the manufactured-solution studies.

Keyed by mesh family and order k; each row is (N, E_u, E_p, E_psi, itr)
with h = 1/N. Used for the order-of-magnitude sanity check and the
comparison printed by ``scripts/run_tables.py``.
"""

REFERENCE = {
    "hex": {
        1: [(5, 1.311720e-02, 2.449411e-02, 8.705857e-03, 7),
            (10, 6.428537e-03, 1.221762e-02, 4.577561e-03, 7),
            (20, 3.232437e-03, 6.103906e-03, 2.345729e-03, 7),
            (40, 1.623956e-03, 3.052641e-03, 1.187052e-03, 7),
            (80, 8.136887e-04, 1.527061e-03, 5.970562e-04, 8)],
        2: [(5, 2.681120e-02, 4.503502e-02, 8.103336e-04, 7),
            (10, 6.049456e-03, 1.181225e-02, 2.221737e-04, 7),
            (20, 1.533453e-03, 3.019989e-03, 5.772350e-05, 7),
            (40, 3.893513e-04, 7.607732e-04, 1.468018e-05, 7),
            (80, 9.810407e-05, 1.910031e-04, 3.699626e-06, 8)],
    },
    "nonconvex": {
        1: [(5, 2.002868e-02, 3.248449e-02, 1.051645e-02, 7),
            (10, 8.161245e-03, 1.427017e-02, 5.393170e-03, 7),
            (20, 3.621136e-03, 6.640047e-03, 2.730142e-03, 7),
            (40, 1.722770e-03, 3.201921e-03, 1.373356e-03, 7),
            (80, 8.462576e-04, 1.527061e-03, 6.887283e-04, 8)],
        2: [(5, 1.434075e-02, 2.543417e-02, 1.241960e-03, 7),
            (10, 3.361010e-03, 6.199488e-03, 3.220434e-04, 7),
            (20, 8.330459e-04, 1.548879e-03, 8.184041e-05, 7),
            (40, 2.077321e-04, 3.889136e-04, 2.061589e-05, 7),
            (80, 5.180141e-05, 9.781639e-05, 5.172670e-06, 8)],
    },
    "composite": {
        1: [(5, 1.700467e-02, 3.324558e-02, 7.411002e-03, 7),
            (10, 6.418063e-03, 8.366519e-03, 3.720487e-03, 7),
            (20, 2.918559e-03, 3.066089e-03, 1.861992e-03, 7),
            (40, 1.411469e-03, 1.542844e-03, 9.312391e-04, 7),
            (80, 6.982803e-04, 7.846744e-04, 4.656609e-04, 8)],
        2: [(5, 1.853717e-02, 3.539204e-02, 6.973699e-04, 7),
            (10, 4.086304e-03, 7.855160e-03, 1.755867e-04, 7),
            (20, 9.677780e-04, 1.888270e-03, 4.397411e-05, 7),
            (40, 2.349881e-04, 4.751719e-04, 1.099864e-05, 7),
            (80, 5.806576e-05, 1.270720e-04, 2.750029e-06, 8)],
    },
    "lshape-voronoi": {
        1: [(4, 5.412799e-03, 1.761315e-02, 1.240271e-02, 5),
            (8, 2.089460e-03, 4.781077e-03, 6.441351e-03, 6),
            (16, 7.826530e-04, 1.341547e-03, 3.300835e-03, 6),
            (32, 3.606618e-04, 5.436234e-04, 1.474711e-03, 6),
            (64, 1.644670e-04, 2.656548e-04, 7.382761e-04, 6)],
        2: [(4, 9.673890e-03, 2.603108e-02, 1.745202e-03, 5),
            (8, 1.324590e-03, 6.156831e-03, 4.313425e-04, 6),
            (16, 2.939265e-04, 1.583476e-03, 1.094255e-04, 6),
            (32, 5.019257e-05, 3.452908e-04, 2.263689e-05, 6),
            (64, 1.248291e-05, 9.124393e-05, 5.360583e-06, 7)],
    },
}

# reference convergence rate for E_u between the two finest rows of the hex k=1 study
REFERENCE_RATE_HEX_K1_EU = 0.997


def reference_row(family: str, k: int, N: int):
    for row in REFERENCE.get(family, {}).get(k, []):
        if row[0] == N:
            return row
    return None
