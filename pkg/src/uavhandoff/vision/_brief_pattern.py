"""Fixed BRIEF sampling pattern: 256 point pairs (u1, v1, u2, v2) in
[-13, 13]^2, drawn once from an isotropic Gaussian (sigma = 26/5) with a
fixed seed and frozen here so descriptors never depend on RNG versions."""

PATTERN = (
    (-4, -2, -5, -3), (3, 5, 7, -6), (1, 3, 1, -10), (5, 1, 1, -1),
    (-7, -1, 2, 0), (0, -10, 1, -2), (3, -1, 0, -3), (-7, 1, -9, 2),
    (-6, -4, -1, 7), (-5, -3, -7, 0), (13, 1, 5, -2), (1, -6, 6, 5),
    (-2, -2, 0, -2), (-2, -2, 3, -5), (3, 11, -4, -4), (5, 1, 0, 9),
    (-2, -4, -1, -4), (-3, 3, -1, 11), (2, -3, 4, -5), (-6, -5, 1, 1),
    (-1, 2, 13, 2), (-3, -1, 1, -3), (1, 9, 5, -12), (-2, -8, 0, -1),
    (1, 5, 13, -6), (0, 3, 1, -13), (-4, 3, -9, 1), (4, -2, 4, 1),
    (13, 5, -5, -3), (6, -4, 3, 2), (2, -6, 6, 3), (-6, 3, -4, -10),
    (-4, 4, -3, -4), (-5, -5, -4, -5), (1, 5, 4, 0), (0, -6, -8, -3),
    (0, 9, -3, 1), (9, 5, 4, 4), (3, -1, -2, -3), (6, 8, 5, 4),
    (0, 1, -5, 6), (6, 1, 1, -5), (-9, 0, 8, -5), (-5, -2, 8, 4),
    (4, 13, 0, -5), (-5, -4, -6, 3), (2, -5, 4, -1), (-3, 5, 1, 0),
    (4, -7, 0, -6), (2, 2, 10, 2), (1, 6, 7, 5), (5, -6, -3, 5),
    (-2, 4, 1, -4), (-4, -3, -5, 6), (0, -1, -3, -1), (4, -7, 4, 1),
    (3, -3, -6, 7), (-5, -2, -2, -8), (3, 4, 3, 1), (3, 2, 4, -1),
    (7, 5, 0, -2), (1, 1, -1, 4), (-3, 7, 6, -5), (3, 1, 1, -7),
    (1, 10, -3, 2), (5, 0, -5, -6), (1, 8, -2, -2), (12, -2, -1, 5),
    (8, -2, -2, 6), (4, -7, 2, 8), (-4, 3, 9, 2), (-9, 11, -1, 2),
    (5, 3, 0, -1), (-1, 3, 1, 0), (-3, 3, -4, 0), (-7, -7, -3, 0),
    (10, 2, -5, -3), (3, 9, 2, -4), (6, 3, 9, -7), (6, 3, -2, 2),
    (-6, -2, 4, 11), (5, 6, 3, -8), (-10, 2, 3, -12), (0, 0, -1, 5),
    (-4, -3, 4, 9), (-1, -6, 1, 1), (-4, -1, -1, 2), (-7, -1, 0, 5),
    (8, 2, -12, 11), (7, 1, 7, -6), (-1, 1, 0, -5), (-5, -2, -3, -6),
    (-1, -3, 1, 10), (-1, -6, 0, -3), (2, 4, -5, -5), (5, -6, 3, 0),
    (5, 1, 5, -6), (-2, -3, 2, -7), (3, -4, -2, 3), (3, -10, -3, -4),
    (3, 0, -1, 0), (4, -5, -3, -3), (-4, -10, 3, 5), (0, 2, 3, -3),
    (-4, -1, -6, 2), (-7, 1, -4, -6), (3, -2, 1, 7), (-11, 3, 0, -3),
    (-4, 4, 1, 5), (0, 4, -3, -10), (3, 4, -2, 4), (1, -6, -10, 3),
    (3, 3, 10, 6), (-2, -7, 5, -11), (1, 8, 7, -2), (11, -3, 4, 1),
    (-3, -2, -4, 0), (4, 6, -3, 6), (-2, 8, 8, -4), (-3, 2, -6, 2),
    (-8, -5, 0, 11), (4, 1, 1, -6), (6, 0, 0, -8), (-11, 1, 7, -8),
    (3, -12, 3, -11), (-5, -1, 1, 2), (-2, 8, 5, 3), (4, -3, 4, 1),
    (-6, -1, -2, 1), (5, -10, 4, -3), (-2, -8, 0, 5), (-10, -1, 2, 9),
    (-4, 0, 1, -2), (-4, 0, -7, -6), (3, -5, 0, 7), (-4, -1, 1, 4),
    (-7, 3, 0, -1), (-6, 6, 2, 5), (-1, -11, 10, -2), (3, 6, 2, -3),
    (-1, 1, -3, -9), (5, 1, -5, -2), (7, 1, 0, -5), (-13, -3, 5, -2),
    (3, 8, 7, -5), (6, 11, -6, 0), (3, 9, 3, 5), (1, -2, 7, -4),
    (5, -7, -4, 3), (5, -5, -4, 5), (-1, -1, 10, -1), (6, 3, 0, -3),
    (-4, 3, 2, 0), (-4, -12, -4, 7), (-3, 0, -4, -4), (0, -7, -6, 3),
    (-1, -3, 7, -3), (-6, -8, -5, -2), (3, 5, 6, 1), (-4, 2, 1, -1),
    (-7, 0, -9, -2), (1, -5, 0, 0), (0, -13, 2, -7), (3, -6, -6, -1),
    (8, 3, 1, 5), (-2, 0, 3, 7), (0, -6, 11, 7), (0, 8, 9, -3),
    (-4, 5, -6, 4), (5, -7, 3, 1), (-5, -2, -2, 2), (-4, 13, -1, 1),
    (4, 7, 1, 0), (-4, 1, 3, 1), (13, -12, 4, 1), (-3, 10, -1, -1),
    (-3, 1, -4, 4), (-10, 7, 6, -9), (6, -2, 3, -4), (-3, -8, 7, 7),
    (1, 9, 6, -4), (-1, 5, 4, -6), (5, 1, -2, -3), (1, 8, -5, 0),
    (-3, 6, 0, -3), (-4, 7, -5, 11), (5, -2, 5, 4), (6, 3, -1, -1),
    (-3, -3, 1, 0), (9, -4, -3, 0), (-3, 3, 4, -3), (1, -13, 7, 4),
    (10, -2, -3, 6), (-5, 1, -1, -3), (8, 7, 3, 3), (-2, 4, -8, -5),
    (6, 2, 4, 4), (0, -2, 2, -8), (-5, -2, 5, 4), (1, 5, -4, 5),
    (-4, 1, 2, 1), (-7, -7, -4, -3), (2, -2, -3, 2), (0, 1, 4, 2),
    (2, -6, -6, -2), (2, 6, 7, 4), (13, 2, 3, -4), (-1, 5, 6, -2),
    (-4, 1, -6, -1), (-1, 1, -4, 6), (9, -13, 0, -8), (3, 0, 5, -10),
    (1, -4, 4, 0), (8, 7, -3, 8), (-13, 3, 2, 0), (7, -1, 8, -6),
    (2, 4, 4, -2), (-13, -4, 3, -3), (2, -8, -1, -3), (-4, 4, 1, -4),
    (12, -1, 11, -4), (-2, -6, -5, -1), (5, -1, -5, -5), (3, 6, -5, 8),
    (0, -1, -1, 1), (6, -3, -6, -3), (-7, -11, 4, 0), (-7, 8, -3, -5),
    (2, -9, -1, 0), (9, -4, 5, 1), (1, -6, 1, -1), (-5, 2, -2, -4),
    (-2, 4, 6, -2), (2, 7, -10, 2), (1, -1, -4, 1), (2, 3, 6, -1),
    (8, 0, 2, 4), (4, -5, 0, -2), (13, 4, 1, 3), (5, -6, 0, -4),
    (-7, -1, 5, 1), (-1, -4, 7, 5), (-7, 7, 2, 13), (5, -8, -2, -5),
    (-3, 1, 2, 0), (-7, 10, 8, 1), (-2, -6, 6, 3), (-8, -2, -6, 6),
    (1, 3, 8, -9), (-2, -2, 5, 11), (2, -12, 7, 0), (-1, -4, 2, 10),
    (-13, 3, -5, 0), (1, -2, 0, 4), (2, -6, 0, -3), (-5, 3, -10, -3),
)
