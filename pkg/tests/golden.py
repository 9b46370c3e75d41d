"""Worked-example values used by the golden tests."""
import numpy as np

# event-to-failure map from the GA walkthrough (rows F_1..F_6, columns E_1..E_6);
# F_1 and F_4 are identical, so catalogs built from it drop F_4
GA_EXAMPLE = np.array([
    [1, 1, 0, 0, 1, 1],
    [0, 1, 0, 1, 1, 0],
    [1, 0, 1, 1, 1, 0],
    [1, 1, 0, 0, 1, 1],
    [1, 1, 1, 0, 1, 1],
    [1, 0, 1, 0, 1, 0],
])
CROSSOVER_F2_F5 = [0, 1, 0, 0, 1, 1]
MUTATED_E5 = [0, 1, 0, 0, 0, 1]

# prioritization walkthrough: 6 failures over 10 events
PRIORITY_CATALOG = np.array([
    [1, 1, 0, 0, 1, 1, 1, 1, 1, 0],
    [0, 0, 1, 1, 1, 1, 1, 0, 0, 0],
    [1, 1, 1, 1, 1, 1, 0, 1, 1, 0],
    [0, 1, 0, 0, 1, 1, 1, 0, 1, 0],
    [0, 1, 1, 0, 1, 1, 1, 1, 0, 0],
    [1, 1, 0, 0, 0, 0, 1, 1, 1, 0],
])
PRIORITY_INPUT = [1, 1, 1, 1, 1, 1, 0, 1, 1, 0]

SOFTMAX = np.array([4.1925264e-4, 3.8881362e-3, 9.9117082e-1, 3.8915547e-3, 6.1742624e-4, 1.2774362e-5])
SOFTMAX_FILTERED = np.array([0.49341640, 0.49688527, 0.49817710, 0.49688867, 0.49361458, 0.49300992])

PAIRWISE = [
    ["1", "1/2", "3/5", "5/6", "3/7", "3/8"],
    ["2/1", "1", "2/3", "4/5", "3/4", "2/9"],
    ["5/3", "3/2", "1", "5/6", "10/11", "11/15"],
    ["6/5", "5/4", "6/5", "1", "13/15", "15/17"],
    ["7/3", "4/3", "11/10", "15/13", "1", "17/19"],
    ["8/3", "9/2", "15/11", "17/15", "19/17", "1"],
]
WEIGHTS = np.array([0.09195743, 0.12052826, 0.16204895, 0.16515564, 0.18970770, 0.27060201])
WEIGHTS_FILTERED = np.array([0.13239743, 0.16096826, 0.20248895, 0.20559564, 0.23014770, 0.23016201])
COMBINED = np.array([0.06532706, 0.07998276, 0.10087536, 0.10215814, 0.11360426, 0.11347216])


def pairwise_matrix():
    from fractions import Fraction

    return np.array([[float(Fraction(v)) for v in row] for row in PAIRWISE])
