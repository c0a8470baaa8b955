import math


def mean(values):
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


def spread(values):
    m = mean(values)
    return max(abs(v - m) for v in values)
