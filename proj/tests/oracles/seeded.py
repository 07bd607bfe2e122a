"""splitmix64 + Box-Muller generator matching tests/test_util.hpp bit for bit."""
import math

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        return ((self.next() >> 11) + 0.5) * 2.0 ** -53

    def gaussian(self):
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def white_noise(seed, n):
    r = SplitMix64(seed)
    return [r.gaussian() for _ in range(n)]


def ar1(seed, n, phi):
    r = SplitMix64(seed)
    x = [r.gaussian()]
    for _ in range(n - 1):
        x.append(phi * x[-1] + r.gaussian())
    return x


def var1_diag(seed, n, a, b):
    r = SplitMix64(seed)
    rows = [[r.gaussian(), r.gaussian()]]
    for _ in range(n - 1):
        p = rows[-1]
        rows.append([a * p[0] + r.gaussian(), b * p[1] + r.gaussian()])
    return rows


def gaussian_rows(seed, n, dim):
    r = SplitMix64(seed)
    return [[r.gaussian() for _ in range(dim)] for _ in range(n)]
