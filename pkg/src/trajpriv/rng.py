"""Portable seedable generator for sampling releases.

xorshift64* (Vigna): state ^= state >> 12; state ^= state << 25;
state ^= state >> 27; output = state * 0x2545F4914F6CDD1D mod 2**64.
The seed is expanded with one splitmix64 step so that any integer
(including 0) gives a valid non-zero state. Doubles take the top 53 bits.
"""

MASK = (1 << 64) - 1
MULT = 0x2545F4914F6CDD1D


def splitmix64(x):
    z = (x + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed=0):
        self.state = splitmix64(int(seed) & MASK) or 1

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK
        x ^= x >> 27
        self.state = x
        return (x * MULT) & MASK

    def random(self):
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def choice(self, items, probs):
        """Inverse-CDF draw; the last positive-probability item absorbs rounding."""
        u = self.random()
        acc = 0.0
        last = None
        for item, p in zip(items, probs):
            if p <= 0:
                continue
            acc += p
            last = item
            if u < acc:
                return item
        if last is None:
            raise ValueError("no item has positive probability")
        return last
