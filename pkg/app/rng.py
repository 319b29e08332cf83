"""Deterministische SplitMix64 random generator.

De recurrence (alles modulo 2^64):

    state = state + 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Een float in [0, 1) is (out >> 11) * 2^-53. Elke implementatie die dit volgt
levert bit-voor-bit dezelfde reeks, ongeacht platform.
"""
import math

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_UNIT = 1.0 / (1 << 53)


def mix64(z):
    """De SplitMix64 finalizer op een 64-bit waarde."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def advance(state):
    """Eén stap: geeft (nieuwe state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    return state, mix64(state)


def to_unit(out):
    """Zet een 64-bit output om naar een float in [0, 1)."""
    return (out >> 11) * _UNIT


def mix_seed(*parts):
    """Leid een onafhankelijke sub-seed af uit een reeks gehele getallen."""
    h = 0
    for part in parts:
        h = mix64((h ^ (int(part) & MASK64)) + GOLDEN_GAMMA)
    return h


class SplitMix64:
    """Seeded generator rond de pure advance() functie."""

    def __init__(self, seed=0):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state, out = advance(self.state)
        return out

    def random(self):
        return to_unit(self.next_u64())

    def below(self, n):
        """Uniform geheel getal in [0, n) zonder modulo-bias (rejection)."""
        if n <= 0:
            raise ValueError("n moet positief zijn")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            out = self.next_u64()
            if out < limit:
                return out % n

    def shuffle(self, items):
        """Fisher-Yates shuffle in place; geeft de lijst terug."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def normal(self):
        """Standaardnormale trekking via Box-Muller."""
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
