import numpy as np

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31)

DEFAULT_SEED = 42
FACE_MARGIN = 1e-3

# residuals strictly inside this band cannot be classified either way
DEAD_BAND = (1e-7, 1e-4)

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


def radical_inverse(index, base):
    """
    Van der Corput radical inverse of a non-negative integer in the given base
    """
    result, fraction = 0.0, 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * fraction
        fraction /= base
    return result


def halton(count, dim, start=1):
    """
    First count points of the Halton sequence in the unit cube
    """
    if dim > len(PRIMES):
        raise ValueError("Halton sampling supports at most %d dimensions" % len(PRIMES))
    return np.array([[radical_inverse(i, PRIMES[d]) for d in range(dim)] for i in range(start, start + count)])


def sample_points(domain, count, seed=DEFAULT_SEED, periodic=(), margin=FACE_MARGIN):
    """
    Deterministic low-discrepancy sample of a coordinate box. The Halton sequence is shifted by a random offset drawn
    from the seed, and points within margin of a non-periodic face are rejected.
    """
    domain = np.asarray(domain, dtype=float)
    dim = len(domain)
    shift = np.random.default_rng(seed).random(dim)
    lo, hi = domain[:, 0], domain[:, 1]

    points = []
    index = 1
    while len(points) < count:
        batch = np.mod(halton(count, dim, start=index) + shift, 1.0)
        index += count
        for unit in batch:
            coords = lo + unit * (hi - lo)
            near_face = [
                axis
                for axis in range(dim)
                if axis not in periodic and min(coords[axis] - lo[axis], hi[axis] - coords[axis]) < margin
            ]
            if not near_face:
                points.append(coords)
            if len(points) == count:
                break

    return np.array(points).reshape(count, dim)


def classify(value, band=DEAD_BAND):
    """
    Classifies a residual as small (pass), large (fail) or inside the dead band (inconclusive)
    """
    if value <= band[0]:
        return PASS
    elif value >= band[1]:
        return FAIL
    return INCONCLUSIVE


def consistent(*verdicts):
    """
    Whether a set of dead-band verdicts contains no pass alongside a fail
    """
    return not (PASS in verdicts and FAIL in verdicts)


def verdict(value, tolerance):
    return PASS if value <= tolerance else FAIL


def max_abs(array):
    array = np.asarray(array, dtype=float)
    return float(np.max(np.abs(array))) if array.size else 0.0
