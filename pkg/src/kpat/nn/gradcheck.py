import numpy as np


def grad_check(f, params, eps=1e-4, n_samples=20, seed=0):
    """Max relative error between autodiff and central differences.

    ``f`` rebuilds the scalar loss from the current parameter values; params
    must be float64.  Up to ``n_samples`` coordinates are sampled per
    parameter.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError("grad_check requires float64 parameters")
        p.grad = None
    f().backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        ad = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(n, n_samples), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            hi = float(f().data)
            flat[c] = orig - eps
            lo = float(f().data)
            flat[c] = orig
            fd = (hi - lo) / (2 * eps)
            g = float(ad.reshape(-1)[c])
            err = abs(g - fd) / max(1e-8, abs(g) + abs(fd))
            worst = max(worst, err)
    return worst
