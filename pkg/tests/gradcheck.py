"""Central finite-difference oracle for the learner, shared by unit and acceptance tests."""
import numpy as np

from moveseg.learner import AvgPool, Conv, ReLU, _forward, backward, forward, init_net, masked_loss, preprocess

H = 1e-3
REL_TOL = 1e-3
ABS_FLOOR = 1e-6

# small architectures covering every layer type; full-size nets are too big for per-parameter FD
ARCHS = [
    ((Conv(4), ReLU(), Conv(6), ReLU()), 8, 3),
    ((Conv(3, 3, 1), ReLU(), AvgPool(2), Conv(5), ReLU()), 8, 2),
    ((Conv(4), ReLU(), Conv(4, 3, 1), ReLU(), Conv(6), ReLU()), 12, 4),
]


def random_net(arch_index, seed):
    layers, w, s = ARCHS[arch_index]
    net = init_net(layers, w, s, seed)
    rng = np.random.default_rng(seed + 7919)
    for p in net.params:
        if p.ndim == 1:
            p[:] = rng.uniform(-0.2, 0.2, p.shape)
    return net


def relu_pattern(net, image):
    _, _, cache = _forward(net, preprocess(image[None]))
    return [c for c, layer in zip(cache, net.layers) if isinstance(layer, ReLU)]


def same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def fd_check(net, image, target):
    """Worst relative error over every parameter, or None if the stencil crosses a ReLU kink."""
    analytic = backward(net, image, target)
    base = relu_pattern(net, image)
    worst = 0.0
    for p, g in zip(net.params, analytic):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + H
            lp = masked_loss(forward(net, image), target)[0]
            up = relu_pattern(net, image)
            p[idx] = old - H
            lm = masked_loss(forward(net, image), target)[0]
            down = relu_pattern(net, image)
            p[idx] = old
            if not (same_pattern(base, up) and same_pattern(base, down)):
                return None
            fd = (lp - lm) / (2 * H)
            diff = abs(fd - g[idx])
            if diff > ABS_FLOOR:
                worst = max(worst, diff / max(abs(fd), abs(g[idx])))
    return worst


def random_sample(net, rng):
    image = rng.integers(0, 256, (net.w, net.w, 3), dtype=np.uint8)
    target = rng.integers(0, 3, (net.s, net.s)).astype(np.uint8)
    return image, target


def check_net(arch_index, seed, n_samples=3, max_draws=50):
    """Errors for ``n_samples`` differentiable draws plus the number of kink redraws."""
    net = random_net(arch_index, seed)
    rng = np.random.default_rng(seed)
    errors, redraws = [], 0
    while len(errors) < n_samples:
        if redraws > max_draws:
            raise RuntimeError("could not find a sample away from ReLU kinks")
        err = fd_check(net, *random_sample(net, rng))
        if err is None:
            redraws += 1
        else:
            errors.append(err)
    return errors, redraws
