"""A tour of the tape-based autodiff engine.

Tensors wrap immutable float64 arrays. Operations executed inside a Tape
context are recorded; backward() replays the tape in reverse and returns
a gradient array for every watched leaf. The same engine drives the whole
segmentation network, so this file is the smallest end-to-end example of
how training works.
"""

import numpy as np

from divseg.gradcheck import numeric_grad
from divseg.tensor import Tape, Tensor, backward, conv3d, log, mul, reduce_sum, softmax


def scalar_chain():
    # d/dx of x * log(x) at x = 2 is log(2) + 1
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        tape.watch(x)
        y = reduce_sum(mul(x, log(x)))
    grad = backward(tape, y)[x]
    print(f"d(x log x)/dx at 2:   {grad[0]:.6f}  (closed form {np.log(2.0) + 1.0:.6f})")


def softmax_jacobian():
    # the softmax+sum-of-squares gradient against central finite differences
    logits = np.array([0.2, -1.3, 0.8, 0.1])

    def loss_fn(v):
        t = Tensor(v, requires_grad=True)
        with Tape() as tape:
            tape.watch(t)
            p = softmax(t, axis=0)
            loss = reduce_sum(mul(p, p))
        return loss, backward(tape, loss)[t]

    loss, grad = loss_fn(logits)
    numeric = numeric_grad(lambda v: loss_fn(v)[0].item(), logits)
    worst = np.max(np.abs(grad - numeric) / (np.abs(numeric) + 1e-8))
    print(f"softmax-loss value:   {loss.item():.6f}")
    print(f"analytic vs numeric:  max rel err {worst:.2e}")


def conv_gradients():
    # gradients flow through the 3d convolution into both input and kernel
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 4, 4, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3, 3)) * 0.1, requires_grad=True)
    with Tape() as tape:
        tape.watch(x)
        tape.watch(w)
        y = conv3d(x, w, padding=1)
        loss = reduce_sum(mul(y, y))
    grads = backward(tape, loss)
    print(f"conv output shape:    {y.shape}")
    print(f"input grad shape:     {grads[x].shape}, kernel grad shape: {grads[w].shape}")
    print(f"kernel grad norm:     {np.linalg.norm(grads[w]):.4f}")


def main():
    scalar_chain()
    softmax_jacobian()
    conv_gradients()


if __name__ == "__main__":
    main()
