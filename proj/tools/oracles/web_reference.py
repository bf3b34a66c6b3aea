"""Reference values for the unit tests, computed with PyTorch in float64.

Prints C++ initialiser lists; the tests embed the output verbatim.
"""
import math

import torch

torch.set_default_dtype(torch.float64)

Q, I, O, T, N = 4, 2, 1, 3, 2
ALPHA = 0.01


def weight():
    w = torch.empty(Q, Q, Q)
    for i in range(Q):
        for j in range(Q):
            for k in range(Q):
                w[i, j, k] = 0.6 * math.sin(1.0 + i * Q * Q + j * Q + k)
    return w


def bias():
    b = torch.empty(Q, Q)
    for i in range(Q):
        for j in range(Q):
            b[i, j] = 0.1 * math.cos(i * Q + j)
    return b


def inputs():
    x = torch.empty(N, I)
    for n in range(N):
        for k in range(I):
            x[n, k] = 0.5 * math.sin(n * I + k + 0.5)
    return x


def forward(w, b, x):
    s = torch.zeros(N, Q, Q)
    history = []
    for _ in range(T):
        s = s.clone()
        s[:, :, :I] += x[:, None, :]
        rows = []
        for i in range(Q):
            z = s[:, :, i] @ w[i].T + b[i]  # (N,Q)
            rows.append(torch.nn.functional.leaky_relu(z, ALPHA))
        s = torch.stack(rows, dim=1)
        history.append(s[:, :, Q - O:].mean(dim=1))
    return torch.stack(history, dim=1)  # (N,T,O)


def fmt(values):
    return "{" + ", ".join(f"{v:.17g}" for v in values) + "}"


w = weight().requires_grad_()
b = bias().requires_grad_()
y = forward(w, b, inputs())
target = torch.tensor([[1.0], [0.0]])
loss = torch.nn.functional.binary_cross_entropy_with_logits(y[:, -1, :], target)
loss.backward()
print("history =", fmt(y.detach().flatten().tolist()))
print("loss =", f"{loss.item():.17g}")
print("grad_w =", fmt(w.grad.flatten().tolist()))
print("grad_b =", fmt(b.grad.flatten().tolist()))

p = torch.tensor([1.0, -0.5, 2.0], requires_grad=True)
opt = torch.optim.AdamW([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
for g in ([1.0, 0.2, -3.0], [-0.5, 0.2, 1.0], [0.25, -4.0, 0.0]):
    p.grad = torch.tensor(g)
    opt.step()
print("adamw_trajectory =", fmt(p.detach().tolist()))

x = torch.tensor([math.sin(0.3 * v) for v in range(50)]).reshape(1, 2, 5, 5)
k = torch.tensor([math.cos(0.7 * v) for v in range(54)]).reshape(3, 2, 3, 3)
c = torch.tensor([0.1, -0.2, 0.3])
print("conv_stride2 =", fmt(torch.nn.functional.conv2d(x, k, c, stride=2).flatten().tolist()))

logits = torch.tensor([[math.sin(v) * 3 for v in range(10)], [math.cos(v) * 2 for v in range(10)]])
print("cross_entropy =", f"{torch.nn.functional.cross_entropy(logits, torch.tensor([4, 9])).item():.17g}")
