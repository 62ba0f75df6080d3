"""Hand-executed backward pass for the 2-2-2 ReLU fixture used in test_relaxation.cpp.

One hidden ReLU layer only, so the bound is a direct sum over hidden neurons;
no code is shared with the C++ propagation.
"""
import numpy as np

W1 = np.array([[1.0, -1.0], [0.5, 2.0]])
b1 = np.array([0.1, -0.2])
W2 = np.array([[1.0, -1.0], [-0.5, 1.5]])
b2 = np.array([0.2, 0.0])
x0 = np.array([0.4, 0.1])
eps = 0.3
c, t = 0, 1

z0 = W1 @ x0 + b1
l = z0 - eps * np.abs(W1).sum(axis=1)
u = z0 + eps * np.abs(W1).sum(axis=1)
m = W2[c] - W2[t]
m0 = b2[c] - b2[t]


def relu_relax(lj, uj, mode):
    if lj >= 0:
        return (1, 0, 1, 0)
    if uj <= 0:
        return (0, 0, 0, 0)
    s = uj / (uj - lj)
    lower = s if mode == "fastlin" else (1.0 if uj >= -lj else 0.0)
    return (s, -s * lj, lower, 0.0)


for mode in ("fastlin", "adaptive"):
    AL = np.zeros(2); dL = m0
    AU = np.zeros(2); dU = m0
    for j in range(2):
        aU, bU, aL, bL = relu_relax(l[j], u[j], mode)
        # lower form: positive coefficient -> lower line
        sl, il = (aL, bL) if m[j] >= 0 else (aU, bU)
        AL += m[j] * sl * W1[j]; dL += m[j] * (sl * b1[j] + il)
        su, iu = (aU, bU) if m[j] > 0 else (aL, bL)
        AU += m[j] * su * W1[j]; dU += m[j] * (su * b1[j] + iu)
    print(mode, "l", l.tolist(), "u", u.tolist())
    print(mode, "AL", repr(AL.tolist()), "dL", repr(dL), "AU", repr(AU.tolist()), "dU", repr(dU))
