#!/usr/bin/env python3
"""Reference values for the C++ tests.

Everything here is computed independently of the library: the RNG and the
dataset generator are re-derived from the documented formulas, the entropy
minimizer is found with scipy on the dual, the l1 interpolator with HiGHS,
and closed forms are evaluated with mpmath at 50 digits.

Run:  python3 tests/oracle/oracle.py > tests/oracle_values.hpp
"""

import math

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import linprog, root

mp.mp.dps = 50
M64 = (1 << 64) - 1


def mix64(z):
    z &= M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def fnv1a64(s):
    h = 0xCBF29CE484222325
    for c in s.encode():
        h ^= c
        h = (h * 0x100000001B3) & M64
    return h


class Stream:
    def __init__(self, seed, label):
        self.key = mix64(seed ^ mix64(fnv1a64(label)))
        self.k = 0
        self.spare = None

    def next(self):
        self.k += 1
        return mix64(self.key + self.k * 0x9E3779B97F4A7C15)

    def uniform(self):
        return (self.next() >> 11) * 2.0**-53

    def below(self, bound):
        if bound == 1:
            return 0
        mask = (1 << (bound - 1).bit_length()) - 1
        while True:
            x = self.next() & mask
            if x < bound:
                return x

    def normal(self):
        if self.spare is not None:
            v, self.spare = self.spare, None
            return v
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        t = 2.0 * math.pi * u2
        self.spare = r * math.sin(t)
        return r * math.cos(t)


def generate(n, d, s, seed):
    f = Stream(seed, "data.features")
    sup = Stream(seed, "data.support")
    val = Stream(seed, "data.values")
    X = np.array([[f.normal() for _ in range(d)] for _ in range(n)])
    idx = list(range(d))
    for k in range(s):
        p = k + sup.below(d - k)
        idx[k], idx[p] = idx[p], idx[k]
    beta = np.zeros(d)
    for k in range(s):
        v = val.normal()
        while v == 0.0:
            v = val.normal()
        beta[idx[k]] = v
    return X, X @ beta, beta


def entropy_argmin(X, y, alpha):
    """argmin phi_alpha s.t. X beta = y via the dual root X 2a^2 sinh(X^T mu) = y."""
    a2 = 2.0 * np.asarray(alpha) ** 2
    f = lambda mu: X @ (a2 * np.sinh(X.T @ mu)) - y
    jac = lambda mu: (X * (a2 * np.cosh(X.T @ mu))) @ X.T
    sol = root(f, np.zeros(X.shape[0]), jac=jac, method="lm", options={"xtol": 1e-15, "ftol": 1e-15})
    mu = sol.x
    # polish in extended precision
    Xm = mp.matrix(X.tolist())
    ym = mp.matrix(list(y))
    am = [mp.mpf(2) * mp.mpf(a) ** 2 for a in np.broadcast_to(alpha, X.shape[1])]
    mum = mp.matrix(list(mu))
    for _ in range(30):
        z = Xm.T * mum
        b = mp.matrix([am[j] * mp.sinh(z[j]) for j in range(X.shape[1])])
        r = Xm * b - ym
        J = Xm * mp.diag([am[j] * mp.cosh(z[j]) for j in range(X.shape[1])]) * Xm.T
        mum = mum - mp.lu_solve(J, r)
    z = Xm.T * mum
    return [am[j] * mp.sinh(z[j]) for j in range(X.shape[1])]


def phi(beta, alpha):
    return sum(mp.mpf(b) * mp.asinh(mp.mpf(b) / (2 * mp.mpf(a) ** 2)) - mp.sqrt(mp.mpf(b) ** 2 + 4 * mp.mpf(a) ** 4)
               for b, a in zip(beta, alpha)) / 4


def min_l1(X, y):
    n, d = X.shape
    res = linprog(np.ones(2 * d), A_eq=np.hstack([X, -X]), b_eq=y, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0
    return res.x[:d] - res.x[d:], res.fun


def h_depth3(z, ap, am):
    return (mp.mpf(ap) ** -1 - z) ** -3 - (mp.mpf(am) ** -1 + z) ** -3


def h_inv_depth3(v, ap, am):
    lo, hi = -1 / mp.mpf(am), 1 / mp.mpf(ap)
    for _ in range(400):
        mid = (lo + hi) / 2
        if h_depth3(mid, ap, am) < v:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def theory(X, y, alpha, p_fail, beta_l1):
    n = X.shape[0]
    l1 = mp.fsum(abs(mp.mpf(b)) for b in beta_l1)
    amin2 = min(mp.mpf(a) ** 2 for a in alpha)
    an2 = mp.fsum(mp.mpf(a) ** 2 for a in alpha)
    a = max(l1 * mp.log(mp.sqrt(2) * l1 / amin2), an2)
    b = mp.log(4 / mp.mpf(p_fail)) / (2 * a)
    lam = max(np.linalg.eigvalsh(X @ X.T / n))
    H = (X ** 2).sum(axis=0) / n
    return a, b, mp.mpf(lam), H, l1, amin2


out = []


def emit(name, value):
    out.append(f"inline constexpr double {name} = {mp.nstr(mp.mpf(value), 17, strip_zeros=False)};")


def emit_vec(name, values):
    body = ", ".join(mp.nstr(mp.mpf(v), 17, strip_zeros=False) for v in values)
    out.append(f"inline constexpr double {name}[] = {{{body}}};")


def emit_u64(name, values):
    body = ", ".join(f"0x{v:016X}ULL" for v in values)
    out.append(f"inline constexpr std::uint64_t {name}[] = {{{body}}};")


# --- rng -------------------------------------------------------------------
s = Stream(7, "dynamics.batch")
emit_u64("kStreamSeed7Batch", [s.next() for _ in range(4)])
s = Stream(0, "data.features")
emit_u64("kStreamSeed0Features", [s.next() for _ in range(2)])
s = Stream(123, "x")
emit_vec("kBoxMullerSeed123", [s.normal() for _ in range(5)])
s = Stream(99, "b")
emit_u64("kBelow10Seed99", [s.below(10) for _ in range(8)])

# --- dataset ---------------------------------------------------------------
X, y, b0 = generate(3, 6, 2, 42)
emit_vec("kData3x6X", X.ravel())
emit_vec("kData3x6Y", y)
emit_vec("kData3x6Beta", b0)

# --- entropy ---------------------------------------------------------------
emit("kPhiAlpha1Beta2", phi([2], [1]))
emit("kGradPhiAlpha1Beta2", mp.asinh(1) / 4)
emit("kPhiRatio1e6", phi([1, -2], [mp.mpf("1e-6")] * 2) / mp.log(mp.mpf("1e6")))
emit("kPhiRatio1e12", phi([1, -2], [mp.mpf("1e-12")] * 2) / mp.log(mp.mpf("1e12")))
emit("kPhiMixed", phi([1.5, -0.25, 3.0], [0.5, 1.0, 0.1]))

Xs = np.array([[1.0, 2.0]])
ys = np.array([5.0])
emit_vec("kBiasX12Alpha1", entropy_argmin(Xs, ys, 1.0))
X23 = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
y23 = np.array([1.0, 2.0])
emit_vec("kBias2x3", entropy_argmin(X23, y23, np.array([0.5, 1.0, 2.0])))

# generated 10 x 20 instance
Xg, yg, _ = generate(10, 20, 3, 3)
bl1, obj = min_l1(Xg, yg)
emit("kL1Data10x20Obj", obj)
emit_vec("kL1Data10x20", bl1)
emit_vec("kBiasData10x20Alpha01", entropy_argmin(Xg, yg, 0.1))

# --- depth p ---------------------------------------------------------------
emit("kDepth3H05", h_depth3(mp.mpf("0.5"), 1, 1))
emit("kDepth3HAsym", h_depth3(mp.mpf("-0.2"), 0.8, 1.5))  # alpha_+ = 0.8, alpha_- = 1.5
emit("kDepth3HInv2", h_inv_depth3(mp.mpf(2), 0.8, 1.5))
pot = mp.quad(lambda s: h_inv_depth3(s, 1, 1), [0, mp.mpf("0.7")]) + mp.quad(
    lambda s: h_inv_depth3(s, 1, 1), [0, mp.mpf("-0.3")])
emit("kDepth3Potential", pot)

# --- diagnostics -----------------------------------------------------------
alpha = [0.1, 0.1]
a, b, lam, H, l1, amin2 = theory(Xs, ys, alpha, 0.04, [0.0, 2.5])
emit("kCtxA", a)
emit("kCtxB", b)
emit("kCtxLambda", lam)
emit("kCtxStepBound", 1 / (400 * mp.log(100) * lam * a))
emit("kCtxHeuristic", 1 / (lam * l1))
emit("kCtxBoundedness", 18 * a)
vlow = -(l1 / 4) * mp.log(18 * mp.sqrt(2) / amin2 * a)
emit("kCtxVLower", vlow)
gamma = mp.mpf("1e-4")
bt = [mp.mpf("0.5"), mp.mpf(1)]
at = [mp.mpf("0.09"), mp.mpf("0.08")]
xi = [mp.sqrt(bt[j] ** 2 + 4 * at[j] ** 4) for j in range(2)]
bstar = [0, mp.mpf("2.5")]
U = 1 - gamma / 2 * (mp.fsum(H[j] * (xi[j] + abs(bstar[j])) for j in range(2))
                     + 2 * b * lam * (mp.fsum(abs(v) for v in bt) ** 2 + l1 ** 2))
emit("kCtxU", U)
grad = [mp.asinh(bt[j] / (2 * at[j] ** 2)) / 4 for j in range(2)]
V = -phi(bt, at) + mp.fsum(grad[j] * (bt[j] - bstar[j]) for j in range(2)) + gamma * 3 * mp.fsum(
    abs(bstar[j]) * H[j] for j in range(2))
emit("kCtxV", V)  # loss integral 3
ainf = [mp.mpf("0.05"), mp.mpf("0.07")]
W = phi(bstar, ainf) - phi(bt, at) + mp.fsum(grad[j] * (bt[j] - bstar[j]) for j in range(2))
emit("kCtxW", W)
ba = entropy_argmin(Xs, ys, 0.1)
W0 = phi(ba, alpha) - phi([0, 0], alpha)
lg = mp.log(mp.sqrt(2) * l1 / mp.mpf("0.01"))
Mb = 325 * lam * mp.log(100) * max(l1 ** 2 * lg ** 2, mp.mpf("0.01") ** 2 * 4)
emit("kCtxW0", W0)
emit("kCtxM", Mb)
emit("kCtxLowerGamma1e4", (W0 / 4) / (1 + gamma * Mb / W0))
emit("kCtxLowerSmall", l1 * mp.log(l1 / mp.mpf("0.01")) / 8)
emit("kCtxUpper", -vlow + 2 * a)
emit("kCtxExpBound1", mp.exp(-H[1] / (1600 * mp.log(100) * lam)))
emit("kCtxEventA", a + 2 * b * gamma * lam * mp.mpf("0.75"))  # weighted integral 0.75

emit("kStepBoundSpec", 1 / (400 * mp.log(100) * mp.log(100 * mp.sqrt(2))))
emit("kBoundednessSpec", 18 * mp.log(100 * mp.sqrt(2)))
emit("kAlphaTSpec", mp.mpf("0.1") * mp.exp(mp.mpf("-0.2")))
emit("kDepthPAlphaEffSpec", 1 / mp.mpf("1.2"))

# Entropy gap: phi(b) - phi(0) - (1/4) b ln(b / 2a^2) = (a^2/2) g(x), x = b / 2a^2, changes sign at the root of g.
emit("kEntropyGapCrossover", mp.findroot(lambda x: x * mp.asinh(x) - mp.sqrt(x * x + 1) + 1 - x * mp.log(x), 3))

# Lambert: largest root of x = 5 + ln x
emit("kLambertFixedPoint", mp.findroot(lambda x: x - 5 - mp.log(x), 7))

# --- gradient flow, 1-d ----------------------------------------------------
# X = [[1]], y = 1, alpha = 0.5: w_+' = -(beta - 1) w_+, w_-' = (beta - 1) w_-.
def rhs(t, w):
    r = w[0] ** 2 - w[1] ** 2 - 1.0
    return [-r * w[0], r * w[1]]


sol = solve_ivp(rhs, (0, 10), [0.5, 0.5], t_eval=[1, 2, 5, 10], rtol=1e-12, atol=1e-14, method="DOP853")
emit_vec("kGF1dBeta", sol.y[0] ** 2 - sol.y[1] ** 2)

print("#pragma once")
print()
print("// Generated by tests/oracle/oracle.py; do not edit.")
print()
print("#include <cstdint>")
print()
print("namespace oracle {")
print()
for line in out:
    print(line)
print()
print("}  // namespace oracle")
