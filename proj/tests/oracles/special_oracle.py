"""High-precision reference values frozen into the C++ tests.

Run with `python3 tests/oracles/special_oracle.py`; values are printed with
17 significant digits and copied into the doctest suites.
"""
import mpmath as mp

mp.mp.dps = 50


def ale(a):
    S = sum(a)
    return sum(ai / S * (mp.digamma(S + 1) - mp.digamma(ai + 1)) for ai in a)


def epi(a):
    S = sum(a)
    return sum(mp.loggamma(ai) - mp.loggamma(S) - (ai - 1) * (mp.digamma(ai) - mp.digamma(S)) for ai in a)


def kl_uniform(at):
    n = len(at)
    St = sum(at)
    return (mp.loggamma(St) - mp.loggamma(n) - sum(mp.loggamma(x) for x in at)
            + sum((x - 1) * (mp.digamma(x) - mp.digamma(St)) for x in at))


def evid(a, y, lam):
    S = sum(a)
    data = sum(yi * (mp.digamma(S) - mp.digamma(ai)) for ai, yi in zip(a, y))
    at = [yi + (1 - yi) * ai for ai, yi in zip(a, y)]
    return data + lam * kl_uniform(at)


def row_softmax_kl(mc, ma, tau):
    B = len(mc)
    tot = 0
    for r in range(B):
        pc = [mp.e ** (v / tau) for v in mc[r]]
        zc = sum(pc)
        pc = [v / zc for v in pc]
        pa = [mp.e ** (v / tau) for v in ma[r]]
        za = sum(pa)
        pa = [v / za for v in pa]
        tot += sum(p * (mp.log(p) - mp.log(q)) for p, q in zip(pc, pa))
    return tau ** 2 * tot / B


def f(x):
    return mp.nstr(x, 17)


grid = [1e-3, 0.1, 0.5, 1, 1.4616321449683623, 2, 3.5, 7.25, 10, 25.5, 101, 1e3, 1e5]
print("digamma grid")
for x in grid:
    print(x, f(mp.digamma(x)), f(mp.psi(1, x)), f(mp.loggamma(x)))
print("aleatoric (101,1)", f(ale([101, 1])))
print("aleatoric (1,1)", f(ale([1, 1])))
print("epistemic (2,2)", f(epi([2, 2])))
for k in [1, 2, 4, 8]:
    print("epistemic", k, f(epi([k, k])))
print("evid (1,5) y0 lam1", f(evid([1, 5], [1, 0], 1)))
print("evid (5,1) y0 lam1", f(evid([5, 1], [1, 0], 1)))
print("kdg tau1", f(mp.mpf('0.7') * mp.log(mp.mpf('0.7') / mp.mpf('0.5')) + mp.mpf('0.3') * mp.log(mp.mpf('0.3') / mp.mpf('0.5'))))


def tprobs(s, tau):
    e = [mp.e ** (v / tau) for v in s]
    z = sum(e)
    return [v / z for v in e]


pg = tprobs([mp.log(mp.mpf('0.7')), mp.log(mp.mpf('0.3'))], 2)
pa = tprobs([mp.log(mp.mpf('0.5')), mp.log(mp.mpf('0.5'))], 2)
print("kdg tau2 on tempered (0.7,0.3) vs uniform", f(4 * sum(p * (mp.log(p) - mp.log(q)) for p, q in zip(pg, pa))))
print("kdc B2", f(row_softmax_kl([[0, 25], [25, 0]], [[0, 16], [16, 0]], 5)))
print("softmax (2,0)/10", f(tprobs([2, 0], 10)[0]))
