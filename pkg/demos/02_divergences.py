"""Holder pseudo-divergence next to the classic f-divergences.

The Holder divergence compares the inner product of two distributions
against the product of their conjugate Holder norms. At alpha = 2 it is
the Cauchy-Schwarz divergence; away from 2 it stops being a proper
divergence: D(p:p) can be strictly positive. That asymmetry is a feature
for distillation, where a soft notion of agreement is wanted.
"""

import numpy as np

from divseg.divergences import DIVERGENCE_KINDS, HolderExponents, f_divergence, hpd


def show_families():
    p = np.array([0.5, 0.3, 0.2])
    q = np.array([0.2, 0.5, 0.3])
    print(f"p = {p}, q = {q}")
    for kind in DIVERGENCE_KINDS:
        if kind == "holder":
            value = hpd(p, q, HolderExponents(1.1)).item()
            print(f"  {kind:<18} {value:.6f}   (alpha = 1.1)")
        else:
            print(f"  {kind:<18} {f_divergence(kind, p, q).item():.6f}")


def pseudo_divergence():
    p = np.array([0.8, 0.2])
    print("\nself-divergence D(p:p) as alpha varies (p = [0.8, 0.2]):")
    for alpha in (1.05, 1.1, 1.5, 2.0, 3.0, 5.0):
        value = hpd(p, p, HolderExponents(alpha)).item()
        print(f"  alpha {alpha:>4}: {value:.6f}")
    print("only alpha = 2 gives zero: the Cauchy-Schwarz case")


def conjugates():
    print("\nconjugate exponents 1/alpha + 1/beta = 1:")
    for alpha in (1.05, 1.1, 1.2, 2.0, 5.0):
        e = HolderExponents(alpha)
        print(f"  alpha {alpha:>4} -> beta {e.beta:8.3f}")


def main():
    show_families()
    pseudo_divergence()
    conjugates()


if __name__ == "__main__":
    main()
