"""Link budget walkthrough: fiber capacity vs length, and what distillation costs.

Prints two tables. The first shows how raw EPR capacity falls with fiber
length (exponential in dB loss). The second shows the base-pair overhead
g of distilling a 0.8-fidelity link up to a range of targets, with the
round-by-round success probabilities behind it.
"""

from qvpn.topology import link_capacity
from qvpn.quantum_math import purification_overhead, swap_chain_fidelity, NoiseParams

ALPHA = 0.2  # photon pair source efficiency; base fidelity is 1 - ALPHA
BETA = 0.2  # fiber attenuation, dB/km
T = 1e-6  # repetition time, seconds


def main():
    print("fiber capacity (single channel, alpha=0.2, beta=0.2 dB/km, T=1 us)")
    print(f"{'length_km':>10} {'capacity_eprps':>16}")
    for length in (0, 10, 25, 50, 100, 150, 200):
        cap = link_capacity(length, ALPHA, BETA, T)
        print(f"{length:>10} {cap:>16.1f}")

    print()
    print("distillation overhead from F=0.8 (pairs consumed per delivered pair)")
    print(f"{'target':>8} {'rounds':>7} {'overhead':>12} {'achieved':>10}")
    for target in (0.85, 0.9, 0.95, 0.99, 0.998):
        r = purification_overhead(0.8, target)
        print(f"{target:>8} {r.rounds:>7} {r.overhead:>12.2f} {r.achieved_fidelity:>10.6f}")

    print()
    print("swap chains eat fidelity: F=0.95 links, eta=0.99 measurements")
    noise = NoiseParams(measurement_fidelity=0.99)
    for n in (1, 2, 3, 4, 6):
        f = swap_chain_fidelity(0.95, n, noise)
        print(f"  {n} links -> end-to-end fidelity {f:.4f}")
    print()
    print("the trade: distill links above their base fidelity before swapping,")
    print("or swap first and distill the end-to-end pair; strategies differ in g.")


if __name__ == "__main__":
    main()
