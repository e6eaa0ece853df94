"""Sweep P_max and read the fairness tea leaves on the final point.

Runs a seeded scenario sweep (baseline optimizer, P_max 1..3) on the
bundled 50-node topology, then breaks the last point's allocation down per
pair: who got rate, who starved, and which workload attributes correlate
with getting served.
"""

from qvpn.fixtures import bundled_topology, TOPOLOGY_50
from qvpn.workload import WorkloadParams
from qvpn.harness import Scenario, fairness_report, point_workload, run_scenario
from qvpn.quantum_math import default_strategy_catalog

SEED = 0


def main():
    scenario = Scenario(
        name="p-max-sweep",
        graph=bundled_topology(TOPOLOGY_50),
        workload_params=WorkloadParams(num_orgs=3, pairs_per_org=50, r_min=0.0),
        optimizer="baseline-hop",
        sweep_axis="p_max",
        sweep_values=(1, 2, 3),
        repetitions=1,
        seeds=(SEED,),
        catalog=tuple(default_strategy_catalog()),
    )
    result = run_scenario(scenario)
    print(f"{'p_max':>6} {'status':>10} {'W-EGR':>10} {'seconds':>8}")
    for point in result.points:
        print(f"{point.axis_value:>6} {point.status:>10} {point.wegr:>10.2f} "
              f"{point.seconds:>8.2f}")

    final = result.points[-1]
    workload = point_workload(scenario, final.axis_value, final.seed)
    report = fairness_report(final.solution, workload, final.selection)

    print()
    print(f"final point: {report.zero_rate_pairs} of {len(report.pair_rows)} "
          "pairs at zero rate")
    print("top five pairs by delivered EGR:")
    for row in report.pair_rows[:5]:
        org, a, b = row.pair_key
        print(f"  {org} {a}-{b}: {row.true_egr:.2f} EPR/s "
              f"(threshold {row.fidelity_threshold:.2f}, {row.min_hops:.0f} hops)")

    print()
    print("correlation of true EGR with workload attributes:")
    for name, value in (("demand weight", report.corr_demand),
                        ("fidelity threshold", report.corr_fidelity),
                        ("min hops", report.corr_hops),
                        ("composite w*lambda/(F*L)", report.corr_composite)):
        print(f"  {name:>26}: {value:+.3f}")
    print()
    print("hard thresholds and long routes hurt; heavy composite demand helps.")


if __name__ == "__main__":
    main()
