"""Energy-optimal live prefetching for computation offloading.

Closed-form slow-fading policies, threshold policies for i.i.d. fast
fading, brute-force verification oracles and a Monte-Carlo sweep harness.
"""

from .model import (
    Channel,
    FastGamma,
    FetchSplit,
    QuadratureError,
    Scenario,
    SlowFading,
    expect_over_gain,
    mean_gain,
    mean_inverse_gain,
    sample_gain,
    to_db,
    transmit_energy,
)
from .slow import (
    PrefetchPlan,
    expected_fetch_energy_slow,
    gain_lower_bound,
    no_prefetch_energy_slow,
    optimal_prefetch_slow,
    prefetch_gain_slow,
    priorities,
    priority,
    priority_order,
    slot_allocation_slow,
    total_prefetched_bits,
)
from .demand import (
    DemandTrace,
    XiTable,
    build_xi_table,
    demand_bits,
    demand_energy_bounds,
    expected_demand_energy,
    simulate_demand_episode,
)
from .prefetch import (
    BatchResult,
    EpisodeState,
    EpisodeTrace,
    PrefetchPolicy,
    ZetaTable,
    alpha_from_final_threshold,
    approximate_task_set,
    best_prefix_set,
    build_prefix_tables,
    build_zeta_table,
    decision_vector,
    estimate_threshold,
    expected_total_energy_fast,
    no_prefetch_energy_fast,
    noncausal_final_threshold,
    run_prefetch_batch,
    run_prefetch_episode,
    select_noncausal_set,
    threshold_eta,
)
from .oracles import (
    BenchmarkResult,
    InductionResult,
    OracleResult,
    noncausal_benchmark_energy,
    p5_backward_induction,
    slow_oracle,
)
from .sweep import (
    CSV_HEADER,
    ConfigError,
    SweepConfig,
    SweepRow,
    emit_csv,
    gain_vs_shape,
    generate_scenario,
    load_rows,
    run_sweep,
)

__version__ = "0.1.0"
