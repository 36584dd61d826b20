//! Accepted config keys per subcommand, rendered into `--help`.

use std::sync::LazyLock;

use evprice::config::{INSTANCE_KEYS, MCTS_KEYS};

pub const COMMON_KEYS: &[(&str, &str)] = &[
    ("seed", "root seed; every random stream is derived from it [0]"),
    ("out", "output directory"),
    ("workers", "worker threads, 0 = one per core [all cores]"),
];

pub const GEN_KEYS: &[(&str, &str)] = &[("gen.count", "number of sequences to write [10]")];

pub const RUN_KEYS: &[(&str, &str)] = &[
    ("run.pricers", "comma-separated subset of oracle,mcts,flatrate,vi [oracle,mcts,flatrate]"),
    ("run.replications", "paired sequences per sweep point [100]"),
    ("run.sweep", "none | timeslot_hours | demand [none]"),
    ("run.sweep_values", "comma-separated values of the sweep axis"),
    ("run.train", "training sequences for the flat rate [100]"),
    ("run.flatrate_rate", "fixed per-hour flat rate on the grid instead of training"),
    ("run.timing", "report mean wall-clock runtime per sequence [false]"),
    ("run.traces", "also write per-request traces to <out>/traces.csv [false]"),
    ("vi.max_states", "state-count ceiling for value iteration [20000000]"),
    ("vi.policy_out", "write the VI policy of a single-point run to this file"),
];

pub const ERROR_KEYS: &[(&str, &str)] = &[
    ("error.k", "comma-separated timestep counts [24,48,96,192,384,768,1536]"),
    ("error.lambda", "comma-separated expected request counts [6,24,96,288]"),
];

pub const GRID_KEYS: &[(&str, &str)] = &[
    ("grid.exploration", "exploration constants c [1,3,5]"),
    ("grid.depth", "depth limits d [3,5,10]"),
    ("grid.iterations", "iteration budgets mu [100,800,10000]"),
    ("run.replications", "paired sequences per cell [100]"),
];

fn render(title: &str, groups: &[&[(&str, &str)]]) -> String {
    let mut s = format!("{title}\n");
    for group in groups {
        for (k, v) in *group {
            s.push_str(&format!("  {k:<30} {v}\n"));
        }
    }
    s.push_str(
        "\nConfig files hold one `key = value` per line; `#` starts a comment.\n\
         Unknown keys are an error. Exit codes: 0 ok, 2 config, 3 contract violation, 4 resource guard.",
    );
    s
}

pub static GEN_HELP: LazyLock<String> =
    LazyLock::new(|| render("Config keys:", &[COMMON_KEYS, GEN_KEYS, INSTANCE_KEYS]));
pub static RUN_HELP: LazyLock<String> =
    LazyLock::new(|| render("Config keys:", &[COMMON_KEYS, RUN_KEYS, INSTANCE_KEYS, MCTS_KEYS]));
pub static ERROR_HELP: LazyLock<String> = LazyLock::new(|| render("Config keys:", &[COMMON_KEYS, ERROR_KEYS]));
pub static GRID_HELP: LazyLock<String> =
    LazyLock::new(|| render("Config keys:", &[COMMON_KEYS, GRID_KEYS, INSTANCE_KEYS, MCTS_KEYS]));
