//! matplotlib script that redraws the figures from the emitted CSV files.

use crate::output::fmt_f64;
use crate::pipeline::Command;
use crate::scenario::Scenario;

const BODY: &str = r##"
HERE = os.path.dirname(os.path.abspath(__file__))


def load(name):
    path = os.path.join(HERE, name)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        lines = [line for line in f if not line.startswith("#")]
    reader = csv.DictReader(lines)
    cols = {k: [] for k in reader.fieldnames}
    for row in reader:
        for k, v in row.items():
            try:
                cols[k].append(float(v))
            except ValueError:
                cols[k].append(v)
    return cols


def times(steps):
    return [s * DT for s in steps] if DT else list(steps)


def plane(tag):
    ell = load(tag + "_ellipse.csv")
    if ell is None:
        return
    fig, ax = plt.subplots(figsize=(6, 5))
    traj = load(tag + "_trajectories.csv")
    if traj is not None:
        paths = {}
        for s, x, y in zip(traj["sample"], traj["x0"], traj["x1"]):
            paths.setdefault(s, ([], []))
            paths[s][0].append(x)
            paths[s][1].append(y)
        for xs, ys in paths.values():
            ax.plot(xs, ys, color="0.75", lw=0.6)
    mean = load(tag + "_mean.csv")
    if mean is not None:
        ax.plot(mean["x0"], mean["x1"], "b-", lw=1.5, label="mean")
    groups = {}
    for kind, step, x, y in zip(ell["kind"], ell["step"], ell["x"], ell["y"]):
        groups.setdefault((kind, step), ([], []))
        groups[(kind, step)][0].append(x)
        groups[(kind, step)][1].append(y)
    for (kind, _), (xs, ys) in sorted(groups.items(), key=lambda g: g[0][0] == "target"):
        xs.append(xs[0])
        ys.append(ys[0])
        ax.plot(xs, ys, "r-" if kind == "target" else "b-", lw=1.0)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(SCENARIO + " (" + tag + ")")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, tag + "_plane.png"), dpi=150)
    plt.close(fig)


def convergence():
    conv = load("convergence.csv")
    if conv is None or len(conv["iteration"]) < 2:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    it = conv["iteration"][1:]
    ax.semilogy(it, conv["eps_k"][1:], "b-o", ms=3, label="eps_k")
    ax.semilogy(it, conv["eps_l"][1:], "r-s", ms=3, label="eps_l")
    ax.axhline(EPSILON, color="k", ls="--", lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("gain update")
    ax.legend(loc="upper right")
    twin = ax.twinx()
    twin.plot(conv["iteration"], conv["cost"], "g-", lw=0.8)
    twin.set_ylabel("covariance cost")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "convergence.png"), dpi=150)
    plt.close(fig)


def first_coordinate(tag):
    mean = load(tag + "_mean.csv")
    if mean is None:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    traj = load(tag + "_trajectories.csv")
    if traj is not None:
        paths = {}
        for s, k, y in zip(traj["sample"], traj["step"], traj["x0"]):
            paths.setdefault(s, ([], []))
            paths[s][0].append(k)
            paths[s][1].append(y)
        for ks, ys in paths.values():
            ax.plot(times(ks), ys, color="0.75", lw=0.6)
    ax.plot(times(mean["step"]), mean["x0"], "b-", lw=1.5)
    cov = load(tag + "_covariance.csv")
    if cov is not None:
        sd = [3.0 * math.sqrt(max(c, 0.0)) for c in cov["cov_0_0"]]
        ax.errorbar(times(mean["step"]), mean["x0"], yerr=sd, fmt="none", ecolor="b", capsize=2, lw=0.8)
    ends = [0, HORIZON]
    ax.errorbar(times(ends), TARGET_MEAN, yerr=[3.0 * math.sqrt(v) for v in TARGET_VAR], fmt="none", ecolor="r", capsize=4, lw=1.5)
    ax.set_xlabel("time" if DT else "step")
    ax.set_ylabel("x1")
    # the lateral coordinate spans a far smaller range than the horizon, so
    # each axis keeps its own scale
    ax.set_aspect("auto")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, tag + "_x1.png"), dpi=150)
    plt.close(fig)


def engagement(tag):
    need = ("x0", "v_p", "v_e")
    if DT is None or not all(k in PARAMS for k in need):
        return
    traj = load(tag + "_trajectories.csv")
    if traj is None:
        return
    closing = PARAMS["v_p"] + PARAMS["v_e"]
    xs, ys = [], []
    for s, k, y in zip(traj["sample"], traj["step"], traj["x0"]):
        if s != 0:
            break
        xs.append(PARAMS["x0"] - closing * k * DT)
        ys.append(y)
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(xs, ys, "b-o", ms=3)
    ax.plot([0.0], [0.0], "rx", ms=10, mew=2)
    ax.set_xlabel("range to target")
    ax.set_ylabel("lateral offset")
    ax.set_aspect("auto")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, tag + "_engagement.png"), dpi=150)
    plt.close(fig)


if __name__ == "__main__":
    for tag in TAGS:
        plane(tag)
        first_coordinate(tag)
        engagement(tag)
    convergence()
"##;

pub fn plot_script(sc: &Scenario, command: Command) -> String {
    let b = &sc.boundary;
    let h = sc.stages.horizon();
    let tags: Vec<&str> = match command {
        Command::SolveUnconstrained => vec!["unconstrained"],
        Command::SolveConstrained | Command::Simulate => vec!["constrained"],
        Command::All => vec!["unconstrained", "constrained"],
    };
    let params = sc
        .parameters
        .iter()
        .map(|(k, v)| format!("{k:?}: {}", fmt_f64(*v)))
        .collect::<Vec<_>>()
        .join(", ");
    let mut s = String::from("#!/usr/bin/env python3\n# Redraws the figures of this run from the CSV files beside it.\n");
    s.push_str("import csv\nimport math\nimport os\n\nimport matplotlib\n\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n");
    s.push_str(&format!("SCENARIO = {:?}\n", sc.name));
    s.push_str(&format!("DT = {}\n", sc.dt.map(fmt_f64).unwrap_or_else(|| "None".into())));
    s.push_str(&format!("HORIZON = {h}\n"));
    s.push_str(&format!("EPSILON = {}\n", fmt_f64(sc.solver.epsilon)));
    s.push_str(&format!("TAGS = {:?}\n", tags));
    s.push_str(&format!("PARAMS = {{{params}}}\n"));
    s.push_str(&format!("TARGET_MEAN = [{}, {}]\n", fmt_f64(b.mu0()[0]), fmt_f64(b.mu_n()[0])));
    s.push_str(&format!("TARGET_VAR = [{}, {}]\n", fmt_f64(b.sigma0()[(0, 0)]), fmt_f64(b.sigma_n()[(0, 0)])));
    s.push_str(BODY);
    s
}
