#include <fastmpc/fastmpc.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fastmpc;

namespace {

/// Raised when a finished run breaks an invariant; maps to exit code 2.
struct InvariantError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct Options
{
  std::string model_file;
  std::string plant_file;
  std::string scenario_file;
  std::string solver = "ode";
  double power = 1.0;
  double tau_u = 5.0;
  int q = 0;
  bool adaptive = false;
  int q0 = 2;
  int delta = 2;
  int q_max = 20;
  double alpha = 1e4;
  double mu = 2.0;
  bool hardware_faithful = false;
  bool unlimited = false;
  bool perfect_forecast = false;
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
};

void add_common(CLI::App & app, Options & o)
{
  app.add_option("-m,--model", o.model_file, "model file (default: built-in benchmark plant)");
  app.add_option("--plant", o.plant_file, "model file of the simulated plant (default: same as --model)");
  app.add_option("--alpha", o.alpha, "penalty weight")->check(CLI::PositiveNumber);
  app.add_option("--mu", o.mu, "penalty exponent")->check(CLI::Range(2.0, 1e3));
  app.add_option("--delta", o.delta, "adaptation step")->check(CLI::PositiveNumber);
  app.add_option("--q-max", o.q_max, "largest number of iterations per update")->check(CLI::Range(2, 100000));
  app.add_flag("--hardware-faithful", o.hardware_faithful, "charge the problem preparation time every period");
  app.add_flag("--perfect-forecast", o.perfect_forecast, "controller knows the future disturbance");
  app.add_option("--noise", o.noise, "white process-noise intensity")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", o.seed, "noise seed");
  app.add_option("-o,--out", o.out_dir, "output directory");
}

void add_run(CLI::App & app, Options & o)
{
  app.add_option("-s,--scenario", o.scenario_file, "scenario CSV (default: built-in transient)");
  app.add_option("--power", o.power, "normalized computation power")->check(CLI::PositiveNumber);
  app.add_option("--tau-u", o.tau_u, "updating period [s] that sets the fixed q")->check(CLI::PositiveNumber);
}

ControllerConfig load_config(const Options & o)
{
  ControllerConfig cfg;
  if (o.model_file.empty()) {
    cfg = BenchmarkPlant{}.controller();
  } else {
    const auto f = MatrixFile::load(o.model_file);
    cfg.model = load_model(f);
    cfg.op = load_operating_point(f, cfg.model);
    std::tie(cfg.weights, cfg.bounds) = load_controller(f);
  }
  cfg.ode.penalty.weight = o.alpha;
  cfg.ode.penalty.exponent = o.mu;
  cfg.adaptation.delta = o.delta;
  cfg.adaptation.q_max = o.q_max;
  cfg.perfect_forecast = o.perfect_forecast;
  cfg.unlimited_iterations = o.unlimited;
  if (o.solver == "ode") cfg.solver = SolverKind::ode;
  else if (o.solver == "active_set") cfg.solver = SolverKind::active_set;
  else throw std::invalid_argument("unknown solver '" + o.solver + "'");
  return cfg;
}

PlantSim load_plant(const Options & o, const ControllerConfig & cfg)
{
  PlantSim plant{o.plant_file.empty() ? cfg.model : load_model(MatrixFile::load(o.plant_file))};
  plant.noise_scale = o.noise;
  plant.seed = o.seed;
  return plant;
}

ComputeBudget load_budget(const Options & o)
{
  ComputeBudget b;
  b.normalized_power = o.power;
  b.hardware_faithful = o.hardware_faithful;
  return b;
}

Scenario load_run_scenario(const Options & o)
{
  return o.scenario_file.empty() ? benchmark_transient() : load_scenario(o.scenario_file);
}

template<typename F>
void write_file(const fs::path & path, F && body)
{
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  body(os);
  if (!os) throw std::runtime_error("write failed: " + path.string());
  std::cout << "wrote " << path.string() << '\n';
}

fs::path out_dir(const Options & o)
{
  fs::create_directories(o.out_dir);
  return fs::path(o.out_dir);
}

void require_clean(const RunRecord & rec, const ControllerConfig & cfg, const Scenario & sc, const ComputeBudget & b,
                   const PlantSim & plant)
{
  const auto problems = check_run(rec, cfg, sc, b, plant);
  if (problems.empty()) return;
  for (const auto & p : problems) std::cerr << "invariant violated: " << p << '\n';
  throw InvariantError("run '" + rec.label + "' broke " + std::to_string(problems.size()) + " invariant(s)");
}

void require_sane(const SweepResult & s)
{
  for (const auto & p : s.points) {
    if (!p.cost) continue;
    const auto & c = *p.cost;
    for (double v : {c.dev_total, c.cst_total, c.closed_loop_total, c.c1, c.c2}) {
      if (!(v >= 0) || !std::isfinite(v)) throw InvariantError("sweep point " + p.segment + "/" + p.mode + ": bad cost");
    }
    if (c.c2 > c.c1 + 1e-12) throw InvariantError("sweep point " + p.segment + "/" + p.mode + ": c2 > c1");
  }
}

RunRecord run_one(const ControllerConfig & cfg, const Scenario & sc, const ComputeBudget & b,
                  const PlantSim & plant, bool adaptive, int q)
{
  auto rec = run_closed_loop(plant, cfg, sc, b, adaptive, q);
  require_clean(rec, cfg, sc, b, plant);
  return rec;
}

void simulate(const Options & o)
{
  const auto cfg = load_config(o);
  const auto plant = load_plant(o, cfg);
  const auto b = load_budget(o);
  const auto sc = load_run_scenario(o);
  const int q = o.adaptive ? o.q0 : (o.q > 0 ? o.q : iterations_allowed(b, cfg.solver, o.tau_u));
  const auto rec = run_one(cfg, sc, b, plant, o.adaptive, q);
  const auto dir = out_dir(o);
  write_file(dir / "run.csv", [&](std::ostream & os) { write_run_csv(os, rec); });
  if (o.adaptive) write_file(dir / "adaptation.csv", [&](std::ostream & os) { write_adaptation_csv(os, rec); });
  write_file(dir / "summary.txt", [&](std::ostream & os) {
    write_summary(os, rec);
    os << "q0 = " << q << '\n' << "normalized_power = " << csv_number(o.power) << '\n';
  });
}

void compare_solvers(const Options & o)
{
  const auto base = load_config(o);
  const auto plant = load_plant(o, base);
  const auto b = load_budget(o);
  const auto sc = load_run_scenario(o);
  const auto dir = out_dir(o);
  struct Mode
  {
    const char * name;
    SolverKind kind;
    bool unlimited;
  };
  std::vector<std::pair<std::string, RunRecord>> runs;
  for (const Mode & m : {Mode{"ode", SolverKind::ode, false}, Mode{"active_set", SolverKind::active_set, false},
                         Mode{"active_set_unlimited", SolverKind::active_set, true}}) {
    ControllerConfig cfg = base;
    cfg.solver = m.kind;
    cfg.unlimited_iterations = m.unlimited;
    const int q = iterations_allowed(b, m.kind, o.tau_u);
    runs.emplace_back(m.name, run_one(cfg, sc, b, plant, false, q));
    write_file(dir / (std::string("run_") + m.name + ".csv"), [&](std::ostream & os) { write_run_csv(os, runs.back().second); });
  }
  write_file(dir / "summary.txt", [&](std::ostream & os) {
    os << "scenario = " << sc.label << '\n' << "normalized_power = " << csv_number(o.power) << '\n';
    for (const auto & [name, rec] : runs) {
      const auto c = cost_breakdown(rec);
      os << name << ".q = " << rec.windows.front().q << '\n'
         << name << ".open_loop_total = " << csv_number(c.open_loop_total()) << '\n'
         << name << ".closed_loop_total = " << csv_number(c.closed_loop_total) << '\n'
         << name << ".c1 = " << csv_number(c.c1) << '\n'
         << name << ".c2 = " << csv_number(c.c2) << '\n'
         << name << ".clip_events = " << rec.clip_events << '\n';
    }
  });
}

void sweep_power_cmd(const Options & o, const std::vector<double> & powers)
{
  const auto cfg = load_config(o);
  const auto plant = load_plant(o, cfg);
  const auto res = sweep_power(plant, cfg, load_run_scenario(o), powers, load_budget(o), {o.tau_u});
  require_sane(res);
  const auto dir = out_dir(o);
  write_file(dir / "sweep_power.csv", [&](std::ostream & os) { write_sweep_csv(os, res); });
  write_file(dir / "summary.txt", [&](std::ostream & os) {
    os << "points = " << res.points.size() << '\n';
    os << "crossover = " << (res.crossover ? csv_number(*res.crossover) : std::string("none")) << '\n';
  });
}

void sweep_period_cmd(const Options & o, const std::vector<std::string> & files, const std::vector<int> & qs)
{
  const auto cfg = load_config(o);
  const auto plant = load_plant(o, cfg);
  std::vector<Scenario> segs;
  if (files.empty()) segs = benchmark_segments();
  for (const auto & f : files) segs.push_back(load_scenario(f));
  PeriodSweepOptions popt;
  popt.adaptive_q0 = o.q0;
  const auto res = sweep_period(plant, cfg, segs, qs, load_budget(o), popt);
  require_sane(res.sweep);
  const auto dir = out_dir(o);
  write_file(dir / "sweep_period.csv", [&](std::ostream & os) { write_sweep_csv(os, res.sweep); });
  write_file(dir / "summary.txt", [&](std::ostream & os) {
    for (const auto & s : res.segments) {
      os << s.segment << ".best_fixed_q = " << s.best_fixed_q << '\n'
         << s.segment << ".best_fixed_cost = " << csv_number(s.best_fixed_cost) << '\n'
         << s.segment << ".adaptive_cost = " << csv_number(s.adaptive_cost) << '\n'
         << s.segment << ".adaptive_ratio = " << csv_number(s.adaptive_cost / s.best_fixed_cost) << '\n'
         << s.segment << ".reference_cost = " << csv_number(s.reference_cost) << '\n';
    }
  });
}

void gen_scenario(const Options & o, const std::string & which)
{
  std::vector<Scenario> all = benchmark_segments();
  all.push_back(benchmark_transient());
  const auto dir = out_dir(o);
  bool found = false;
  for (const auto & s : all) {
    if (which != "all" && which != s.label) continue;
    found = true;
    write_file(dir / (s.label + ".csv"), [&](std::ostream & os) { write_scenario_csv(os, s); });
  }
  if (!found) throw std::invalid_argument("unknown scenario '" + which + "'");
}

void gen_plant(const Options & o, std::uint64_t plant_seed, const std::string & name)
{
  BenchmarkPlant bp;
  bp.seed = plant_seed;
  const auto cfg = bp.controller();
  MatrixFile f;
  store_model(f, cfg.model, cfg.op);
  store_controller(f, cfg.weights, cfg.bounds);
  const auto path = out_dir(o) / name;
  write_file(path, [&](std::ostream & os) { f.write(os); });
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Iteration-limited MPC: closed-loop simulation and benchmark sweeps"};
  app.require_subcommand(1);
  Options o;

  auto * sim = app.add_subcommand("simulate", "one closed-loop run");
  add_common(*sim, o);
  add_run(*sim, o);
  sim->add_option("--solver", o.solver, "ode or active_set")->check(CLI::IsMember({"ode", "active_set"}));
  auto * q_opt = sim->add_option("-q,--q", o.q, "iterations per update (default: the allowance for tau-u)");
  q_opt->check(CLI::PositiveNumber);
  sim->add_flag("--adaptive", o.adaptive, "adapt q every update (ode solver)")->excludes(q_opt);
  sim->add_option("--q0", o.q0, "first q of an adaptive run")->check(CLI::Range(2, 100000));
  sim->add_flag("--unlimited", o.unlimited, "active-set solver runs to optimality");

  auto * cmp = app.add_subcommand("compare-solvers", "ode, capped and unlimited active-set on one scenario");
  add_common(*cmp, o);
  add_run(*cmp, o);

  std::vector<double> powers{0.25, 0.5, 1, 2, 4, 8};
  auto * swp = app.add_subcommand("sweep-power", "both solvers across normalized computation power");
  add_common(*swp, o);
  add_run(*swp, o);
  swp->add_option("--powers", powers, "power axis")->delimiter(',');

  std::vector<std::string> seg_files;
  std::vector<int> qs{4, 8, 12, 16, 20};
  auto * swq = app.add_subcommand("sweep-period", "fixed and adaptive updating periods on scenario segments");
  add_common(*swq, o);
  swq->add_option("--power", o.power, "normalized computation power")->check(CLI::PositiveNumber);
  swq->add_option("--segments", seg_files, "scenario CSVs (default: the six built-in segments)");
  swq->add_option("--qs", qs, "fixed q axis")->delimiter(',');
  swq->add_option("--q0", o.q0, "first q of the adaptive runs")->check(CLI::Range(2, 100000));

  std::string which = "all";
  auto * gs = app.add_subcommand("gen-scenario", "write the built-in scenarios as CSV");
  gs->add_option("-o,--out", o.out_dir, "output directory");
  gs->add_option("--name", which, "seg1..seg6, transient or all");

  std::uint64_t plant_seed = BenchmarkPlant{}.seed;
  std::string plant_name = "benchmark_plant.txt";
  auto * gp = app.add_subcommand("gen-plant", "write the benchmark plant and controller settings as a model file");
  gp->add_option("-o,--out", o.out_dir, "output directory");
  gp->add_option("--plant-seed", plant_seed, "perturbation seed of the plant");
  gp->add_option("--name", plant_name, "file name");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) simulate(o);
    else if (*cmp) compare_solvers(o);
    else if (*swp) sweep_power_cmd(o, powers);
    else if (*swq) sweep_period_cmd(o, seg_files, qs);
    else if (*gs) gen_scenario(o, which);
    else if (*gp) gen_plant(o, plant_seed, plant_name);
  } catch (const InvariantError & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
