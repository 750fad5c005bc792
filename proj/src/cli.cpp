#include "ikf/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "ikf/sim.hpp"
#include "ikf/staticgain.hpp"

namespace ikf::cli {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw SpecError(path + ": " + msg);
}

void check_fields(const json& j, const std::string& path,
                  std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return it.key() == a; })) {
      fail(path + "." + it.key(), "unknown field");
    }
  }
}

const json& require_field(const json& j, const std::string& path, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) fail(path + "." + name, "required field is missing");
  return *it;
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

std::int64_t get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "must be an integer");
  return j.get<std::int64_t>();
}

int get_size(const json& j, const std::string& path) {
  const std::int64_t v = get_integer(j, path);
  if (v < 1) fail(path, "must be >= 1");
  return static_cast<int>(v);
}

Complex get_entry(const json& j, const std::string& path) {
  if (j.is_number()) return Complex(j.get<double>(), 0.0);
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return Complex(j[0].get<double>(), j[1].get<double>());
  }
  fail(path, "must be a number or an [re, im] pair");
}

ComplexMatrix get_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "must be a nonempty array of rows");
  if (!j[0].is_array() || j[0].empty()) {
    fail(path + "[0]", "must be a nonempty array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  ComplexMatrix M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    const std::string rpath = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail(rpath, "rows must share one length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      M(r, c) = get_entry(row[static_cast<std::size_t>(c)],
                          rpath + "[" + std::to_string(c) + "]");
    }
  }
  return M;
}

model::Eigenvalue parse_eigenvalue(const json& j, const std::string& path,
                                   const AnalysisConfig& cfg,
                                   std::vector<std::string>& warnings) {
  if (!j.is_object()) fail(path, "must be an object");
  const int polar = j.contains("phase_num") || j.contains("phase_den");
  const int angle = j.contains("theta");
  const int cart = j.contains("re") || j.contains("im");
  if (polar + angle + cart != 1) {
    fail(path, "use exactly one of {mag, phase_num, phase_den}, {mag, theta}, {re, im}");
  }
  if (polar) {
    check_fields(j, path, {"mag", "phase_num", "phase_den"});
    const double mag = get_number(require_field(j, path, "mag"), path + ".mag");
    const std::int64_t num =
        get_integer(require_field(j, path, "phase_num"), path + ".phase_num");
    const std::int64_t den =
        get_integer(require_field(j, path, "phase_den"), path + ".phase_den");
    if (den < 1) fail(path + ".phase_den", "must be >= 1");
    const model::Phase ph = model::Phase::rational(num, den);
    if (ph.num() != num || ph.den() != den) {
      warnings.push_back(path + ": phase " + std::to_string(num) + "/" +
                         std::to_string(den) + " normalized to " +
                         std::to_string(ph.num()) + "/" + std::to_string(ph.den()));
    }
    return model::Eigenvalue{mag, ph};
  }
  if (angle) {
    check_fields(j, path, {"mag", "theta"});
    const double mag = get_number(require_field(j, path, "mag"), path + ".mag");
    const double theta = get_number(require_field(j, path, "theta"), path + ".theta");
    return model::Eigenvalue{
        mag, model::approximate_rational_phase(theta, cfg.max_den, 1e-9)};
  }
  check_fields(j, path, {"re", "im"});
  const double re = get_number(require_field(j, path, "re"), path + ".re");
  const double im = get_number(require_field(j, path, "im"), path + ".im");
  const double mag = std::hypot(re, im);
  if (mag == 0.0) fail(path, "eigenvalue must be nonzero");
  const double theta = std::atan2(im, re);
  return model::Eigenvalue{mag,
                           model::approximate_rational_phase(theta, cfg.max_den, 1e-9)};
}

std::vector<model::JordanBlock> parse_blocks(const json& j, const std::string& path,
                                             const AnalysisConfig& cfg,
                                             std::vector<std::string>& warnings) {
  if (!j.is_array() || j.empty()) fail(path, "must be a nonempty array");
  std::vector<model::JordanBlock> blocks;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string bpath = path + "[" + std::to_string(i) + "]";
    const json& b = j[i];
    check_fields(b, bpath, {"eig", "size"});
    model::JordanBlock blk;
    blk.eig = parse_eigenvalue(require_field(b, bpath, "eig"), bpath + ".eig", cfg,
                               warnings);
    blk.size = b.contains("size") ? get_size(b["size"], bpath + ".size") : 1;
    blocks.push_back(blk);
  }
  return blocks;
}

model::SystemSpec parse_discrete(const json& j, const AnalysisConfig& cfg,
                                 std::vector<std::string>& warnings) {
  const std::string path = "discrete";
  check_fields(j, path, {"blocks", "B", "C", "sigma", "sigma_prime"});
  model::SystemSpec spec;
  spec.blocks = parse_blocks(require_field(j, path, "blocks"), path + ".blocks", cfg,
                             warnings);
  spec.B = get_matrix(require_field(j, path, "B"), path + ".B");
  spec.C = get_matrix(require_field(j, path, "C"), path + ".C");
  if (j.contains("sigma")) spec.sigma = get_number(j["sigma"], path + ".sigma");
  if (j.contains("sigma_prime")) {
    spec.sigma_prime = get_number(j["sigma_prime"], path + ".sigma_prime");
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return spec;
}

sampling::ContinuousSpec parse_continuous(const json& j) {
  const std::string path = "continuous";
  check_fields(j, path,
               {"blocks", "B_c", "C_c", "D_c", "interval", "jitter_window"});
  sampling::ContinuousSpec spec;
  const json& blocks = require_field(j, path, "blocks");
  if (!blocks.is_array() || blocks.empty()) {
    fail(path + ".blocks", "must be a nonempty array");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string bpath = path + ".blocks[" + std::to_string(i) + "]";
    const json& b = blocks[i];
    check_fields(b, bpath, {"re", "im", "size"});
    sampling::ContinuousBlock blk;
    blk.re = get_number(require_field(b, bpath, "re"), bpath + ".re");
    blk.im = b.contains("im") ? get_number(b["im"], bpath + ".im") : 0.0;
    blk.size = b.contains("size") ? get_size(b["size"], bpath + ".size") : 1;
    spec.blocks.push_back(blk);
  }
  spec.B_c = get_matrix(require_field(j, path, "B_c"), path + ".B_c");
  spec.C_c = get_matrix(require_field(j, path, "C_c"), path + ".C_c");
  spec.D_c = get_matrix(require_field(j, path, "D_c"), path + ".D_c");
  spec.I = get_number(require_field(j, path, "interval"), path + ".interval");
  if (j.contains("jitter_window")) {
    spec.T = get_number(j["jitter_window"], path + ".jitter_window");
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return spec;
}

spectral::ParallelSpec parse_parallel(const json& j, const AnalysisConfig& cfg,
                                      std::vector<std::string>& warnings) {
  const std::string path = "parallel";
  check_fields(j, path, {"blocks", "B", "channels", "sigma", "sigma_prime"});
  spectral::ParallelSpec spec;
  spec.blocks = parse_blocks(require_field(j, path, "blocks"), path + ".blocks", cfg,
                             warnings);
  spec.B = get_matrix(require_field(j, path, "B"), path + ".B");
  const json& channels = require_field(j, path, "channels");
  if (!channels.is_array() || channels.empty()) {
    fail(path + ".channels", "must be a nonempty array");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const std::string cpath = path + ".channels[" + std::to_string(i) + "]";
    check_fields(channels[i], cpath, {"C", "p_e"});
    spec.channels.push_back(
        get_matrix(require_field(channels[i], cpath, "C"), cpath + ".C"));
    spec.erasure_probs.push_back(
        get_number(require_field(channels[i], cpath, "p_e"), cpath + ".p_e"));
  }
  if (j.contains("sigma")) spec.sigma = get_number(j["sigma"], path + ".sigma");
  if (j.contains("sigma_prime")) {
    spec.sigma_prime = get_number(j["sigma_prime"], path + ".sigma_prime");
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return spec;
}

AnalysisConfig parse_config(const json& j) {
  const std::string path = "config";
  check_fields(j, path, {"tol", "max_period", "max_den", "seed"});
  AnalysisConfig cfg;
  if (j.contains("tol")) {
    cfg.tol = get_number(j["tol"], path + ".tol");
    if (!(cfg.tol > 0.0)) fail(path + ".tol", "must be positive");
  }
  if (j.contains("max_period")) {
    cfg.max_period = get_integer(j["max_period"], path + ".max_period");
    if (cfg.max_period < 1) fail(path + ".max_period", "must be >= 1");
  }
  if (j.contains("max_den")) {
    cfg.max_den = get_integer(j["max_den"], path + ".max_den");
    if (cfg.max_den < 1) fail(path + ".max_den", "must be >= 1");
  }
  if (j.contains("seed")) {
    if (j["seed"].is_number_unsigned()) {
      cfg.seed = j["seed"].get<std::uint64_t>();
    } else {
      const std::int64_t s = get_integer(j["seed"], path + ".seed");
      if (s < 0) fail(path + ".seed", "must be nonnegative");
      cfg.seed = static_cast<std::uint64_t>(s);
    }
  }
  return cfg;
}

// ---------- serialization ----------

json eigenvalue_json(const model::Eigenvalue& eig) {
  json out;
  out["mag"] = eig.magnitude;
  if (eig.phase.is_rational()) {
    out["phase_num"] = eig.phase.num();
    out["phase_den"] = eig.phase.den();
  } else {
    out["theta"] = eig.phase.radians();
  }
  return out;
}

json matrix_json(const ComplexMatrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      const Complex z = M(r, c);
      if (z.imag() == 0.0) {
        row.push_back(z.real());
      } else {
        row.push_back(json::array({z.real(), z.imag()}));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json blocks_json(const std::vector<model::JordanBlock>& blocks) {
  json out = json::array();
  for (const auto& b : blocks) {
    out.push_back(json{{"eig", eigenvalue_json(b.eig)}, {"size", b.size}});
  }
  return out;
}

// ---------- output helpers ----------

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw SpecError("failed writing " + path.string());
}

double quantile(std::vector<double> sorted_values, double q) {
  auto& v = sorted_values;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i0 = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i0);
  if (i0 + 1 >= v.size()) return v.back();
  return v[i0] + frac * (v[i0 + 1] - v[i0]);
}

std::string simulate_csv(const sim::TraceEnsemble& ensemble) {
  std::ostringstream out;
  out << "step,mean_trace,q10,q90\n";
  const auto trials = ensemble.trials.size();
  std::vector<double> column(trials);
  for (long n = 0; n < ensemble.horizon; ++n) {
    double mean = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      column[t] = ensemble.trials[t].values[static_cast<std::size_t>(n)];
      mean += column[t];
    }
    mean /= static_cast<double>(trials);
    std::sort(column.begin(), column.end());
    out << n << ',' << fmt(mean) << ',' << fmt(quantile(column, 0.10)) << ','
        << fmt(quantile(column, 0.90)) << '\n';
  }
  return out.str();
}

std::string sweep_csv(const sim::SweepResult& sweep) {
  std::ostringstream out;
  out << "p_e,verdict,slope\n";
  for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
    out << fmt(sweep.grid[i]) << ',' << sim::to_string(sweep.classifications[i].verdict)
        << ',' << fmt(sweep.classifications[i].mean_log_slope) << '\n';
  }
  return out.str();
}

json sweep_json(const sim::SweepResult& sweep) {
  return json{{"interval_lo", sweep.interval_lo},
              {"interval_hi", sweep.interval_hi},
              {"monotone", sweep.monotone},
              {"diagnostic", sweep.diagnostic}};
}

json critical_report_json(const spectral::CriticalReport& rep) {
  json cycles = json::array();
  for (std::size_t i = 0; i < rep.cycles.size(); ++i) {
    const auto& cyc = rep.cycles[i];
    json eigs = json::array();
    for (const auto& mem : cyc.members) {
      const Complex z = mem.eig.value();
      eigs.push_back(json::array({z.real(), z.imag()}));
    }
    cycles.push_back(json{{"magnitude", cyc.magnitude()},
                          {"p", cyc.p},
                          {"nu", cyc.nu},
                          {"l", cyc.l},
                          {"threshold", rep.per_cycle_threshold[i]},
                          {"eigenvalues", std::move(eigs)}});
  }
  return json{{"critical", rep.critical},
              {"bottleneck_cycle", rep.bottleneck_cycle},
              {"unobservable_unstable", rep.unobservable_unstable},
              {"all_stable", rep.all_stable},
              {"cycles", std::move(cycles)}};
}

// ---------- subcommand payload access ----------

const model::SystemSpec& require_discrete(const SpecFile& sf, const char* cmd) {
  if (!sf.discrete) fail(cmd, "requires a discrete spec");
  return *sf.discrete;
}

const sampling::ContinuousSpec& require_continuous(const SpecFile& sf, const char* cmd) {
  if (!sf.continuous) fail(cmd, "requires a continuous spec");
  return *sf.continuous;
}

void print_warnings(const SpecFile& sf) {
  for (const auto& w : sf.warnings) std::cerr << "warning: " << w << '\n';
}

sampling::JitterMode parse_jitter_mode(const std::string& name) {
  if (name == "none") return sampling::JitterMode::kNone;
  if (name == "iid_uniform") return sampling::JitterMode::kIidUniform;
  if (name == "weyl_sqrt2") return sampling::JitterMode::kWeylSqrt2;
  if (name == "interval_variant") return sampling::JitterMode::kIntervalVariant;
  fail("--jitter-mode", "unknown mode '" + name +
                            "' (none, iid_uniform, weyl_sqrt2, interval_variant)");
}

}  // namespace

std::string to_string(SpecKind kind) {
  switch (kind) {
    case SpecKind::kDiscrete:
      return "discrete";
    case SpecKind::kContinuous:
      return "continuous";
    default:
      return "parallel";
  }
}

SpecFile parse_spec_json(const json& j) {
  SpecFile out;
  check_fields(j, "spec",
               {"schema_version", "kind", "discrete", "continuous", "parallel",
                "config"});
  const json& ver = require_field(j, "spec", "schema_version");
  if (!ver.is_string()) fail("spec.schema_version", "must be a string");
  out.schema_version = ver.get<std::string>();
  if (out.schema_version != "1") {
    fail("spec.schema_version", "unsupported version '" + out.schema_version + "'");
  }

  if (j.contains("config")) {
    out.has_config = true;
    out.config = parse_config(j["config"]);
  }

  const json& kind = require_field(j, "spec", "kind");
  if (!kind.is_string()) fail("spec.kind", "must be a string");
  const std::string k = kind.get<std::string>();
  const auto expect_only = [&](const char* present) {
    for (const char* payload : {"discrete", "continuous", "parallel"}) {
      if (payload == std::string(present)) {
        if (!j.contains(payload)) fail(std::string("spec.") + payload, "required for kind " + k);
      } else if (j.contains(payload)) {
        fail(std::string("spec.") + payload, "conflicts with kind " + k);
      }
    }
  };
  if (k == "discrete") {
    out.kind = SpecKind::kDiscrete;
    expect_only("discrete");
    out.discrete = parse_discrete(j["discrete"], out.config, out.warnings);
  } else if (k == "continuous") {
    out.kind = SpecKind::kContinuous;
    expect_only("continuous");
    out.continuous = parse_continuous(j["continuous"]);
  } else if (k == "parallel") {
    out.kind = SpecKind::kParallel;
    expect_only("parallel");
    out.parallel = parse_parallel(j["parallel"], out.config, out.warnings);
  } else {
    fail("spec.kind", "must be discrete, continuous or parallel");
  }
  return out;
}

SpecFile parse_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SpecError(path + ": " + e.what());
  }
  return parse_spec_json(j);
}

json serialize_spec(const SpecFile& spec) {
  json out;
  out["schema_version"] = spec.schema_version;
  out["kind"] = to_string(spec.kind);
  if (spec.has_config) {
    out["config"] = json{{"tol", spec.config.tol},
                         {"max_period", spec.config.max_period},
                         {"max_den", spec.config.max_den},
                         {"seed", spec.config.seed}};
  }
  if (spec.discrete) {
    const auto& d = *spec.discrete;
    out["discrete"] = json{{"blocks", blocks_json(d.blocks)},
                           {"B", matrix_json(d.B)},
                           {"C", matrix_json(d.C)},
                           {"sigma", d.sigma},
                           {"sigma_prime", d.sigma_prime}};
  }
  if (spec.continuous) {
    const auto& c = *spec.continuous;
    json blocks = json::array();
    for (const auto& b : c.blocks) {
      blocks.push_back(json{{"re", b.re}, {"im", b.im}, {"size", b.size}});
    }
    out["continuous"] = json{{"blocks", std::move(blocks)},
                             {"B_c", matrix_json(c.B_c)},
                             {"C_c", matrix_json(c.C_c)},
                             {"D_c", matrix_json(c.D_c)},
                             {"interval", c.I},
                             {"jitter_window", c.T}};
  }
  if (spec.parallel) {
    const auto& p = *spec.parallel;
    json channels = json::array();
    for (std::size_t i = 0; i < p.channels.size(); ++i) {
      channels.push_back(
          json{{"C", matrix_json(p.channels[i])}, {"p_e", p.erasure_probs[i]}});
    }
    out["parallel"] = json{{"blocks", blocks_json(p.blocks)},
                           {"B", matrix_json(p.B)},
                           {"channels", std::move(channels)},
                           {"sigma", p.sigma},
                           {"sigma_prime", p.sigma_prime}};
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  const auto parse_value = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("--grid: cannot parse number '" + s + "'");
    }
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 3) {
      throw std::invalid_argument("--grid: range syntax is lo:hi:step");
    }
    const double lo = parse_value(parts[0]);
    const double hi = parse_value(parts[1]);
    const double step = parse_value(parts[2]);
    if (!(step > 0.0)) throw std::invalid_argument("--grid: step must be positive");
    for (int i = 0;; ++i) {
      const double v = lo + i * step;
      if (v > hi + 1e-12) break;
      grid.push_back(std::min(v, hi));
    }
  } else {
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) grid.push_back(parse_value(part));
  }
  if (grid.empty()) throw std::invalid_argument("--grid: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      throw std::invalid_argument("--grid: values must lie in [0,1]");
    }
    if (i > 0 && grid[i] <= grid[i - 1]) {
      throw std::invalid_argument("--grid: values must be strictly ascending");
    }
  }
  return grid;
}

int run_main(int argc, const char* const* argv) {
  CLI::App app{"Intermittent-observation Kalman filtering: thresholds and simulation"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string out_dir = ".";
  std::string grid_text = "0.05:0.45:0.05";
  std::string jitter_name = "weyl_sqrt2";
  double tol = model::kDefaultRankTol;
  std::int64_t max_period = spectral::kMaxPeriod;
  double p_e = 0.1;
  int trials = 200;
  long horizon = 2000;
  std::uint64_t seed = kDefaultSeed;

  CLI::Option* tol_opt = nullptr;
  CLI::Option* period_opt = nullptr;
  CLI::Option* seed_opts[4] = {nullptr, nullptr, nullptr, nullptr};

  auto* analyze = app.add_subcommand("analyze", "Critical erasure probability report");
  analyze->add_option("spec", spec_path, "spec JSON file")->required();
  tol_opt = analyze->add_option("--tol", tol, "rank decision tolerance");
  period_opt = analyze->add_option("--max-period", max_period, "cycle period cap");
  analyze->add_option("--out-dir", out_dir, "output directory");

  auto* simulate = app.add_subcommand("simulate", "Covariance-trace Monte Carlo");
  simulate->add_option("spec", spec_path, "spec JSON file")->required();
  simulate->add_option("--p-e", p_e, "erasure probability")->required();
  simulate->add_option("--trials", trials, "Monte-Carlo trials");
  simulate->add_option("--horizon", horizon, "steps per trial");
  seed_opts[0] = simulate->add_option("--seed", seed, "RNG seed (default 1)");
  simulate->add_option("--out-dir", out_dir, "output directory");

  auto* sweep = app.add_subcommand("sweep", "Empirical threshold bracketing");
  sweep->add_option("spec", spec_path, "spec JSON file")->required();
  sweep->add_option("--grid", grid_text, "p_e grid: lo:hi:step or comma list");
  sweep->add_option("--trials", trials, "Monte-Carlo trials");
  sweep->add_option("--horizon", horizon, "steps per trial");
  seed_opts[1] = sweep->add_option("--seed", seed, "RNG seed (default 1)");
  sweep->add_option("--out-dir", out_dir, "output directory");

  auto* sample = app.add_subcommand("sample", "Uniform vs jittered sampling comparison");
  sample->add_option("spec", spec_path, "continuous spec JSON file")->required();
  sample->add_option("--grid", grid_text, "p_e grid: lo:hi:step or comma list");
  sample->add_option("--trials", trials, "Monte-Carlo trials");
  sample->add_option("--horizon", horizon, "steps per trial");
  sample->add_option("--jitter-mode", jitter_name,
                     "none, iid_uniform, weyl_sqrt2 or interval_variant");
  seed_opts[2] = sample->add_option("--seed", seed, "RNG seed (default 1)");
  sample->add_option("--out-dir", out_dir, "output directory");

  auto* staticgain = app.add_subcommand("staticgain", "Static-gain threshold lower bound");
  staticgain->add_option("spec", spec_path, "spec JSON file")->required();
  seed_opts[3] = staticgain->add_option("--seed", seed, "RNG seed (default 1)");
  staticgain->add_option("--out-dir", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    SpecFile sf = parse_spec(spec_path);
    print_warnings(sf);
    if (tol_opt && tol_opt->count()) sf.config.tol = tol;
    if (period_opt && period_opt->count()) sf.config.max_period = max_period;
    const bool seed_given = std::any_of(std::begin(seed_opts), std::end(seed_opts),
                                        [](CLI::Option* o) { return o && o->count(); });
    if (seed_given) sf.config.seed = seed;

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);

    if (*analyze) {
      json report;
      if (sf.kind == SpecKind::kDiscrete) {
        report = critical_report_json(
            spectral::critical_erasure(*sf.discrete, sf.config.tol, sf.config.max_period));
        report["kind"] = "discrete";
      } else if (sf.kind == SpecKind::kParallel) {
        const auto rep = spectral::parallel_stability_margin(*sf.parallel, sf.config.tol);
        report = json{{"kind", "parallel"},
                      {"stable", rep.stable},
                      {"margin", rep.margin},
                      {"binding_cycle", rep.binding_cycle},
                      {"binding_cardinalities", rep.binding_cardinalities}};
      } else {
        const auto cc = sampling::continuous_critical(*sf.continuous);
        report = json{{"kind", "continuous"},
                      {"critical_nonuniform", cc.critical},
                      {"unobservable_unstable", cc.unobservable_unstable},
                      {"uniform", critical_report_json(spectral::critical_erasure(
                                      sampling::sampled_spec(*sf.continuous,
                                                             sf.config.max_den, 1e-9),
                                      sf.config.tol, sf.config.max_period))}};
      }
      const std::string text = report.dump(2) + "\n";
      write_text(dir / "analysis.json", text);
      std::cout << text;
      return 0;
    }

    if (*simulate) {
      const auto& spec = require_discrete(sf, "simulate");
      if (!(p_e >= 0.0 && p_e <= 1.0)) fail("--p-e", "must lie in [0,1]");
      const auto ensemble =
          sim::run_ensemble(sim::make_model(spec), p_e, sf.config.seed, trials, horizon);
      write_text(dir / "simulate.csv", simulate_csv(ensemble));
      return 0;
    }

    if (*sweep) {
      const auto& spec = require_discrete(sf, "sweep");
      const auto grid = parse_grid(grid_text);
      const auto result =
          sim::sweep_threshold(spec, grid, trials, horizon, sf.config.seed);
      write_text(dir / "sweep.csv", sweep_csv(result));
      write_text(dir / "sweep.json", sweep_json(result).dump(2) + "\n");
      return 0;
    }

    if (*sample) {
      const auto& cspec = require_continuous(sf, "sample");
      const auto grid = parse_grid(grid_text);
      const auto mode = parse_jitter_mode(jitter_name);
      const auto record = sampling::uniform_vs_nonuniform_report(
          cspec, grid, trials, horizon, mode, sf.config.seed);
      json report{{"jitter_mode", sampling::to_string(mode)},
                  {"analytic_uniform", record.analytic_uniform},
                  {"analytic_nonuniform", record.analytic_nonuniform},
                  {"unobservable_unstable", record.unobservable_unstable},
                  {"cross_correlation_zeroed", record.cross_correlation_zeroed},
                  {"uniform", sweep_json(record.uniform_sweep)},
                  {"nonuniform", sweep_json(record.nonuniform_sweep)}};
      write_text(dir / "sample.json", report.dump(2) + "\n");
      write_text(dir / "sweep_uniform.csv", sweep_csv(record.uniform_sweep));
      write_text(dir / "sweep_nonuniform.csv", sweep_csv(record.nonuniform_sweep));
      return 0;
    }

    const auto& spec = require_discrete(sf, "staticgain");
    staticgain::SearchConfig cfg;
    cfg.seed = sf.config.seed;
    const auto result = staticgain::max_static_gain_erasure(spec, cfg);
    json report{{"p_lower_bound", result.p_lower_bound},
                {"budget_exhausted", result.budget_exhausted},
                {"K", matrix_json(result.best_K.K)}};
    write_text(dir / "staticgain.json", report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return 0;
  } catch (const spectral::EnumerationCapError& e) {
    std::cerr << "analysis infeasible: " << e.what() << '\n';
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace ikf::cli
