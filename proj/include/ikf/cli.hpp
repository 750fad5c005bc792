#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ikf/model.hpp"
#include "ikf/sampling.hpp"
#include "ikf/spectral.hpp"

namespace ikf::cli {

// Documented default seed for every randomized command.
inline constexpr std::uint64_t kDefaultSeed = 1;

// Thrown on schema violations; messages carry the offending field path.
class SpecError : public std::runtime_error {
 public:
  explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

struct AnalysisConfig {
  double tol = model::kDefaultRankTol;
  std::int64_t max_period = spectral::kMaxPeriod;
  std::int64_t max_den = 64;  // denominator cap when classifying {re, im} phases
  std::uint64_t seed = kDefaultSeed;
};

enum class SpecKind { kDiscrete, kContinuous, kParallel };

[[nodiscard]] std::string to_string(SpecKind kind);

struct SpecFile {
  std::string schema_version = "1";
  SpecKind kind = SpecKind::kDiscrete;
  std::optional<model::SystemSpec> discrete;
  std::optional<sampling::ContinuousSpec> continuous;
  std::optional<spectral::ParallelSpec> parallel;
  AnalysisConfig config;
  bool has_config = false;
  std::vector<std::string> warnings;  // normalizations applied while parsing
};

// Strict schema: unknown fields are rejected, eigenvalues accept
// {mag, phase_num, phase_den}, {mag, theta} or {re, im}, and unreduced
// rational phases are normalized with a warning.
[[nodiscard]] SpecFile parse_spec(const std::string& path);
[[nodiscard]] SpecFile parse_spec_json(const nlohmann::json& j);

// Inverse of parsing up to phase classification: rational phases serialize in
// polar-rational form, irrational ones as {mag, theta}; re-parsing the result
// yields an identical spec.
[[nodiscard]] nlohmann::json serialize_spec(const SpecFile& spec);

// Grid syntax: "lo:hi:step" (inclusive endpoints within 1e-12) or a
// comma-separated list; values must be strictly ascending within [0, 1].
[[nodiscard]] std::vector<double> parse_grid(const std::string& text);

// Dispatches argv to the subcommands (analyze, simulate, sweep, sample,
// staticgain). Exit codes: 0 success, 1 input error, 2 enumeration cap hit.
int run_main(int argc, const char* const* argv);

}  // namespace ikf::cli
