#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hpf/ingest.hpp"
#include "hpf/neural/model.hpp"
#include "hpf/seriesprep.hpp"

namespace hpf::neural {

/// JSON container: architecture, seed, every tensor in column-major order, and what
/// a forecast needs to map back to prices. Doubles are written in shortest round-trip
/// form, so a save/load cycle is bit-exact.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  Model<double> model;
  std::uint64_t seed = 0;
  Index window_len = 15;
  std::optional<prep::NormalizationParams> normalization;
  std::vector<std::string> districts;
  std::optional<ingest::YearMonth> last_month;
};

void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
/// Throws FormatError on malformed input or a version mismatch.
Checkpoint load_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hpf::neural
