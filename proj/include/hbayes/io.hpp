#pragma once

// On-disk formats: event JSON Lines, ground-truth sidecar, checkpoints,
// metrics reports and ELBO traces. Layouts are documented in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hbayes/evaluation.hpp"
#include "hbayes/generator.hpp"
#include "hbayes/inference.hpp"
#include "hbayes/model.hpp"

namespace hbayes {

struct LoadedEvents {
  Dataset dataset;
  std::vector<std::string> user_ids;   // dense index -> original id
  std::vector<std::string> brand_ids;
};

// One {"user","brand","y","x"} object per line. Ids are dictionary-encoded
// in first-seen order; d comes from the first line. Blank lines are skipped.
LoadedEvents read_events(std::istream& in);
LoadedEvents load_events(const std::filesystem::path& path);

// Writes user/brand ids as the given names, or "u<k>" / "b<i>" when empty.
void write_events(std::ostream& out, const Dataset& data,
                  const std::vector<std::string>& user_ids = {},
                  const std::vector<std::string>& brand_ids = {});
void save_events(const std::filesystem::path& path, const Dataset& data,
                 const std::vector<std::string>& user_ids = {},
                 const std::vector<std::string>& brand_ids = {});

std::string default_user_id(int k);
std::string default_brand_id(int i);

// FNV-1a 64 over name + '\x1f' + value, then the MurmurHash3 fmix64
// finalizer. Exposed so the hash is pinned by tests.
std::uint64_t feature_hash(const std::string& name, const std::string& value);

// Signed feature hashing: bucket = hash % width, sign = top bit of hash.
Vector hash_features(const std::vector<std::pair<std::string, std::string>>& tokens, int width);

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  HyperParams hyperparams;
  VariationalState state;
  int num_users = 0;
  int num_brands = 0;
  int num_styles = 0;
  int feature_dim = 0;
  std::vector<std::string> user_ids;
  std::vector<std::string> brand_ids;
  FitReport report;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws InvariantError on version mismatch or any state invariant violation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_trace_csv(const std::filesystem::path& path, const FitReport& report);

std::string metrics_report_json(const CrossValidationReport& report);
void save_metrics_report(const std::filesystem::path& path, const CrossValidationReport& report);

}  // namespace hbayes
