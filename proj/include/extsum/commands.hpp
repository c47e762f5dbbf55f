#pragma once

// Subcommand implementations behind the `extsum` executable. Each returns
// the process exit status; diagnostics go to `err`.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "extsum/model.hpp"
#include "extsum/parallel.hpp"
#include "extsum/pipeline.hpp"

namespace extsum {

// Bad invocation; mapped to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything a train/evaluate run needs. Loaded from a flat JSON object (keys
// listed in README.md, relative paths resolve against the file's directory);
// command-line flags override file values.
struct RunConfig {
  RunConfig() { train.threads = default_threads(); }

  ModelConfig model;
  TrainConfig train;
  bool model_overridden = false;  // any model key given explicitly

  std::filesystem::path train_path, val_path, test_path;
  std::filesystem::path embeddings_path;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path report_dir;
  std::optional<std::uint64_t> seed;
  std::size_t vocab_cap = 50000;
  std::size_t max_sentences = 500;
  std::size_t n_trials = 10000;
  std::vector<std::size_t> bucket_edges;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view json_text);
// Applies one key/value pair with the same rules as the config file.
void set_run_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

std::vector<std::size_t> parse_bucket_edges(std::string_view text);

struct LabelOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  std::size_t length_limit = 200;
  std::size_t max_sentences = 500;
  std::size_t threads = 1;
};
int cmd_label(const LabelOptions& options, std::ostream& err);

int cmd_train(const RunConfig& cfg, std::ostream& err);

int cmd_evaluate(const RunConfig& cfg, std::ostream& err);

struct SummarizeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::size_t length_limit = 200;
  std::size_t max_sentences = 500;
  bool verbose = false;
};
int cmd_summarize(const SummarizeOptions& options, std::ostream& out, std::ostream& err);

int cmd_rouge(const std::filesystem::path& hypothesis, const std::filesystem::path& reference, std::ostream& out);

struct CompareOptions {
  std::vector<std::filesystem::path> reports;
  std::size_t n_trials = 10000;
  std::optional<std::uint64_t> seed;
  double alpha = 0.01;
};
int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err);

}  // namespace extsum
