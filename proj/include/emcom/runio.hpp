#pragma once

// Run-directory plumbing: canonical artifact paths, a single-writer lock,
// versioned CSV artifacts, and an append-only JSONL event log. Every CSV
// starts with one comment line carrying its schema name, schema version, and
// the config/environment hashes of the run that produced it.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace emcom::runio {

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path lock() const { return root / "lock"; }
  std::filesystem::path checkpoint() const { return root / "checkpoint.ckpt"; }
  std::filesystem::path training_csv() const { return root / "training.csv"; }
  std::filesystem::path episodes_csv() const { return root / "episodes.csv"; }
  std::filesystem::path saliency_csv() const { return root / "saliency.csv"; }
  std::filesystem::path saliency_summary_csv() const { return root / "saliency_summary.csv"; }
  std::filesystem::path sensitivity_csv() const { return root / "sensitivity.csv"; }
  std::filesystem::path noise_csv() const { return root / "noise.csv"; }
  std::filesystem::path probe_train_set() const { return root / "probe_train.epd"; }
  std::filesystem::path probe_valid_set() const { return root / "probe_valid.epd"; }
  std::filesystem::path probe_results_csv() const { return root / "probe_results.csv"; }
  std::filesystem::path events() const { return root / "events.jsonl"; }
};

// Chooses the run directory: an explicit --out wins, otherwise the run name
// is placed under $EMCOM_OUTPUT_ROOT, defaulting to ./runs. The directory is
// created.
RunPaths resolve_run_dir(const std::string& out_flag, const std::string& run_name);

// Advisory single-writer lock on a run directory, held for the caller's
// lifetime. A left-over lock from a crashed process must be removed by hand;
// the error says where it is.
class RunLock {
public:
  explicit RunLock(const RunPaths& run);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

private:
  std::filesystem::path path_;
};

struct CsvSchema {
  std::string name;
  int version = 1;
  std::vector<std::string> columns;
};

// Creates the file with its header when absent; appends otherwise, after
// verifying the existing header announces the same schema and version.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const CsvSchema& schema,
            const std::string& config_hash, const std::string& env_hash);

  void row(const std::vector<std::string>& cells);
  void flush();

private:
  std::string path_;
  CsvSchema schema_;
  FILE* f_ = nullptr;

public:
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;
};

struct CsvFile {
  CsvSchema schema;
  std::string config_hash;
  std::string env_hash;
  std::vector<std::vector<std::string>> rows;
};

// Parses an artifact CSV, including its header comment. Malformed or
// unversioned files are refused. `drop_torn_tail` forgives one malformed
// final line — the signature a crashed writer leaves behind.
CsvFile read_csv(const std::filesystem::path& path, bool drop_torn_tail = false);

// Drops data rows whose first column exceeds `max_first_column` (used to cut
// a series back to the state of a checkpoint before resuming), along with any
// torn final line from a crash.
void truncate_series(const std::filesystem::path& path, long long max_first_column);

// Appends one JSON object per line; a "time" field (UTC, ISO 8601) is added
// unless the caller already set one.
void append_event(const std::filesystem::path& file, const std::string& event,
                  const std::map<std::string, std::string>& fields = {});

}  // namespace emcom::runio
