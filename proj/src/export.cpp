#include "emcom/export.hpp"

#include <algorithm>
#include <map>

#include "emcom/errors.hpp"
#include "emcom/runio.hpp"

namespace emcom::report {

namespace fs = std::filesystem;
using runio::CsvFile;
using runio::CsvSchema;
using runio::CsvWriter;

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::Training: return "training";
    case Kind::Saliency: return "saliency";
    case Kind::Sensitivity: return "sensitivity";
    case Kind::Noise: return "noise";
    case Kind::Probes: return "probes";
  }
  throw UsageError("unknown export kind");
}

Kind kind_from_name(const std::string& name) {
  for (Kind k : all_kinds())
    if (name == kind_name(k)) return k;
  throw UsageError("unknown export kind '" + name +
                   "' (expected training, saliency, sensitivity, noise, or probes)");
}

std::vector<Kind> all_kinds() {
  return {Kind::Training, Kind::Saliency, Kind::Sensitivity, Kind::Noise, Kind::Probes};
}

namespace {

std::vector<fs::path> sources_for(const runio::RunPaths& run, Kind kind) {
  switch (kind) {
    case Kind::Training: return {run.training_csv()};
    case Kind::Saliency: return {run.saliency_csv(), run.saliency_summary_csv()};
    case Kind::Sensitivity: return {run.sensitivity_csv()};
    case Kind::Noise: return {run.noise_csv()};
    case Kind::Probes: return {run.probe_results_csv()};
  }
  throw UsageError("unknown export kind");
}

struct LoadedRun {
  std::string name;
  CsvFile file;
};

// Loads the same artifact from every run and enforces a shared schema,
// column set, and environment hash.
std::vector<LoadedRun> load_all(const std::vector<RunRef>& runs,
                                const std::string& expected_schema,
                                const std::vector<fs::path>& paths) {
  std::vector<LoadedRun> loaded;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CsvFile file = runio::read_csv(paths[i]);
    if (file.schema.name != expected_schema)
      throw ArtifactError(paths[i].string() + " holds schema '" + file.schema.name +
                          "', expected '" + expected_schema + "'");
    if (file.env_hash.empty())
      throw ArtifactError(paths[i].string() + " does not record an environment hash");
    if (!loaded.empty()) {
      if (file.env_hash != loaded.front().file.env_hash)
        throw ConfigError("cannot merge runs with different environment settings: run '" +
                          loaded.front().name + "' has env=" + loaded.front().file.env_hash +
                          ", run '" + runs[i].name + "' has env=" + file.env_hash);
      if (file.schema.columns != loaded.front().file.schema.columns)
        throw ArtifactError(paths[i].string() + " has a different column set than run '" +
                            loaded.front().name + "'");
    }
    loaded.push_back({runs[i].name, std::move(file)});
  }
  return loaded;
}

fs::path write_concat(const std::vector<LoadedRun>& loaded, const fs::path& out_dir,
                      const std::string& out_name, const std::string& schema_name) {
  CsvSchema schema;
  schema.name = schema_name;
  schema.columns = {"run", "config"};
  for (const auto& c : loaded.front().file.schema.columns) schema.columns.push_back(c);
  fs::path out = out_dir / out_name;
  fs::remove(out);
  CsvWriter writer(out, schema, "", loaded.front().file.env_hash);
  for (const auto& run : loaded) {
    for (const auto& row : run.file.rows) {
      std::vector<std::string> cells = {run.name, run.file.config_hash};
      cells.insert(cells.end(), row.begin(), row.end());
      writer.row(cells);
    }
  }
  return out;
}

int column_index(const CsvFile& file, const std::string& name, const fs::path& path) {
  auto it = std::find(file.schema.columns.begin(), file.schema.columns.end(), name);
  if (it == file.schema.columns.end())
    throw ArtifactError(path.string() + " has no '" + name + "' column");
  return static_cast<int>(it - file.schema.columns.begin());
}

fs::path write_noise_pivot(const std::vector<LoadedRun>& loaded,
                           const std::vector<RunRef>& runs, const fs::path& out_dir) {
  static const std::vector<std::string> kConditions = {"none", "below_T", "above_T", "always"};
  CsvSchema schema;
  schema.name = "export_noise";
  schema.columns = {"run", "config"};
  for (const auto& c : kConditions) schema.columns.push_back(c);
  fs::path out = out_dir / "noise_summary.csv";
  fs::remove(out);
  CsvWriter writer(out, schema, "", loaded.front().file.env_hash);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const CsvFile& file = loaded[i].file;
    const fs::path src = sources_for(runio::RunPaths{runs[i].root}, Kind::Noise).front();
    int cond_col = column_index(file, "condition", src);
    int reward_col = column_index(file, "mean_reward", src);
    std::map<std::string, std::string> rewards;
    for (const auto& row : file.rows) {
      if (!rewards.emplace(row[cond_col], row[reward_col]).second)
        throw ArtifactError(src.string() + " lists condition '" + row[cond_col] +
                            "' more than once");
    }
    std::vector<std::string> cells = {loaded[i].name, file.config_hash};
    for (const auto& cond : kConditions) {
      auto it = rewards.find(cond);
      if (it == rewards.end())
        throw ArtifactError(src.string() + " is missing condition '" + cond + "'");
      cells.push_back(it->second);
    }
    if (rewards.size() != kConditions.size())
      throw ArtifactError(src.string() + " lists an unexpected noise condition");
    writer.row(cells);
  }
  return out;
}

}  // namespace

std::vector<fs::path> export_series(const std::vector<RunRef>& runs,
                                    const std::vector<Kind>& kinds,
                                    const fs::path& out_dir) {
  if (runs.empty())
    throw UsageError("export needs at least one run directory");
  if (kinds.empty())
    throw UsageError("export needs at least one artifact kind");

  std::vector<fs::path> missing;
  for (const auto& run : runs) {
    runio::RunPaths paths{run.root};
    for (Kind kind : kinds)
      for (const auto& src : sources_for(paths, kind))
        if (!fs::exists(src)) missing.push_back(src);
  }
  if (!missing.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& p : missing) msg += "\n  " + p.string();
    throw ArtifactError(msg);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw ArtifactError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  for (Kind kind : kinds) {
    std::vector<fs::path> first_sources, second_sources;
    for (const auto& run : runs) {
      auto srcs = sources_for(runio::RunPaths{run.root}, kind);
      first_sources.push_back(srcs[0]);
      if (srcs.size() > 1) second_sources.push_back(srcs[1]);
    }
    switch (kind) {
      case Kind::Training: {
        auto loaded = load_all(runs, "training", first_sources);
        written.push_back(write_concat(loaded, out_dir, "training_curves.csv", "export_training"));
        break;
      }
      case Kind::Saliency: {
        auto series = load_all(runs, "saliency", first_sources);
        written.push_back(write_concat(series, out_dir, "saliency_series.csv", "export_saliency"));
        auto summary = load_all(runs, "saliency_summary", second_sources);
        written.push_back(
            write_concat(summary, out_dir, "saliency_summary.csv", "export_saliency_summary"));
        break;
      }
      case Kind::Sensitivity: {
        auto loaded = load_all(runs, "sensitivity", first_sources);
        written.push_back(
            write_concat(loaded, out_dir, "sensitivity_traces.csv", "export_sensitivity"));
        break;
      }
      case Kind::Noise: {
        auto loaded = load_all(runs, "noise", first_sources);
        written.push_back(write_noise_pivot(loaded, runs, out_dir));
        break;
      }
      case Kind::Probes: {
        auto loaded = load_all(runs, "probe_results", first_sources);
        written.push_back(write_concat(loaded, out_dir, "probe_summary.csv", "export_probes"));
        break;
      }
    }
  }
  return written;
}

}  // namespace emcom::report
