#include "emcom/runio.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "emcom/errors.hpp"
#include "json.hpp"

namespace emcom::runio {

namespace fs = std::filesystem;

RunPaths resolve_run_dir(const std::string& out_flag, const std::string& run_name) {
  fs::path root;
  if (!out_flag.empty()) {
    root = out_flag;
  } else {
    if (run_name.empty())
      throw UsageError("a run needs either --out or a run name");
    const char* env_root = std::getenv("EMCOM_OUTPUT_ROOT");
    root = fs::path(env_root && *env_root ? env_root : "runs") / run_name;
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec)
    throw ArtifactError("cannot create run directory " + root.string() + ": " + ec.message());
  return RunPaths{root};
}

RunLock::RunLock(const RunPaths& run) : path_(run.lock()) {
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw UsageError("run directory " + run.root.string() +
                       " is locked by another writer; remove " + path_.string() +
                       " if no other process is using it");
    throw ArtifactError("cannot create lock file " + path_.string() + ": " +
                        std::strerror(errno));
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  ssize_t written = ::write(fd, pid.data(), pid.size());
  (void)written;
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

static std::string join_cells(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line;
}

static std::string header_line(const CsvSchema& schema, const std::string& config_hash,
                               const std::string& env_hash) {
  std::string line = "# emcom " + schema.name + " v" + std::to_string(schema.version);
  if (!config_hash.empty()) line += " config=" + config_hash;
  if (!env_hash.empty()) line += " env=" + env_hash;
  return line;
}

CsvWriter::CsvWriter(const fs::path& path, const CsvSchema& schema,
                     const std::string& config_hash, const std::string& env_hash)
    : path_(path.string()), schema_(schema) {
  bool fresh = !fs::exists(path);
  if (!fresh) {
    CsvFile existing = read_csv(path);
    if (existing.schema.name != schema.name || existing.schema.version != schema.version)
      throw ArtifactError(path_ + " holds schema '" + existing.schema.name + "' v" +
                          std::to_string(existing.schema.version) + ", expected '" +
                          schema.name + "' v" + std::to_string(schema.version));
    if (existing.schema.columns != schema.columns)
      throw ArtifactError(path_ + " has a different column set than expected");
  }
  f_ = std::fopen(path_.c_str(), "a");
  if (!f_)
    throw ArtifactError("cannot open " + path_ + " for writing: " + std::strerror(errno));
  // One write per line, so a killed process can tear at most the final row.
  std::setvbuf(f_, nullptr, _IOLBF, 1 << 16);
  if (fresh) {
    std::string head = header_line(schema, config_hash, env_hash) + "\n" +
                       join_cells(schema.columns) + "\n";
    std::fwrite(head.data(), 1, head.size(), f_);
  }
}

CsvWriter::~CsvWriter() {
  if (f_) std::fclose(f_);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != schema_.columns.size())
    throw ArtifactError(path_ + ": row has " + std::to_string(cells.size()) +
                        " cells, schema has " + std::to_string(schema_.columns.size()) +
                        " columns");
  std::string line = join_cells(cells) + "\n";
  std::fwrite(line.data(), 1, line.size(), f_);
}

void CsvWriter::flush() {
  if (f_) std::fflush(f_);
}

static std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

CsvFile read_csv(const fs::path& path, bool drop_torn_tail) {
  std::ifstream in(path);
  if (!in)
    throw ArtifactError("cannot open " + path.string());
  std::string head;
  if (!std::getline(in, head))
    throw ArtifactError(path.string() + " is empty");
  CsvFile out;
  // "# emcom <name> v<version> config=<hash> env=<hash>"
  std::istringstream hs(head);
  std::string hash_tag, tool, version;
  hs >> hash_tag >> tool >> out.schema.name >> version;
  bool ok = hash_tag == "#" && tool == "emcom" && version.size() > 1 && version[0] == 'v';
  if (ok) {
    try {
      out.schema.version = std::stoi(version.substr(1));
    } catch (const std::exception&) {
      ok = false;
    }
  }
  std::string kv;
  while (ok && hs >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      ok = false;
      break;
    }
    std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (key == "config")
      out.config_hash = value;
    else if (key == "env")
      out.env_hash = value;
  }
  if (!ok)
    throw ArtifactError(path.string() + " lacks a versioned schema header");
  std::string columns;
  if (!std::getline(in, columns))
    throw ArtifactError(path.string() + " has no column header");
  out.schema.columns = split_csv(columns);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(std::move(line));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto cells = split_csv(lines[i]);
    if (cells.size() != out.schema.columns.size()) {
      if (drop_torn_tail && i + 1 == lines.size()) break;
      throw ArtifactError(path.string() + ": row with " + std::to_string(cells.size()) +
                          " cells does not match " +
                          std::to_string(out.schema.columns.size()) + " columns");
    }
    out.rows.push_back(std::move(cells));
  }
  return out;
}

void truncate_series(const fs::path& path, long long max_first_column) {
  CsvFile file = read_csv(path, /*drop_torn_tail=*/true);
  fs::path part = path;
  part += ".part";
  {
    std::ofstream out(part, std::ios::trunc);
    if (!out)
      throw ArtifactError("cannot open " + part.string() + " for writing");
    out << header_line(file.schema, file.config_hash, file.env_hash) << "\n"
        << join_cells(file.schema.columns) << "\n";
    for (const auto& row : file.rows) {
      long long first = 0;
      try {
        first = std::stoll(row.front());
      } catch (const std::exception&) {
        throw ArtifactError(path.string() + ": first column '" + row.front() +
                            "' is not an integer; cannot truncate the series");
      }
      if (first <= max_first_column)
        out << join_cells(row) << "\n";
    }
  }
  fs::rename(part, path);
}

void append_event(const fs::path& file, const std::string& event,
                  const std::map<std::string, std::string>& fields) {
  nlohmann::json obj;
  obj["event"] = event;
  for (const auto& [k, v] : fields) obj[k] = v;
  if (!obj.contains("time")) {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    obj["time"] = buf;
  }
  std::ofstream out(file, std::ios::app);
  if (!out)
    throw ArtifactError("cannot open " + file.string() + " for appending");
  out << obj.dump() << "\n";
}

}  // namespace emcom::runio
