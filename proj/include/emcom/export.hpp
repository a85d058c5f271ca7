#pragma once

// Merges artifacts from several run directories into consolidated comparison
// tables. Runs must share the same environment hash (the channel settings may
// differ, so silent-versus-talking comparisons merge fine); every row of a
// merged table names the run and its config hash.

#include <filesystem>
#include <string>
#include <vector>

namespace emcom::report {

enum class Kind { Training, Saliency, Sensitivity, Noise, Probes };

const char* kind_name(Kind kind);
Kind kind_from_name(const std::string& name);
std::vector<Kind> all_kinds();

struct RunRef {
  std::string name;
  std::filesystem::path root;
};

// Writes one merged CSV per selected kind (two for saliency: the series and
// its summary) under out_dir and returns the files written. All missing
// source artifacts are listed together in one error; differing environment
// hashes refuse the merge.
std::vector<std::filesystem::path> export_series(const std::vector<RunRef>& runs,
                                                 const std::vector<Kind>& kinds,
                                                 const std::filesystem::path& out_dir);

}  // namespace emcom::report
