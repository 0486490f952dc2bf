#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tailr/sequence.hpp"
#include "tailr/synth.hpp"

namespace tailr {

// shortest decimal form that round-trips the double exactly
std::string format_double(double v);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);

// simple CSV: header row, then format_double for numeric cells
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  void save(const std::string& path) const;
  const std::string& text() const { return buf_; }

 private:
  std::size_t columns_;
  std::string buf_;
};

// one line per sequence: space-separated body token ids (EOS implicit)
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path, std::size_t vocab);

// datasets + JSON manifest (format version, oracle hash, seed, counts)
struct SynthPaths {
  std::string train, dev, test, manifest;
};
SynthPaths save_synth(const SynthData& data, std::uint64_t oracle_hash,
                      const std::string& out_dir);

void save_traces(const std::vector<PerturbationTrace>& traces,
                 const std::string& path);

// run manifest: config hash, timestamps, and the content hash of every
// output file; written to a temp file and renamed into place
void write_run_manifest(const std::string& path,
                        const std::string& config_json,
                        const std::string& tool_version,
                        const std::string& started,
                        const std::string& finished,
                        const std::vector<std::string>& files);

}  // namespace tailr
