#include "tailr/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tailr {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += header[i];
  }
  buf_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw std::invalid_argument("csv row width mismatch");
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += cells[i];
  }
  buf_ += '\n';
}

void CsvWriter::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << buf_;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& seq : data) {
    for (std::size_t i = 0; i + 1 < seq.tokens.size(); ++i) {
      if (i) out << ' ';
      out << seq.tokens[i];
    }
    out << '\n';
  }
}

Dataset load_dataset(const std::string& path, std::size_t vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Dataset data;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::size_t> body;
    std::size_t tok;
    while (ls >> tok) body.push_back(tok);
    body.push_back(kEosId);
    TokenSequence seq{std::move(body), {}};
    seq.validate(vocab);
    data.push_back(std::move(seq));
  }
  return data;
}

SynthPaths save_synth(const SynthData& data, std::uint64_t oracle_hash,
                      const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  SynthPaths paths;
  paths.train = (fs::path(out_dir) / "train.txt").string();
  paths.dev = (fs::path(out_dir) / "dev.txt").string();
  paths.test = (fs::path(out_dir) / "test.txt").string();
  paths.manifest = (fs::path(out_dir) / "data_manifest.json").string();
  save_dataset(data.train, paths.train);
  save_dataset(data.dev, paths.dev);
  save_dataset(data.test, paths.test);

  nlohmann::ordered_json m;
  m["format_version"] = 1;
  m["oracle_hash"] = hex64(oracle_hash);
  m["seed"] = data.seed;
  m["max_len"] = data.max_len;
  m["resample_count"] = data.resample_count;
  m["counts"] = {{"train", data.train.size()},
                 {"dev", data.dev.size()},
                 {"test", data.test.size()}};
  m["files"] = {{"train", hex64(fnv1a64_file(paths.train))},
                {"dev", hex64(fnv1a64_file(paths.dev))},
                {"test", hex64(fnv1a64_file(paths.test))}};
  std::ofstream out(paths.manifest, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + paths.manifest);
  out << m.dump(2) << '\n';
  return paths;
}

void save_traces(const std::vector<PerturbationTrace>& traces,
                 const std::string& path) {
  CsvWriter csv({"origin_id", "step", "kind", "length", "log_p_o",
                 "log_p_theta", "error"});
  for (const auto& tr : traces) {
    csv.row({std::to_string(tr.origin_id), "0", "origin",
             std::to_string(tr.origin.tokens.size() - 1),
             format_double(tr.origin_log_po),
             format_double(tr.origin_log_ptheta),
             format_double(tr.origin_log_ptheta - tr.origin_log_po)});
    for (std::size_t i = 0; i < tr.variants.size(); ++i) {
      const auto& v = tr.variants[i];
      csv.row({std::to_string(tr.origin_id), std::to_string(i + 1),
               perturb_kind_name(v.kind),
               std::to_string(v.seq.tokens.size() - 1),
               format_double(v.log_po), format_double(v.log_ptheta),
               format_double(v.error)});
    }
  }
  csv.save(path);
}

void write_run_manifest(const std::string& path,
                        const std::string& config_json,
                        const std::string& tool_version,
                        const std::string& started,
                        const std::string& finished,
                        const std::vector<std::string>& files) {
  nlohmann::ordered_json m;
  m["format_version"] = 1;
  m["tool_version"] = tool_version;
  m["config_hash"] =
      hex64(fnv1a64(config_json.data(), config_json.size()));
  m["started"] = started;
  m["finished"] = finished;
  nlohmann::ordered_json fl = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    fl.push_back({{"path", std::filesystem::path(f).filename().string()},
                  {"fnv1a64", hex64(fnv1a64_file(f))}});
  }
  m["files"] = fl;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << m.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tailr
