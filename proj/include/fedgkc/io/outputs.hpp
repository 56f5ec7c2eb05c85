#pragma once

// Run artefacts: metrics.csv, summary.json and checkpoint.bin.
//
// Checkpoint layout (all integers u32 little endian):
//   "FGKC" | version | entry count | entries...
//   entry: name length | name bytes | rows | cols | rows*cols f64 LE, row major

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedgkc/federation.hpp"
#include "fedgkc/io/config.hpp"
#include "fedgkc/io/text.hpp"

namespace fedgkc::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "FGKC";
inline constexpr std::string_view kMetricsHeader = "round,client,arch,copilot_loss,local_loss,test_acc,n_k,p_k,w_k";

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw IoError(path_, "truncated checkpoint at byte " + std::to_string(pos_));
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(b)]);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(b)]);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serialises named tensors in key order.
inline std::string encode_checkpoint(const Parameters& tensors) {
  std::string out(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_f64(out, m.data()[i]);
  }
  return out;
}

inline Parameters decode_checkpoint(std::string_view bytes, const std::filesystem::path& path = "checkpoint") {
  detail::Reader r(bytes, path);
  if (r.take(4) != kCheckpointMagic) throw IoError(path, "not a checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw IoError(path, "unsupported checkpoint version " + std::to_string(v));
  const std::uint32_t count = r.u32();
  Parameters out;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name(r.take(r.u32()));
    const auto rows = r.u32();
    const auto cols = r.u32();
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    if (!out.emplace(std::move(name), std::move(m)).second) throw IoError(path, "duplicate checkpoint entry");
  }
  if (!r.done()) throw IoError(path, "trailing bytes after checkpoint entries");
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path, const Parameters& tensors) {
  write_file(path, encode_checkpoint(tensors));
}

inline Parameters read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path);
}

/// "global/<name>" for the aggregated copilot, "client<k>/<name>" for each
/// local model.
inline Parameters checkpoint_entries(const Federation& fed) {
  Parameters out;
  for (const auto& [name, m] : fed.global_copilot) out.emplace("global/" + name, m);
  for (const auto& s : fed.clients)
    for (const auto& [name, m] : s.local) out.emplace("client" + std::to_string(s.id) + "/" + name, m);
  return out;
}

/// Entries under `prefix/` with the prefix stripped.
inline Parameters checkpoint_group(const Parameters& entries, const std::string& prefix) {
  Parameters out;
  const std::string key = prefix + "/";
  for (const auto& [name, m] : entries)
    if (name.starts_with(key)) out.emplace(name.substr(key.size()), m);
  return out;
}

inline std::string metrics_csv(const std::vector<RoundReport>& reports) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& r : reports)
    for (const auto& c : r.clients) {
      out += std::to_string(r.round) + ',' + std::to_string(c.client) + ',' + c.arch + ',' +
             format_double(c.copilot_loss) + ',' + format_double(c.local_loss) + ',' + format_double(c.test_accuracy) +
             ',' + std::to_string(c.volume) + ',' + format_double(c.knowledge) + ',' + format_double(c.weight) + '\n';
    }
  return out;
}

inline nlohmann::ordered_json summary_json(const RunResult& result, const FederationConfig& cfg) {
  nlohmann::ordered_json j;
  j["rounds_completed"] = result.reports.size();
  j["final_mean_test_accuracy"] = result.reports.empty() ? 0.0 : result.reports.back().mean_test_accuracy;
  if (cfg.select_best_on_val && !result.reports.empty())
    j["best_val_mean_test_accuracy"] = final_mean_accuracy(result.reports, true);
  auto& finals = j["final_client_test_accuracy"] = nlohmann::ordered_json::array();
  if (!result.reports.empty())
    for (const auto& c : result.reports.back().clients) finals.push_back(c.test_accuracy);
  j["aborted"] = result.aborted ? nlohmann::ordered_json(*result.aborted) : nlohmann::ordered_json(nullptr);
  j["config"] = config_to_json(cfg);
  return j;
}

/// Writes metrics.csv, summary.json and checkpoint.bin into `dir`.
inline void write_outputs(const RunResult& result, const FederationConfig& cfg, const std::filesystem::path& dir) {
  if (result.reports.empty()) throw PreconditionError("write_outputs: no round reports");
  ensure_directory(dir);
  write_file(dir / "metrics.csv", metrics_csv(result.reports));
  write_file(dir / "summary.json", summary_json(result, cfg).dump(2) + "\n");
  write_checkpoint(dir / "checkpoint.bin", checkpoint_entries(result.final_state));
}

}  // namespace fedgkc::io
